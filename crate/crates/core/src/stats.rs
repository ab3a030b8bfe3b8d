//! Mergeable streaming moments.

use serde::Serialize;

/// Count, mean and central moment sums up to order four.
///
/// Updates follow Welford; [`RunningStats::merge`] uses the pairwise
/// combination formulas of Chan et al. extended to `m3`/`m4` (Pébay 2008), so
/// splitting a stream anywhere and merging gives the single-pass result up to
/// rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;

        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        RunningStats {
            count: self.count + other.count,
            mean,
            m2,
            m3,
            m4,
        }
    }

    /// Unbiased sample variance; `NaN` below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Standard error of [`variance`](Self::variance), from the fourth
    /// central moment: `Var(s^2) ~ (mu4 - s^4 (n - 3) / (n - 1)) / n`.
    pub fn se_variance(&self) -> f64 {
        if self.count < 4 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let s2 = self.variance();
        let mu4 = self.m4 / n;
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n)
            .max(0.0)
            .sqrt()
    }
}

impl Extend<f64> for RunningStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        s.extend(iter);
        s
    }
}

/// Mergeable sample covariance of a paired stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CoMoments {
    pub count: u64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub m2_x: f64,
    pub m2_y: f64,
    /// Sum of `(x - mean_x)(y - mean_y)`.
    pub c_xy: f64,
}

impl CoMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn merge(&self, other: &CoMoments) -> CoMoments {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        CoMoments {
            count: self.count + other.count,
            mean_x: self.mean_x + dx * nb / n,
            mean_y: self.mean_y + dy * nb / n,
            m2_x: self.m2_x + other.m2_x + dx * dx * na * nb / n,
            m2_y: self.m2_y + other.m2_y + dy * dy * na * nb / n,
            c_xy: self.c_xy + other.c_xy + dx * dy * na * nb / n,
        }
    }

    pub fn covariance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.c_xy / (self.count - 1) as f64
    }

    /// Standard error of [`covariance`](Self::covariance) when `x` and `y` are
    /// independent: `sd(x) sd(y) / sqrt(n)`.
    pub fn se_covariance_independent(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n1 = (self.count - 1) as f64;
        ((self.m2_x / n1) * (self.m2_y / n1) / self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    // Two-pass oracle.
    fn two_pass(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        (mean, m(2), m(3), m(4))
    }

    fn stream(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect()
    }

    #[test]
    fn matches_two_pass() {
        let xs = stream(1, 10_000);
        let s: RunningStats = xs.iter().copied().collect();
        let (mean, m2, m3, m4) = two_pass(&xs);
        assert!(rel_close(s.mean, mean, 1e-12));
        assert!(rel_close(s.m2, m2, 1e-10));
        assert!(rel_close(s.m3, m3, 1e-8));
        assert!(rel_close(s.m4, m4, 1e-10));
    }

    #[test]
    fn merge_identity_and_halves() {
        let xs = stream(2, 10_000);
        let whole: RunningStats = xs.iter().copied().collect();
        assert_eq!(whole.merge(&RunningStats::new()), whole);
        assert_eq!(RunningStats::new().merge(&whole), whole);

        let a: RunningStats = xs[..5000].iter().copied().collect();
        let b: RunningStats = xs[5000..].iter().copied().collect();
        let merged = a.merge(&b);
        assert_eq!(merged.count, whole.count);
        assert!(rel_close(merged.mean, whole.mean, 1e-10));
        assert!(rel_close(merged.m2, whole.m2, 1e-10));
        assert!(rel_close(merged.m4, whole.m4, 1e-10));
        let swapped = b.merge(&a);
        assert!(rel_close(merged.mean, swapped.mean, 1e-10));
        assert!(rel_close(merged.m2, swapped.m2, 1e-10));
    }

    #[test]
    fn variance_se_for_gaussian() {
        // For N(0,1) samples Var(s^2) ~ 2 / (n - 1).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: RunningStats = (0..200_000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let expected = (2.0 / (s.count as f64 - 1.0)).sqrt();
        assert!((s.se_variance() / expected - 1.0).abs() < 0.02);
        assert!(RunningStats::new().variance().is_nan());
    }

    #[test]
    fn covariance_against_two_pass() {
        let xs = stream(4, 3000);
        let ys: Vec<f64> = xs
            .iter()
            .zip(stream(5, 3000))
            .map(|(x, z)| 0.5 * x + z)
            .collect();
        let mut c = CoMoments::default();
        for (&x, &y) in xs.iter().zip(&ys) {
            c.push(x, y);
        }
        let mx = xs.iter().sum::<f64>() / 3000.0;
        let my = ys.iter().sum::<f64>() / 3000.0;
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / 2999.0;
        assert!(rel_close(c.covariance(), cov, 1e-11));

        let mut a = CoMoments::default();
        let mut b = CoMoments::default();
        for (k, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            if k < 1234 {
                a.push(x, y)
            } else {
                b.push(x, y)
            }
        }
        assert!(rel_close(a.merge(&b).covariance(), cov, 1e-10));
    }

    proptest! {
        #[test]
        fn any_split_merges_to_single_pass(
            xs in prop::collection::vec(-1e3f64..1e3, 2..400),
            cut in 0usize..400,
        ) {
            let cut = cut.min(xs.len());
            let whole: RunningStats = xs.iter().copied().collect();
            let a: RunningStats = xs[..cut].iter().copied().collect();
            let b: RunningStats = xs[cut..].iter().copied().collect();
            let m = a.merge(&b);
            prop_assert_eq!(m.count, whole.count);
            prop_assert!((m.mean - whole.mean).abs() <= 1e-10 * (1.0 + whole.mean.abs()));
            prop_assert!((m.m2 - whole.m2).abs() <= 1e-10 * (1.0 + whole.m2));
            prop_assert!((m.m4 - whole.m4).abs() <= 1e-9 * (1.0 + whole.m4));
            prop_assert!(m.m2 >= 0.0);
        }
    }
}
