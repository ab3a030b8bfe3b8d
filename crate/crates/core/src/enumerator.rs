//! Exhaustive small-`n` studies over all of `S_n`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::nearmax_theorem_bound;
use crate::combinatorics::{
    ball_size, ball_size_upper_bound, check_delta, log_factorial, RencontresTable,
};
use crate::field::{agreements, for_each_permutation, CostMatrix, FieldValue, Permutation};
use crate::montecarlo::{chunked_reduce, estimate_max_mean, replication_seed, stream_seed};
use crate::stats::RunningStats;
use crate::{Error, Result};

/// Largest `n` whose field is enumerated (`9! = 362880` values).
pub const ENUMERATION_MAX_N: usize = 9;
/// Largest `n` for exhaustive correlation histograms and ball counts.
pub const HISTOGRAM_MAX_N: usize = 8;

fn guard(n: usize, limit: usize, what: &'static str, hint: &'static str) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    if n > limit {
        return Err(Error::TooLarge {
            what,
            n,
            limit,
            hint,
        });
    }
    Ok(())
}

/// Every `(u, g_u)` in lexicographic order of `u`.
pub fn enumerate_field(c: &CostMatrix) -> Result<Vec<(Permutation, FieldValue)>> {
    guard(
        c.n(),
        ENUMERATION_MAX_N,
        "enumerate_field",
        "use the solvers or Monte Carlo",
    )?;
    let scale = (c.n() as f64).sqrt().recip();
    let mut out = Vec::new();
    for_each_permutation(c.n(), |u| {
        out.push((
            Permutation::from_zero_based_unchecked(u.to_vec()),
            c.raw_sum_zero_based(u) * scale,
        ));
    });
    Ok(out)
}

/// Field values alone, in the same order as [`enumerate_field`].
pub fn field_values(c: &CostMatrix) -> Result<Vec<FieldValue>> {
    guard(
        c.n(),
        ENUMERATION_MAX_N,
        "field_values",
        "use the solvers or Monte Carlo",
    )?;
    let scale = (c.n() as f64).sqrt().recip();
    let mut out = Vec::new();
    for_each_permutation(c.n(), |u| out.push(c.raw_sum_zero_based(u) * scale));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NearMaxReport {
    pub n: usize,
    pub epsilon: f64,
    pub m_used: f64,
    /// `|{u : g_u > (1 - epsilon) m_used}|`.
    pub set_size: u64,
    /// `ln(set_size) / ln(n!)`; `None` for the empty set, `0` when `n = 1`.
    pub dimension: Option<f64>,
    pub empty: bool,
}

impl NearMaxReport {
    fn from_count(n: usize, epsilon: f64, m_used: f64, set_size: u64) -> Self {
        let dimension = (set_size > 0).then(|| log_dimension(n, set_size));
        Self {
            n,
            epsilon,
            m_used,
            set_size,
            dimension,
            empty: set_size == 0,
        }
    }
}

fn log_dimension(n: usize, size: u64) -> f64 {
    let denom = log_factorial(n as u64);
    if denom == 0.0 {
        0.0
    } else {
        (size as f64).ln() / denom
    }
}

/// Number of values strictly above the near-max threshold `(1 - eps) m`.
fn count_above(values: &[f64], eps: f64, m: f64) -> u64 {
    let threshold = (1.0 - eps) * m;
    values.iter().filter(|&&g| g > threshold).count() as u64
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

pub fn near_maximal_set(c: &CostMatrix, eps: f64, m_used: f64) -> Result<NearMaxReport> {
    check_eps(eps)?;
    if !m_used.is_finite() {
        return Err(Error::OutOfRange(format!(
            "m_used = {m_used} must be finite"
        )));
    }
    let values = field_values(c)?;
    Ok(NearMaxReport::from_count(
        c.n(),
        eps,
        m_used,
        count_above(&values, eps, m_used),
    ))
}

/// Settings of [`dimension_study`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionStudy {
    pub n_list: Vec<usize>,
    pub eps_list: Vec<f64>,
    /// Matrices enumerated per `n`.
    pub replications: u64,
    /// Replications of the separate pass estimating `m = E(M_n)`.
    pub m_replications: u64,
    pub master_seed: u64,
    pub c_small: f64,
    pub c_large: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionRow {
    pub n: usize,
    pub epsilon: f64,
    pub m_used: f64,
    pub m_se: f64,
    pub m_replications: u64,
    pub replications: u64,
    pub empty_frac: f64,
    /// Mean of `ln |A|` over the matrices with `A` nonempty.
    pub mean_log_size_nonempty: f64,
    pub se: f64,
    /// `mean_log_size_nonempty / ln(n!)`.
    pub dimension: f64,
    pub dimension_se: f64,
    /// Mean of `ln |A| 1{A nonempty}` over all matrices.
    pub mean_log_size_indicator: f64,
    pub bound_small: Option<f64>,
    pub bound_large: Option<f64>,
    /// Dimension with `m_used - 2 m_se` as the plug-in.
    pub dimension_m_minus_2se: f64,
    /// Dimension with `m_used + 2 m_se` as the plug-in.
    pub dimension_m_plus_2se: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct EpsAccumulator {
    nonempty: RunningStats,
    all: RunningStats,
    low: RunningStats,
    high: RunningStats,
}

impl EpsAccumulator {
    fn merge(&self, o: &Self) -> Self {
        Self {
            nonempty: self.nonempty.merge(&o.nonempty),
            all: self.all.merge(&o.all),
            low: self.low.merge(&o.low),
            high: self.high.merge(&o.high),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct StudyAccumulator(Vec<EpsAccumulator>);

/// Per-matrix counts for each `eps`: at `m`, `m - 2se` and `m + 2se`.
type MatrixCounts = Vec<[u64; 3]>;

impl StudyAccumulator {
    fn push(&mut self, counts: &MatrixCounts) {
        if self.0.is_empty() {
            self.0 = vec![EpsAccumulator::default(); counts.len()];
        }
        for (acc, &[mid, low, high]) in self.0.iter_mut().zip(counts) {
            let ln = |s: u64| (s as f64).ln();
            if mid > 0 {
                acc.nonempty.push(ln(mid));
            }
            acc.all.push(if mid > 0 { ln(mid) } else { 0.0 });
            if low > 0 {
                acc.low.push(ln(low));
            }
            if high > 0 {
                acc.high.push(ln(high));
            }
        }
    }

    fn merge(&self, o: &Self) -> Self {
        if self.0.is_empty() {
            return o.clone();
        }
        if o.0.is_empty() {
            return self.clone();
        }
        Self(self.0.iter().zip(&o.0).map(|(a, b)| a.merge(b)).collect())
    }
}

/// Expected near-max dimension per `(n, eps)`.
///
/// For each `n`, `m = E(M_n)` is first estimated on sub-stream `2n` of the
/// master seed; the `replications` enumerated matrices come from sub-stream
/// `2n + 1`.
pub fn dimension_study(cfg: &DimensionStudy) -> Result<Vec<DimensionRow>> {
    for &eps in &cfg.eps_list {
        check_eps(eps)?;
    }
    if cfg.eps_list.is_empty() {
        return Err(Error::OutOfRange("eps grid is empty".into()));
    }
    if cfg.replications < 2 {
        return Err(Error::OutOfRange(
            "dimension study needs at least 2 replications".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        guard(
            n,
            ENUMERATION_MAX_N,
            "dimension_study",
            "enumeration is capped at n = 9",
        )?;
        let m = estimate_max_mean(
            n,
            cfg.m_replications,
            stream_seed(cfg.master_seed, 2 * n as u64),
        )?;
        let (m_used, m_se) = (m.mean, m.se_mean);
        let matrix_stream = stream_seed(cfg.master_seed, 2 * n as u64 + 1);
        let acc: StudyAccumulator = chunked_reduce(
            cfg.replications,
            |k| {
                let values =
                    field_values(&CostMatrix::sample(n, replication_seed(matrix_stream, k))?)?;
                Ok(cfg
                    .eps_list
                    .iter()
                    .map(|&eps| {
                        [
                            count_above(&values, eps, m_used),
                            count_above(&values, eps, m_used - 2.0 * m_se),
                            count_above(&values, eps, m_used + 2.0 * m_se),
                        ]
                    })
                    .collect::<MatrixCounts>())
            },
            StudyAccumulator::push,
            StudyAccumulator::merge,
        )?;
        let ln_nfact = log_factorial(n as u64);
        let dim = |x: f64| if ln_nfact == 0.0 { 0.0 } else { x / ln_nfact };
        for (&eps, a) in cfg.eps_list.iter().zip(&acc.0) {
            let bound = if n >= 2 {
                Some(nearmax_theorem_bound(n, eps, cfg.c_small, cfg.c_large)?)
            } else {
                None
            };
            rows.push(DimensionRow {
                n,
                epsilon: eps,
                m_used,
                m_se,
                m_replications: cfg.m_replications,
                replications: cfg.replications,
                empty_frac: 1.0 - a.nonempty.count as f64 / cfg.replications as f64,
                mean_log_size_nonempty: mean_or_nan(&a.nonempty),
                se: a.nonempty.se_mean(),
                dimension: dim(mean_or_nan(&a.nonempty)),
                dimension_se: dim(a.nonempty.se_mean()),
                mean_log_size_indicator: a.all.mean,
                bound_small: bound.map(|b| b.small_form),
                bound_large: bound.map(|b| b.large_form),
                dimension_m_minus_2se: dim(mean_or_nan(&a.low)),
                dimension_m_plus_2se: dim(mean_or_nan(&a.high)),
            });
        }
    }
    Ok(rows)
}

fn mean_or_nan(s: &RunningStats) -> f64 {
    if s.count == 0 {
        f64::NAN
    } else {
        s.mean
    }
}

/// Agreement histogram of `S_n` against `reference`.
pub fn correlation_histogram_for(reference: &Permutation) -> Result<RencontresTable> {
    let n = reference.len();
    guard(
        n,
        HISTOGRAM_MAX_N,
        "correlation_histogram",
        "use combinatorics::rencontres_count",
    )?;
    let mut counts = vec![0u64; n + 1];
    let r = reference.as_zero_based();
    for_each_permutation(n, |v| counts[agreements(r, v)] += 1);
    Ok(RencontresTable { n, counts })
}

/// Agreement histogram of `S_n` against the identity.
pub fn correlation_histogram_exact(n: usize) -> Result<RencontresTable> {
    guard(
        n,
        HISTOGRAM_MAX_N,
        "correlation_histogram_exact",
        "use combinatorics::rencontres_count",
    )?;
    correlation_histogram_for(&Permutation::identity(n)?)
}

/// Whether the histograms around `count` random references drawn from `seed`
/// all equal the one around the identity.
pub fn histogram_is_reference_invariant(n: usize, seed: u64, count: usize) -> Result<bool> {
    let base = correlation_histogram_exact(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        if correlation_histogram_for(&Permutation::random(n, &mut rng)?)? != base {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallCheck {
    pub n: usize,
    pub delta: f64,
    pub references: Vec<Permutation>,
    /// Exhaustive ball count around each reference.
    pub counts: Vec<u64>,
    pub formula: u64,
    pub upper_bound: f64,
    /// All counts equal `formula` and none exceeds `upper_bound`.
    pub passed: bool,
}

/// Number of `v` with `d_H(u, v) < delta n`, i.e. `corr(u, v) > 1 - delta`.
pub fn ball_count(u: &Permutation, delta: f64) -> Result<u64> {
    let n = u.len();
    guard(
        n,
        HISTOGRAM_MAX_N,
        "ball_count",
        "use combinatorics::ball_size",
    )?;
    check_delta(delta)?;
    let radius = delta * n as f64;
    let r = u.as_zero_based();
    let mut count = 0;
    for_each_permutation(n, |v| {
        if ((n - agreements(r, v)) as f64) < radius {
            count += 1;
        }
    });
    Ok(count)
}

/// Exhaustive ball counts around three random references drawn from `seed`,
/// compared with the rencontres formula and the bound `n^{delta n}`.
pub fn verify_ball_size(n: usize, delta: f64, seed: u64) -> Result<BallCheck> {
    guard(
        n,
        HISTOGRAM_MAX_N,
        "verify_ball_size",
        "use combinatorics::ball_size",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let references = (0..3)
        .map(|_| Permutation::random(n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let counts = references
        .iter()
        .map(|u| ball_count(u, delta))
        .collect::<Result<Vec<_>>>()?;
    let formula = ball_size(n, delta)?;
    let upper_bound = ball_size_upper_bound(n, delta);
    let passed = counts
        .iter()
        .all(|&c| c == formula && c as f64 <= upper_bound);
    Ok(BallCheck {
        n,
        delta,
        references,
        counts,
        formula,
        upper_bound,
        passed,
    })
}

/// Average of `corr(u, v)` over all pairs in `S_n`, as a reduced fraction
/// `(numerator, denominator)`.
pub fn exhaustive_mean_correlation(n: usize) -> Result<(u128, u128)> {
    guard(n, 6, "exhaustive_mean_correlation", "(n!)^2 pairs")?;
    let mut perms = Vec::new();
    for_each_permutation(n, |u| perms.push(u.to_vec()));
    let total_agreements: u128 = perms
        .iter()
        .map(|u| perms.iter().map(|v| agreements(u, v) as u128).sum::<u128>())
        .sum();
    let count = perms.len() as u128;
    let denom = n as u128 * count * count;
    let g = gcd(total_agreements, denom);
    Ok((total_agreements / g, denom / g))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{mean_correlation, rencontres_count};
    use crate::solvers::{solve_max_bruteforce, solve_max_exact};

    #[test]
    fn enumerate_n2() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        let all = enumerate_field(&c).unwrap();
        let r2 = 2f64.sqrt();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].0.one_line(), vec![1, 2]);
        assert!((all[0].1 - 6.0 / r2).abs() < 1e-15);
        assert_eq!(all[1].0.one_line(), vec![2, 1]);
        assert!((all[1].1 - 5.0 / r2).abs() < 1e-15);
    }

    #[test]
    fn enumerate_constant_and_limits() {
        let all = enumerate_field(&CostMatrix::constant(4, 1.0).unwrap()).unwrap();
        assert_eq!(all.len(), 24);
        assert!(all.iter().all(|(_, g)| (g - 2.0).abs() < 1e-15));
        assert!(enumerate_field(&CostMatrix::constant(10, 1.0).unwrap()).is_err());
    }

    #[test]
    fn enumeration_max_matches_solvers() {
        for n in 1..=8 {
            for seed in 0..4 {
                let c = CostMatrix::sample(n, seed).unwrap();
                let best = field_values(&c)
                    .unwrap()
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((best - solve_max_bruteforce(&c).unwrap().field_value).abs() < 1e-9);
                assert!((best - solve_max_exact(&c).unwrap().field_value).abs() < 1e-9);
            }
        }
        let c = CostMatrix::sample(3, 11).unwrap();
        assert_eq!(enumerate_field(&c).unwrap().len(), 6);
    }

    #[test]
    fn field_mean_from_enumeration() {
        for n in 1..=7 {
            let c = CostMatrix::sample(n, 100 + n as u64).unwrap();
            let v = field_values(&c).unwrap();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert!((mean - c.field_mean()).abs() < 1e-10);
        }
    }

    #[test]
    fn near_max_monotone_and_degenerate() {
        for seed in 0..20 {
            let c = CostMatrix::sample(6, seed).unwrap();
            let m = solve_max_exact(&c).unwrap().field_value.abs() + 0.1;
            let sizes: Vec<u64> = (1..20)
                .map(|i| near_maximal_set(&c, i as f64 / 20.0, m).unwrap().set_size)
                .collect();
            assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
            let by_m: Vec<u64> = (0..10)
                .map(|i| near_maximal_set(&c, 0.3, i as f64 * 0.5).unwrap().set_size)
                .collect();
            assert!(by_m.windows(2).all(|w| w[0] >= w[1]));

            let positive = field_values(&c)
                .unwrap()
                .iter()
                .filter(|&&g| g > 0.0)
                .count() as u64;
            for eps in [0.1, 0.5, 0.9] {
                assert_eq!(near_maximal_set(&c, eps, 0.0).unwrap().set_size, positive);
            }
            let near_one = near_maximal_set(&c, 0.999, m).unwrap().set_size;
            assert!(near_one >= near_maximal_set(&c, 0.5, m).unwrap().set_size);
        }
    }

    #[test]
    fn near_max_report_fields() {
        let c = CostMatrix::sample(5, 3).unwrap();
        let top = solve_max_exact(&c).unwrap().field_value;
        let r = near_maximal_set(&c, 0.5, 10.0 * top.abs() + 10.0).unwrap();
        assert!(r.empty && r.dimension.is_none() && r.set_size == 0);
        let r = near_maximal_set(&c, 0.5, -100.0).unwrap();
        assert_eq!(r.set_size, 120);
        assert!((r.dimension.unwrap() - 1.0).abs() < 1e-15);
        assert!(near_maximal_set(&c, 1.0, 1.0).is_err());
        assert!(near_maximal_set(&c, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(
            correlation_histogram_exact(4).unwrap().counts,
            vec![9, 8, 6, 0, 1]
        );
        assert_eq!(
            correlation_histogram_exact(2).unwrap().counts,
            vec![1, 0, 1]
        );
        assert!(correlation_histogram_exact(9).is_err());
    }

    #[test]
    fn histogram_matches_rencontres_for_any_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            let exact = correlation_histogram_exact(n).unwrap();
            assert_eq!(exact.total(), (1..=n as u128).product::<u128>());
            for k in 0..=n {
                assert_eq!(exact.counts[k], rencontres_count(n, k).unwrap());
            }
            for _ in 0..3 {
                let u = Permutation::random(n, &mut rng).unwrap();
                assert_eq!(correlation_histogram_for(&u).unwrap(), exact);
            }
            assert!(histogram_is_reference_invariant(n, n as u64, 3).unwrap());
        }
    }

    #[test]
    fn ball_examples() {
        let b = verify_ball_size(4, 0.3, 0).unwrap();
        assert!(b.passed);
        assert_eq!(b.counts, vec![1, 1, 1]);
        let b = verify_ball_size(5, 0.999, 0).unwrap();
        assert!(b.passed);
        assert_eq!(b.formula, 76);
    }

    #[test]
    fn ball_grid() {
        for n in 1..=8 {
            for i in 1..=9 {
                let b = verify_ball_size(n, i as f64 / 10.0, n as u64).unwrap();
                assert!(b.passed, "{b:?}");
            }
        }
    }

    #[test]
    fn mean_correlation_is_one_over_n() {
        for n in 1..=6 {
            assert_eq!(exhaustive_mean_correlation(n).unwrap(), (1, n as u128));
            assert_eq!(mean_correlation(n).unwrap(), 1.0 / n as f64);
        }
    }

    #[test]
    fn dimension_study_is_deterministic_and_sane() {
        let cfg = DimensionStudy {
            n_list: vec![4, 5],
            eps_list: vec![0.1, 0.9],
            replications: 300,
            m_replications: 2000,
            master_seed: 12,
            c_small: 1.0,
            c_large: 1.0,
        };
        let rows = dimension_study(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows, dimension_study(&cfg).unwrap());
        for r in &rows {
            assert!(r.dimension >= 0.0 && r.dimension <= 1.0);
            assert!(r.empty_frac >= 0.0 && r.empty_frac < 1.0);
            assert!(r.mean_log_size_indicator <= r.mean_log_size_nonempty + 1e-12);
        }
        // eps = 0.9 at n = 4 keeps most permutations (0.69 with these settings).
        assert!(rows[1].dimension > 0.6, "{:?}", rows[1]);
        assert!(rows[1].dimension > rows[0].dimension);
    }
}
