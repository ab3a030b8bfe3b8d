//! Exact permutation counts: rencontres numbers, correlation balls, log-factorials.
//!
//! Exact integer results are available up to [`EXACT_MAX_N`] (20! fits in a
//! `u64`; products go through `u128`). Past that, proportions are evaluated
//! from the alternating series with compensated summation.

use serde::Serialize;

use crate::{Error, Result};

/// Largest `n` for which integer counts are computed exactly.
pub const EXACT_MAX_N: usize = 20;

/// `ln(n!)`.
///
/// Exact up to rounding for `n <= 20`, `libm::lgamma(n + 1)` beyond.
pub fn log_factorial(n: u64) -> f64 {
    if n as usize <= EXACT_MAX_N {
        return (EXACT_FACTORIALS[n as usize] as f64).ln();
    }
    libm::lgamma(n as f64 + 1.0)
}

const EXACT_FACTORIALS: [u64; EXACT_MAX_N + 1] = {
    let mut t = [1u64; EXACT_MAX_N + 1];
    let mut i = 1;
    while i <= EXACT_MAX_N {
        t[i] = t[i - 1] * i as u64;
        i += 1;
    }
    t
};

/// `n!` for `n <= 20`.
pub fn factorial(n: usize) -> Result<u64> {
    guard_exact(n, "factorial")?;
    Ok((1..=n as u64).product())
}

/// Derangement numbers `D_0..=D_m` from `D_m = (m - 1)(D_{m-1} + D_{m-2})`.
pub fn derangements(m: usize) -> Result<Vec<u64>> {
    guard_exact(m, "derangements")?;
    let mut d = vec![1u64, 0];
    for k in 2..=m {
        d.push((k as u64 - 1) * (d[k - 1] + d[k - 2]));
    }
    d.truncate(m + 1);
    Ok(d)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Number of `v` in `S_n` agreeing with a fixed `u` in exactly `k` positions:
/// `C(n, k) * D_{n-k}`.
pub fn rencontres_count(n: usize, k: usize) -> Result<u64> {
    guard_exact(n, "rencontres_count")?;
    check_k(n, k)?;
    let d = derangements(n - k)?;
    let count = binomial(n, k) * d[n - k] as u128;
    Ok(u64::try_from(count).expect("rencontres count exceeds u64 for n <= 20"))
}

/// Fraction of `S_n` agreeing with a fixed permutation in exactly `k`
/// positions, `(1/k!) sum_{l=0}^{n-k} (-1)^l / l!`.
///
/// Exact counts divided by `n!` for `n <= 20`, the compensated alternating sum
/// beyond.
pub fn rencontres_proportion(n: usize, k: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    check_k(n, k)?;
    if n <= EXACT_MAX_N {
        return Ok(rencontres_count(n, k)? as f64 / factorial(n)? as f64);
    }
    Ok(inv_factorial(k) * alternating_exp_partial(n - k))
}

/// `sum_{l=0}^{m} (-1)^l / l!` with Neumaier summation.
pub(crate) fn alternating_exp_partial(m: usize) -> f64 {
    let mut term = 1.0;
    let mut acc = Neumaier::default();
    acc.add(term);
    for l in 1..=m {
        term /= l as f64;
        if term == 0.0 {
            break;
        }
        acc.add(if l % 2 == 0 { term } else { -term });
    }
    acc.value()
}

fn inv_factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc / i as f64)
}

#[derive(Default, Debug, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Agreement-count histogram of `S_n` against a fixed reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RencontresTable {
    pub n: usize,
    /// `counts[k]` permutations share exactly `k` positions with the reference.
    pub counts: Vec<u64>,
}

impl RencontresTable {
    pub fn exact(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("n must be at least 1".into()));
        }
        let counts = (0..=n)
            .map(|k| rencontres_count(n, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, counts })
    }

    pub fn total(&self) -> u128 {
        self.counts.iter().map(|&c| c as u128).sum()
    }
}

/// `V_n(delta)`: the number of `v` with `corr(u, v) > 1 - delta`, for any fixed `u`.
///
/// The strict inequality `k > (1 - delta) n` on the agreement count `k` is
/// evaluated as `n - k < delta * n`, the same predicate the exhaustive check
/// in [`crate::enumerator::verify_ball_size`] applies to Hamming distances.
pub fn ball_size(n: usize, delta: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    check_delta(delta)?;
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge {
            what: "ball_size",
            n,
            limit: EXACT_MAX_N,
            hint: "use ball_size_upper_bound for larger n",
        });
    }
    let radius = delta * n as f64;
    (1..=n)
        .filter(|&k| ((n - k) as f64) < radius)
        .map(|k| rencontres_count(n, k))
        .sum()
}

/// `n^{delta n}`, evaluated as `exp(delta n ln n)`.
pub fn ball_size_upper_bound(n: usize, delta: f64) -> f64 {
    let n = n as f64;
    (delta * n * n.ln()).exp()
}

/// `sum_{s=1}^{n} (-1)^{s-1} / s!`, which equals the double sum
/// `sum_{k=1}^{n} (1/k!) sum_{l=0}^{n-k} (-1)^l / l!` and never exceeds 1.
pub fn alternating_tail_identity(n: usize) -> f64 {
    1.0 - alternating_exp_partial(n)
}

/// Average of `corr(u, v)` over all `(n!)^2` pairs, which is exactly `1/n`.
pub fn mean_correlation(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    Ok(1.0 / n as f64)
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!(
            "delta = {delta} must lie in (0, 1)"
        )));
    }
    Ok(())
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k > n {
        return Err(Error::OutOfRange(format!("k = {k} must lie in 0..={n}")));
    }
    Ok(())
}

fn guard_exact(n: usize, what: &'static str) -> Result<()> {
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge {
            what,
            n,
            limit: EXACT_MAX_N,
            hint: "exact integer arithmetic is capped; use the floating-point routines",
        });
    }
    Ok(())
}
