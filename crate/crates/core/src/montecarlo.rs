//! Seeded replication harness for the maximum, minimum and greedy value.
//!
//! Replication `k` of a run with master seed `s` samples its cost matrix from
//! [`replication_seed`]`(s, k)`. Replications are grouped into fixed chunks of
//! [`CHUNK`] consecutive indices; each chunk is reduced sequentially and the
//! chunk results are merged left to right in index order. The summation tree
//! therefore depends only on `replications`, never on the worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{greedy_lower_bound, upper_bound_expected_max, variance_lower_bound};
use crate::combinatorics::log_factorial;
use crate::field::CostMatrix;
use crate::solvers::{greedy_assignment, solve_max_exact, solve_min_exact};
use crate::stats::{CoMoments, RunningStats};
use crate::{Error, Result};

/// Replications reduced sequentially per work item.
pub const CHUNK: u64 = 256;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`: the `(index + 1)`-th output of a SplitMix64
/// generator started at state `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Master seed of an independent sub-stream `stream` of `master`.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    replication_seed(mix64(master ^ STREAM_SALT), stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub n: usize,
    pub seed: u64,
    /// `M_n`.
    pub max_value: f64,
    /// `W_n`.
    pub min_value: f64,
    pub greedy_value: f64,
    /// Mean of the field over all assignments.
    pub field_mean: f64,
    /// `max_value - field_mean`.
    pub residual_max: f64,
}

pub fn run_replication(n: usize, seed: u64) -> Result<FieldSample> {
    let c = CostMatrix::sample(n, seed)?;
    let max_value = solve_max_exact(&c)?.field_value;
    let min_value = solve_min_exact(&c)?.field_value;
    let greedy_value = greedy_assignment(&c)?.field_value;
    let field_mean = c.field_mean();
    Ok(FieldSample {
        n,
        seed,
        max_value,
        min_value,
        greedy_value,
        field_mean,
        residual_max: max_value - field_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatSummary {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

impl From<&RunningStats> for StatSummary {
    fn from(s: &RunningStats) -> Self {
        Self {
            mean: s.mean,
            variance: s.variance(),
            se_mean: s.se_mean(),
            se_variance: s.se_variance(),
        }
    }
}

/// Per-sample invariant checks accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InvariantTally {
    /// Samples with `greedy_value > max_value`.
    pub greedy_above_max: u64,
    /// Samples violating `min_value <= field_mean <= max_value`.
    pub order_violations: u64,
    /// Largest `|field_mean + residual_max - max_value| / |max_value|`.
    pub max_decomposition_error: f64,
}

impl InvariantTally {
    fn push(&mut self, s: &FieldSample) {
        if s.greedy_value > s.max_value {
            self.greedy_above_max += 1;
        }
        if !(s.min_value <= s.field_mean && s.field_mean <= s.max_value) {
            self.order_violations += 1;
        }
        let err = (s.field_mean + s.residual_max - s.max_value).abs()
            / s.max_value.abs().max(f64::MIN_POSITIVE);
        self.max_decomposition_error = self.max_decomposition_error.max(err);
    }

    fn merge(&self, other: &Self) -> Self {
        Self {
            greedy_above_max: self.greedy_above_max + other.greedy_above_max,
            order_violations: self.order_violations + other.order_violations,
            max_decomposition_error: self
                .max_decomposition_error
                .max(other.max_decomposition_error),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    max: RunningStats,
    min: RunningStats,
    greedy: RunningStats,
    field_mean: RunningStats,
    residual: RunningStats,
    mean_residual: CoMoments,
    tally: InvariantTally,
}

impl Accumulator {
    fn push(&mut self, s: &FieldSample) {
        self.max.push(s.max_value);
        self.min.push(s.min_value);
        self.greedy.push(s.greedy_value);
        self.field_mean.push(s.field_mean);
        self.residual.push(s.residual_max);
        self.mean_residual.push(s.field_mean, s.residual_max);
        self.tally.push(s);
    }

    fn merge(&self, o: &Self) -> Self {
        Self {
            max: self.max.merge(&o.max),
            min: self.min.merge(&o.min),
            greedy: self.greedy.merge(&o.greedy),
            field_mean: self.field_mean.merge(&o.field_mean),
            residual: self.residual.merge(&o.residual),
            mean_residual: self.mean_residual.merge(&o.mean_residual),
            tally: self.tally.merge(&o.tally),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub replications: u64,
    pub master_seed: u64,
    pub max: StatSummary,
    pub min: StatSummary,
    pub greedy: StatSummary,
    pub field_mean: StatSummary,
    pub residual: StatSummary,
    /// `mean(M_n) / sqrt(2 ln n!)`; absent for `n = 1`.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub cov_field_mean_residual: f64,
    /// Standard error of the covariance under independence.
    pub cov_se: f64,
    pub upper_e: f64,
    pub greedy_lower_e: f64,
    pub var_lower: f64,
    pub invariants: InvariantTally,
}

/// Runs `f` on every index in `0..count` in chunks of [`CHUNK`], reducing
/// each chunk with `push` in index order and merging chunk results in order.
pub(crate) fn chunked_reduce<A, T, F, P, M>(count: u64, f: F, push: P, merge: M) -> Result<A>
where
    A: Default + Send,
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    P: Fn(&mut A, &T) + Sync,
    M: Fn(&A, &A) -> A,
{
    let chunks = count.div_ceil(CHUNK);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = A::default();
            for k in c * CHUNK..((c + 1) * CHUNK).min(count) {
                push(&mut acc, &f(k)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<A>>>()?;
    Ok(partials.iter().fold(A::default(), |acc, p| merge(&acc, p)))
}

/// Estimates the law of `M_n`, `W_n`, the greedy value, the field mean and
/// the residual over `replications` independent matrices.
pub fn estimate(n: usize, replications: u64, master_seed: u64) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    if replications < 2 {
        return Err(Error::OutOfRange(format!(
            "replications = {replications}; at least 2 are needed"
        )));
    }
    let acc: Accumulator = chunked_reduce(
        replications,
        |k| run_replication(n, replication_seed(master_seed, k)),
        Accumulator::push,
        Accumulator::merge,
    )?;
    let scale = (2.0 * log_factorial(n as u64)).sqrt();
    let (ratio, ratio_se) = if n > 1 {
        (Some(acc.max.mean / scale), Some(acc.max.se_mean() / scale))
    } else {
        (None, None)
    };
    Ok(EstimateReport {
        n,
        replications,
        master_seed,
        max: (&acc.max).into(),
        min: (&acc.min).into(),
        greedy: (&acc.greedy).into(),
        field_mean: (&acc.field_mean).into(),
        residual: (&acc.residual).into(),
        ratio,
        ratio_se,
        cov_field_mean_residual: acc.mean_residual.covariance(),
        cov_se: acc.mean_residual.se_covariance_independent(),
        upper_e: upper_bound_expected_max(n),
        greedy_lower_e: greedy_lower_bound(n)?,
        var_lower: variance_lower_bound(n),
        invariants: acc.tally,
    })
}

/// One [`estimate`] per `n`, each on its own sub-stream `stream_seed(master_seed, n)`.
pub fn ratio_table(
    n_list: &[usize],
    replications: u64,
    master_seed: u64,
) -> Result<Vec<EstimateReport>> {
    if let Some(&n) = n_list.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidSize(format!(
            "n = {n}; the ratio table needs n >= 2"
        )));
    }
    n_list
        .iter()
        .map(|&n| estimate(n, replications, stream_seed(master_seed, n as u64)))
        .collect()
}

/// Mean and spread of `M_n` alone, used as the plug-in for `E(M_n)`.
pub fn estimate_max_mean(n: usize, replications: u64, master_seed: u64) -> Result<StatSummary> {
    if replications < 2 {
        return Err(Error::OutOfRange(format!(
            "replications = {replications}; at least 2 are needed"
        )));
    }
    let stats: RunningStats = chunked_reduce(
        replications,
        |k| {
            Ok(
                solve_max_exact(&CostMatrix::sample(n, replication_seed(master_seed, k))?)?
                    .field_value,
            )
        },
        |s: &mut RunningStats, &x| s.push(x),
        RunningStats::merge,
    )?;
    Ok((&stats).into())
}

/// `M_n` (or `W_n` when `minimum`) for replications `0..count`, in index order.
pub fn extreme_values(n: usize, count: u64, master_seed: u64, minimum: bool) -> Result<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let c = CostMatrix::sample(n, replication_seed(master_seed, k))?;
            let r = if minimum {
                solve_min_exact(&c)?
            } else {
                solve_max_exact(&c)?
            };
            Ok(r.field_value)
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step past every copy of the smaller value before comparing the ECDFs.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value `sqrt(-ln(alpha/2) / 2) sqrt((n + m) / (n m))`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    /// `statistic < critical_value`, i.e. equality in law is not rejected.
    pub passed: bool,
}

pub fn ks_test(a: &[f64], b: &[f64], alpha: f64) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidSize(
            "KS test needs two non-empty samples".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let statistic = ks_statistic(a, b);
    let critical_value = ks_critical_value(alpha, a.len(), b.len());
    Ok(KsTest {
        statistic,
        critical_value,
        alpha,
        passed: statistic < critical_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub n: usize,
    pub replications: u64,
    pub master_seed: u64,
    pub ks: KsTest,
}

pub const SYMMETRY_ALPHA: f64 = 0.01;

/// KS test of `{-W_n}` against `{M_n}` on disjoint sub-streams 0 and 1.
pub fn symmetry_check(n: usize, replications: u64, master_seed: u64) -> Result<SymmetryReport> {
    if replications < 100 {
        return Err(Error::OutOfRange(format!(
            "replications = {replications}; the symmetry check needs at least 100"
        )));
    }
    let maxima = extreme_values(n, replications, stream_seed(master_seed, 0), false)?;
    let neg_minima: Vec<f64> = extreme_values(n, replications, stream_seed(master_seed, 1), true)?
        .into_iter()
        .map(|w| -w)
        .collect();
    Ok(SymmetryReport {
        n,
        replications,
        master_seed,
        ks: ks_test(&neg_minima, &maxima, SYMMETRY_ALPHA)?,
    })
}
