//! Permutations, cost matrices and the field itself.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Value of the field at one permutation, in standard-Gaussian units.
pub type FieldValue = f64;

/// A permutation of `[n]` in one-line notation.
///
/// Stored 0-based. [`Permutation::one_line`], `Display` and `FromStr` use the
/// 1-based values `u(1), ..., u(n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        Ok(Self {
            map: (0..n).collect(),
        })
    }

    /// Builds a permutation from 1-based one-line notation.
    pub fn from_one_line(values: &[usize]) -> Result<Self> {
        if values.contains(&0) {
            return Err(Error::InvalidPermutation(
                "one-line values are 1-based; found 0".into(),
            ));
        }
        Self::from_zero_based(values.iter().map(|&v| v - 1).collect())
    }

    pub fn from_zero_based(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n {
                return Err(Error::InvalidPermutation(format!(
                    "value {} out of range 1..={n}",
                    v + 1
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidPermutation(format!(
                    "value {} repeated",
                    v + 1
                )));
            }
        }
        Ok(Self { map })
    }

    pub(crate) fn from_zero_based_unchecked(map: Vec<usize>) -> Self {
        debug_assert!(Self::from_zero_based(map.clone()).is_ok());
        Self { map }
    }

    /// Uniformly random permutation of `[n]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::identity(n)?;
        p.map.shuffle(rng);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `u(i)` with 0-based argument and result.
    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_zero_based(&self) -> &[usize] {
        &self.map
    }

    pub fn one_line(&self) -> Vec<usize> {
        self.map.iter().map(|&v| v + 1).collect()
    }

    /// `self ∘ other`, i.e. `i -> self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        check_sizes(self.len(), other.len())?;
        Ok(Self {
            map: other.map.iter().map(|&j| self.map[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Self { map: inv }
    }

    /// Number of positions where `self` and `other` agree. Sizes must match.
    pub(crate) fn agreements(&self, other: &Permutation) -> usize {
        agreements(&self.map, &other.map)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidPermutation(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_line(&values)
    }
}

/// Serialises as the 1-based one-line array.
impl serde::Serialize for Permutation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.map.iter().map(|v| v + 1))
    }
}

#[inline]
pub(crate) fn agreements(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Advances `perm` to its lexicographic successor in place.
///
/// Returns `false` (leaving `perm` untouched) once `perm` is the last
/// permutation, i.e. strictly decreasing.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// All permutations of `[n]` in lexicographic order of one-line notation.
#[derive(Debug, Clone)]
pub struct LexPermutations {
    current: Vec<usize>,
    done: bool,
}

impl LexPermutations {
    pub fn new(n: usize) -> Self {
        Self {
            current: (0..n).collect(),
            done: n == 0,
        }
    }
}

impl Iterator for LexPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.done {
            return None;
        }
        let out = Permutation::from_zero_based_unchecked(self.current.clone());
        self.done = !next_permutation(&mut self.current);
        Some(out)
    }
}

/// Visits every permutation of `[n]` (0-based, lexicographic) without
/// allocating per permutation.
pub(crate) fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        f(&perm);
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

/// Dense row-major `n x n` matrix of finite costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Row-major `entries` of length `n * n`; every entry must be finite.
    pub fn from_vec(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "cost matrix size must be at least 1".into(),
            ));
        }
        if entries.len() != n * n {
            return Err(Error::InvalidSize(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n + 1,
                col: pos % n + 1,
            });
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidSize(format!(
                "row {} has {} entries, expected {n}",
                i + 1,
                row.len()
            )));
        }
        Self::from_vec(n, rows.concat())
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_vec(n, vec![value; n * n])
    }

    /// i.i.d. standard Gaussian matrix, a pure function of `(n, seed)`.
    ///
    /// Generator: `ChaCha8Rng::seed_from_u64(seed)`. Normal transform: the
    /// ziggurat sampler `rand_distr::StandardNormal`. Entries are drawn in
    /// row-major order.
    pub fn sample(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "cost matrix size must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { n, entries })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based entry access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.n)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::from_vec(self.n, self.entries.iter().map(|x| alpha * x).collect())
    }

    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|x| -x).collect(),
        }
    }

    /// `c'(i, j) = c(w(i), j)`.
    pub fn permute_rows(&self, w: &Permutation) -> Result<Self> {
        check_sizes(self.n, w.len())?;
        let mut entries = Vec::with_capacity(self.entries.len());
        for i in 0..self.n {
            entries.extend_from_slice(self.row(w.image(i)));
        }
        Ok(Self { n: self.n, entries })
    }

    /// `c'(i, j) = c(i, w(j))`.
    pub fn permute_cols(&self, w: &Permutation) -> Result<Self> {
        check_sizes(self.n, w.len())?;
        let entries = self
            .rows()
            .flat_map(|row| (0..self.n).map(move |j| row[w.image(j)]))
            .collect();
        Ok(Self { n: self.n, entries })
    }

    /// `sum_i c(i, u(i))` in row order; `u` is 0-based and must have length `n`.
    #[inline]
    pub(crate) fn raw_sum_zero_based(&self, u: &[usize]) -> f64 {
        u.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }

    /// Field mean over all `n!` assignments, via the closed form
    /// `(n sqrt(n))^{-1} sum_{i,j} c(i, j)`.
    pub fn field_mean(&self) -> f64 {
        let n = self.n as f64;
        self.entries.iter().sum::<f64>() / (n * n.sqrt())
    }
}

fn check_sizes(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn identity_permutation(n: usize) -> Result<Permutation> {
    Permutation::identity(n)
}

pub fn sample_cost_matrix(n: usize, seed: u64) -> Result<CostMatrix> {
    CostMatrix::sample(n, seed)
}

/// `g_u = n^{-1/2} sum_i c(i, u(i))`.
pub fn field_value(c: &CostMatrix, u: &Permutation) -> Result<FieldValue> {
    check_sizes(c.n(), u.len())?;
    Ok(c.raw_sum_zero_based(u.as_zero_based()) / (c.n() as f64).sqrt())
}

/// Correlation of `g_u` and `g_v`: the fraction of positions where `u` and `v` agree.
pub fn correlation(u: &Permutation, v: &Permutation) -> Result<f64> {
    check_sizes(u.len(), v.len())?;
    Ok(u.agreements(v) as f64 / u.len() as f64)
}

pub fn hamming_distance(u: &Permutation, v: &Permutation) -> Result<usize> {
    check_sizes(u.len(), v.len())?;
    Ok(u.len() - u.agreements(v))
}

/// `L2` distance between `g_u` and `g_v`, `sqrt(2 d_H(u, v) / n)`.
pub fn l2_distance(u: &Permutation, v: &Permutation) -> Result<f64> {
    let d = hamming_distance(u, v)?;
    Ok((2.0 * d as f64 / u.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::from_one_line(v).unwrap()
    }

    #[test]
    fn identity_cases() {
        assert_eq!(identity_permutation(3).unwrap().one_line(), vec![1, 2, 3]);
        assert_eq!(identity_permutation(1).unwrap().one_line(), vec![1]);
        assert_eq!(
            identity_permutation(5).unwrap().one_line(),
            vec![1, 2, 3, 4, 5]
        );
        assert!(matches!(
            identity_permutation(0),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::from_one_line(&[1, 1]).is_err());
        assert!(Permutation::from_one_line(&[0, 1]).is_err());
        assert!(Permutation::from_one_line(&[1, 3]).is_err());
        assert!(Permutation::from_one_line(&[]).is_err());
        assert!("1,2,x".parse::<Permutation>().is_err());
    }

    #[test]
    fn display_round_trip() {
        let p = perm(&[3, 1, 2]);
        assert_eq!(p.to_string(), "3,1,2");
        assert_eq!("3, 1,2".parse::<Permutation>().unwrap(), p);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_cost_matrix(3, 42).unwrap();
        let b = sample_cost_matrix(3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_cost_matrix(3, 43).unwrap());
        assert!(sample_cost_matrix(0, 1).is_err());
    }

    #[test]
    fn sampled_entries_are_standard_gaussian() {
        let c = sample_cost_matrix(1000, 7).unwrap();
        let m = c.entries().len() as f64;
        let mean = c.entries().iter().sum::<f64>() / m;
        let var = c.entries().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        // sd of the mean is 1e-3; 4 sd.
        assert!(mean.abs() < 4.0 / 1e3, "mean {mean}");
        // sd of the sample variance is sqrt(2/m) ~ 1.4e-3, so 1% is ~7 sd.
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn field_value_examples() {
        let c = CostMatrix::from_rows(&[vec![1.5]]).unwrap();
        assert_eq!(field_value(&c, &perm(&[1])).unwrap(), 1.5);

        let c = CostMatrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let g = field_value(&c, &perm(&[2, 1])).unwrap();
        assert!((g - 5.0 / 2f64.sqrt()).abs() < 1e-15);

        let g2 = field_value(&c.scaled(2.0).unwrap(), &perm(&[2, 1])).unwrap();
        assert_eq!(g2, 2.0 * g);

        assert!(matches!(
            field_value(&c, &perm(&[1, 2, 3])),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn constant_matrix_gives_sqrt_n() {
        for n in 1..7 {
            let c = CostMatrix::constant(n, 1.0).unwrap();
            for u in LexPermutations::new(n) {
                assert!((field_value(&c, &u).unwrap() - (n as f64).sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_and_distances() {
        let id = perm(&[1, 2, 3]);
        let sw = perm(&[2, 1, 3]);
        assert_eq!(correlation(&id, &id).unwrap(), 1.0);
        assert!((correlation(&id, &sw).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(correlation(&perm(&[1, 2]), &perm(&[2, 1])).unwrap(), 0.0);

        assert_eq!(hamming_distance(&id, &id).unwrap(), 0);
        assert_eq!(hamming_distance(&perm(&[1, 2]), &perm(&[2, 1])).unwrap(), 2);
        assert_eq!(hamming_distance(&id, &sw).unwrap(), 2);

        assert_eq!(l2_distance(&id, &id).unwrap(), 0.0);
        assert!((l2_distance(&perm(&[1, 2]), &perm(&[2, 1])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((l2_distance(&id, &sw).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);

        assert!(correlation(&id, &perm(&[1, 2])).is_err());
        assert!(hamming_distance(&id, &perm(&[1, 2])).is_err());
        assert!(l2_distance(&id, &perm(&[1, 2])).is_err());
    }

    #[test]
    fn lex_order_and_count() {
        let all: Vec<_> = LexPermutations::new(3).map(|p| p.one_line()).collect();
        assert_eq!(
            all,
            vec![
                vec![1, 2, 3],
                vec![1, 3, 2],
                vec![2, 1, 3],
                vec![2, 3, 1],
                vec![3, 1, 2],
                vec![3, 2, 1]
            ]
        );
        assert_eq!(LexPermutations::new(6).count(), 720);
        assert_eq!(LexPermutations::new(1).count(), 1);
    }

    #[test]
    fn field_has_unit_variance_for_fixed_assignment() {
        let n = 6;
        let u = perm(&[4, 1, 6, 2, 5, 3]);
        let reps = 20_000;
        let values: Vec<f64> = (0..reps)
            .map(|s| field_value(&sample_cost_matrix(n, s).unwrap(), &u).unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        // se of the variance of a Gaussian sample: sqrt(2 / (reps - 1)) ~ 0.01.
        assert!(
            (var - 1.0).abs() < 4.0 * (2.0 / (reps as f64 - 1.0)).sqrt(),
            "var {var}"
        );
    }

    fn perm_pair(max_n: usize) -> impl Strategy<Value = (Permutation, Permutation)> {
        (1..=max_n).prop_flat_map(|n| {
            let base: Vec<usize> = (0..n).collect();
            (Just(base.clone()).prop_shuffle(), Just(base).prop_shuffle()).prop_map(|(a, b)| {
                (
                    Permutation::from_zero_based(a).unwrap(),
                    Permutation::from_zero_based(b).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn metric_identities((u, v) in perm_pair(12)) {
            let n = u.len() as f64;
            let r = correlation(&u, &v).unwrap();
            let d = hamming_distance(&u, &v).unwrap();
            prop_assert_eq!(r, correlation(&v, &u).unwrap());
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((r - (1.0 - d as f64 / n)).abs() < 1e-15);
            let l2 = l2_distance(&u, &v).unwrap();
            prop_assert!((l2 * l2 - 2.0 * (1.0 - r)).abs() < 1e-14);
            prop_assert_eq!(correlation(&u, &u).unwrap(), 1.0);
        }

        #[test]
        fn relabelling_rows_and_assignment_preserves_value(
            (u, w) in perm_pair(9),
            seed in any::<u64>(),
        ) {
            let c = sample_cost_matrix(u.len(), seed).unwrap();
            let c2 = c.permute_rows(&w).unwrap();
            let u2 = u.compose(&w).unwrap();
            let a = field_value(&c, &u).unwrap();
            let b = field_value(&c2, &u2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn inverse_composes_to_identity((u, _v) in perm_pair(10)) {
            let id = Permutation::identity(u.len()).unwrap();
            prop_assert_eq!(u.compose(&u.inverse()).unwrap(), id.clone());
            prop_assert_eq!(u.inverse().compose(&u).unwrap(), id);
        }
    }
}
