//! Maximum and minimum of the field over `S_n`, and the greedy lower bound.
//!
//! Three routes to the same optimum:
//!
//! * [`solve_max_bruteforce`] evaluates all `n!` assignments (`n <= 10`).
//! * [`solve_max_exact`] runs a dense shortest-augmenting-path solver with dual
//!   potentials in `O(n^3)` on the negated costs.
//! * [`greedy_assignment`] is not optimal; it walks the rows in order and
//!   takes the best unused column, giving a lower bound on the maximum.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::field::{next_permutation, CostMatrix, Permutation};
use crate::{Error, Result};

/// Largest `n` accepted by [`solve_max_bruteforce`].
pub const BRUTE_FORCE_MAX_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub assignment: Permutation,
    /// `sum_i c(i, u(i))` before normalisation.
    pub raw_sum: f64,
    /// `raw_sum / sqrt(n)`.
    pub field_value: f64,
}

impl SolveResult {
    fn new(c: &CostMatrix, assignment: Vec<usize>) -> Self {
        let raw_sum = c.raw_sum_zero_based(&assignment);
        Self {
            assignment: Permutation::from_zero_based_unchecked(assignment),
            raw_sum,
            field_value: raw_sum / (c.n() as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Brute,
    Exact,
    Greedy,
    Min,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Exact => "exact",
            Method::Greedy => "greedy",
            Method::Min => "min",
        }
    }

    pub fn solve(self, c: &CostMatrix) -> Result<SolveResult> {
        match self {
            Method::Brute => solve_max_bruteforce(c),
            Method::Exact => solve_max_exact(c),
            Method::Greedy => greedy_assignment(c),
            Method::Min => solve_min_exact(c),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(Method::Brute),
            "exact" => Ok(Method::Exact),
            "greedy" => Ok(Method::Greedy),
            "min" => Ok(Method::Min),
            other => Err(Error::OutOfRange(format!(
                "unknown method {other:?}; expected brute, exact, greedy or min"
            ))),
        }
    }
}

/// Exhaustive maximum. Ties go to the lexicographically smallest assignment.
pub fn solve_max_bruteforce(c: &CostMatrix) -> Result<SolveResult> {
    let n = c.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            what: "solve_max_bruteforce",
            n,
            limit: BRUTE_FORCE_MAX_N,
            hint: "use solve_max_exact",
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_sum = c.raw_sum_zero_based(&perm);
    while next_permutation(&mut perm) {
        let s = c.raw_sum_zero_based(&perm);
        if s > best_sum {
            best_sum = s;
            best.copy_from_slice(&perm);
        }
    }
    Ok(SolveResult::new(c, best))
}

/// Optimal maximum-sum assignment in `O(n^3)`.
///
/// Under ties the returned assignment is whichever optimum the augmentation
/// reaches first; only the value is guaranteed.
pub fn solve_max_exact(c: &CostMatrix) -> Result<SolveResult> {
    let negated = c.negated();
    Ok(SolveResult::new(c, min_cost_assignment(&negated)))
}

/// Minimum over `S_n`: the maximum of `-c`, with the sum negated back.
pub fn solve_min_exact(c: &CostMatrix) -> Result<SolveResult> {
    let max_of_negated = solve_max_exact(&c.negated())?;
    let raw_sum = -max_of_negated.raw_sum;
    Ok(SolveResult {
        assignment: max_of_negated.assignment,
        raw_sum,
        field_value: raw_sum / (c.n() as f64).sqrt(),
    })
}

/// Row `i` (in order) takes its largest unused column; ties go to the
/// smallest column index.
pub fn greedy_assignment(c: &CostMatrix) -> Result<SolveResult> {
    let n = c.n();
    let mut used = vec![false; n];
    let mut assignment = Vec::with_capacity(n);
    for row in c.rows() {
        let mut best: Option<(usize, f64)> = None;
        for (j, &x) in row.iter().enumerate() {
            if used[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| x > b) {
                best = Some((j, x));
            }
        }
        let (j, _) = best.expect("an unused column remains for every row");
        used[j] = true;
        assignment.push(j);
    }
    Ok(SolveResult::new(c, assignment))
}

const NONE: usize = usize::MAX;

/// Minimum-cost perfect matching on a dense square matrix; returns the column
/// of each row.
///
/// Rows are inserted one at a time. For each new row a Dijkstra-style search
/// over reduced costs `c(i, j) - u(i) - v(j)` finds the shortest augmenting
/// path to a free column, after which the dual potentials are updated so the
/// reduced costs stay non-negative, and the path is flipped.
fn min_cost_assignment(c: &CostMatrix) -> Vec<usize> {
    let n = c.n();
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];

    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut visited_rows = vec![false; n];
    let mut scanned_cols = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        path.fill(NONE);
        visited_rows.fill(false);
        scanned_cols.fill(false);
        remaining.clear();
        remaining.extend(0..n);

        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink;
        loop {
            visited_rows[i] = true;
            let row = c.row(i);
            let mut lowest = f64::INFINITY;
            let mut pick = NONE;
            for (idx, &j) in remaining.iter().enumerate() {
                let r = min_val + row[j] - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    pick = idx;
                }
            }
            debug_assert!(lowest.is_finite(), "dense finite costs always admit a path");
            min_val = lowest;
            let j = remaining.swap_remove(pick);
            scanned_cols[j] = true;
            if row4col[j] == NONE {
                sink = j;
                break;
            }
            i = row4col[j];
        }

        u[cur_row] += min_val;
        for r in 0..n {
            if visited_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for j in 0..n {
            if scanned_cols[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            let prev = std::mem::replace(&mut col4row[r], j);
            if r == cur_row {
                break;
            }
            j = prev;
        }
    }
    col4row
}
