//! Text formats: cost matrices and 17-significant-digit floats.
//!
//! A cost matrix file is a `# n=<n>` line followed by `n` lines of `n`
//! comma-separated floats. Blank lines are ignored.

use crate::field::CostMatrix;
use crate::{Error, Result};

/// `x` in scientific notation with 17 significant digits; enough to round-trip
/// every finite `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_cost_matrix(c: &CostMatrix) -> String {
    let mut out = format!("# n={}\n", c.n());
    for row in c.rows() {
        let line: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_cost_matrix(text: &str) -> Result<CostMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input; expected a `# n=<n>` header".into(),
    })?;
    let n: usize = header
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|h| h.strip_prefix("n="))
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected header `# n=<n>` with n >= 1, got `{header}`"),
        })?;
    let mut entries = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (line, text) in lines {
        if rows == n {
            return Err(Error::Parse {
                line,
                msg: format!("more than n = {n} rows"),
            });
        }
        let before = entries.len();
        for field in text.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{}` is not a number", field.trim()),
            })?;
            entries.push(x);
        }
        if entries.len() - before != n {
            return Err(Error::Parse {
                line,
                msg: format!("expected {n} values, found {}", entries.len() - before),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("expected {n} rows, found {rows}"),
        });
    }
    CostMatrix::from_vec(n, entries)
}
