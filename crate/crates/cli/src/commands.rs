use anyhow::{bail, Context, Result};
use log::info;
use serde::Serialize;

use graf_core::bounds::{chatterjee_bound, nearmax_theorem_bound, BoundsRow, Regime};
use graf_core::combinatorics::{ball_size, ball_size_upper_bound, RencontresTable, EXACT_MAX_N};
use graf_core::enumerator::{
    correlation_histogram_exact, dimension_study, enumerate_field, exhaustive_mean_correlation,
    field_values, histogram_is_reference_invariant, verify_ball_size, DimensionStudy,
};
use graf_core::io::{read_cost_matrix, write_cost_matrix};
use graf_core::montecarlo::{estimate, ratio_table, symmetry_check, EstimateReport};
use graf_core::solvers::{solve_max_bruteforce, solve_max_exact, Method};
use graf_core::{CostMatrix, Permutation};

use crate::args::*;
use crate::output::{num, opt_num, to_json, Table};

pub struct Outcome {
    pub bytes: Vec<u8>,
    /// False when a verification command found a failing check.
    pub passed: bool,
}

impl From<Vec<u8>> for Outcome {
    fn from(bytes: Vec<u8>) -> Self {
        Self {
            bytes,
            passed: true,
        }
    }
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Sample(a) => sample(a),
        Command::Bounds(a) => bounds(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::RatioTable(a) => ratio_table_cmd(a),
        Command::Nearmax(a) => nearmax(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Verify(a) => verify(a),
        Command::Symmetry(a) => symmetry(a),
    }
}

fn format_or(output: &OutputArgs, default: Format) -> Format {
    output.format.unwrap_or(default)
}

fn load_matrix(
    input: Option<&std::path::Path>,
    n: Option<usize>,
    seed: Option<u64>,
) -> Result<CostMatrix> {
    match (input, n, seed) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading cost matrix {}", path.display()))?;
            read_cost_matrix(&text)
                .with_context(|| format!("parsing cost matrix {}", path.display()))
        }
        (None, Some(n), Some(seed)) => Ok(CostMatrix::sample(n, seed)?),
        _ => bail!("either --input or both --n and --seed are required"),
    }
}

#[derive(Serialize)]
struct SolveOutput {
    n: usize,
    method: &'static str,
    assignment: Permutation,
    raw_sum: f64,
    field_value: f64,
}

fn solve(a: &SolveArgs) -> Result<Outcome> {
    let c = load_matrix(a.input.as_deref(), a.n, a.seed)?;
    let method: Method = a.method.into();
    let r = method.solve(&c)?;
    let out = SolveOutput {
        n: c.n(),
        method: method.as_str(),
        assignment: r.assignment,
        raw_sum: r.raw_sum,
        field_value: r.field_value,
    };
    Ok(match format_or(&a.output, Format::Json) {
        Format::Json => to_json(&out)?,
        Format::Csv => {
            let mut t = Table::new(&["n", "method", "assignment", "raw_sum", "field_value"])?;
            t.row(&[
                out.n.to_string(),
                out.method.to_string(),
                out.assignment.to_string(),
                num(out.raw_sum),
                num(out.field_value),
            ])?;
            t.into_bytes()?
        }
    }
    .into())
}

fn sample(a: &SampleArgs) -> Result<Outcome> {
    if a.output.format == Some(Format::Json) {
        bail!("sample writes the cost-matrix CSV format only");
    }
    Ok(write_cost_matrix(&CostMatrix::sample(a.n, a.seed)?)
        .into_bytes()
        .into())
}

#[derive(Serialize)]
struct NearMaxColumns {
    epsilon: f64,
    regime: Option<Regime>,
    bound_small: Option<f64>,
    bound_large: Option<f64>,
    bound_value: Option<f64>,
    chatterjee_m: f64,
    chatterjee_bound: f64,
    chatterjee_delta: f64,
}

#[derive(Serialize)]
struct BallColumns {
    delta: f64,
    /// Decimal string; absent above the exact-integer cap.
    ball_size: Option<String>,
    ball_upper_bound: f64,
}

#[derive(Serialize)]
struct BoundsOutput {
    #[serde(flatten)]
    row: BoundsRow,
    near_max: Vec<NearMaxColumns>,
    balls: Vec<BallColumns>,
}

fn bounds(a: &BoundsArgs) -> Result<Outcome> {
    let mut rows = Vec::new();
    for &n in &a.n_list {
        info!("bounds: n = {n}");
        let row = BoundsRow::for_n(n)?;
        // m = E(M_n) is replaced by its upper bound.
        let m = row.upper_e;
        let near_max = a
            .eps
            .iter()
            .map(|&eps| {
                let theorem = if n >= 2 {
                    Some(nearmax_theorem_bound(n, eps, a.c_small, a.c_large)?)
                } else {
                    None
                };
                let (chatterjee_bound, chatterjee_delta) = if m > 0.0 {
                    let b = chatterjee_bound(n, eps, m, a.c)?;
                    (b.value, b.delta)
                } else {
                    (f64::NAN, f64::NAN)
                };
                Ok(NearMaxColumns {
                    epsilon: eps,
                    regime: theorem.map(|t| t.regime),
                    bound_small: theorem.map(|t| t.small_form),
                    bound_large: theorem.map(|t| t.large_form),
                    bound_value: theorem.map(|t| t.bound_value),
                    chatterjee_m: m,
                    chatterjee_bound,
                    chatterjee_delta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let balls = a
            .delta
            .iter()
            .map(|&delta| {
                let exact = if n <= EXACT_MAX_N {
                    Some(ball_size(n, delta)?.to_string())
                } else {
                    None
                };
                Ok(BallColumns {
                    delta,
                    ball_size: exact,
                    ball_upper_bound: ball_size_upper_bound(n, delta),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(BoundsOutput {
            row,
            near_max,
            balls,
        });
    }

    if format_or(&a.output, Format::Csv) == Format::Json {
        return Ok(to_json(&rows)?.into());
    }
    let mut header: Vec<String> = [
        "n",
        "upper_E",
        "trivial_upper_E",
        "greedy_lower_E",
        "var_lower",
    ]
    .map(String::from)
    .to_vec();
    if !a.eps.is_empty() {
        header.extend(
            [
                "eps",
                "regime",
                "bound_small",
                "bound_large",
                "bound_value",
                "chatterjee_m",
                "chatterjee_bound",
                "chatterjee_delta",
            ]
            .map(String::from),
        );
    }
    for d in &a.delta {
        header.push(format!("ball_size_{d}"));
        header.push(format!("ball_upper_{d}"));
    }
    let mut t = Table::new(&header)?;
    for r in &rows {
        let mut base = vec![
            r.row.n.to_string(),
            num(r.row.upper_e),
            num(r.row.trivial_upper_e),
            num(r.row.greedy_lower_e),
            num(r.row.var_lower),
        ];
        let mut tail = Vec::new();
        for b in &r.balls {
            tail.push(b.ball_size.clone().unwrap_or_default());
            tail.push(num(b.ball_upper_bound));
        }
        if r.near_max.is_empty() {
            base.extend(tail);
            t.row(&base)?;
            continue;
        }
        for nm in &r.near_max {
            let mut cells = base.clone();
            cells.extend([
                num(nm.epsilon),
                nm.regime.map(regime_name).unwrap_or_default().to_string(),
                opt_num(nm.bound_small),
                opt_num(nm.bound_large),
                opt_num(nm.bound_value),
                num(nm.chatterjee_m),
                num(nm.chatterjee_bound),
                num(nm.chatterjee_delta),
            ]);
            cells.extend(tail.iter().cloned());
            t.row(&cells)?;
        }
    }
    Ok(t.into_bytes()?.into())
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::SmallEpsilon => "small-epsilon",
        Regime::LargeEpsilon => "large-epsilon",
    }
}

const ESTIMATE_COLUMNS: [&str; 15] = [
    "n",
    "reps",
    "mean_M",
    "se_M",
    "var_M",
    "se_var_M",
    "mean_W",
    "mean_greedy",
    "mean_gbar",
    "var_gbar",
    "cov_gbar_L",
    "ratio",
    "upper_E",
    "greedy_lower_E",
    "var_lower",
];

fn estimate_cells(r: &EstimateReport) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.replications.to_string(),
        num(r.max.mean),
        num(r.max.se_mean),
        num(r.max.variance),
        num(r.max.se_variance),
        num(r.min.mean),
        num(r.greedy.mean),
        num(r.field_mean.mean),
        num(r.field_mean.variance),
        num(r.cov_field_mean_residual),
        opt_num(r.ratio),
        num(r.upper_e),
        num(r.greedy_lower_e),
        num(r.var_lower),
    ]
}

fn estimate_table(reports: &[EstimateReport]) -> Result<Vec<u8>> {
    let mut t = Table::new(&ESTIMATE_COLUMNS)?;
    for r in reports {
        t.row(&estimate_cells(r))?;
    }
    t.into_bytes()
}

fn estimate_cmd(a: &EstimateArgs) -> Result<Outcome> {
    info!("estimate: n = {}, reps = {}", a.n, a.reps);
    let r = estimate(a.n, a.reps, a.seed)?;
    Ok(match format_or(&a.output, Format::Json) {
        Format::Json => to_json(&r)?,
        Format::Csv => estimate_table(std::slice::from_ref(&r))?,
    }
    .into())
}

fn ratio_table_cmd(a: &RatioTableArgs) -> Result<Outcome> {
    info!("ratio-table: n = {:?}, reps = {}", a.n_list, a.reps);
    let reports = ratio_table(&a.n_list, a.reps, a.seed)?;
    Ok(match format_or(&a.output, Format::Csv) {
        Format::Json => to_json(&reports)?,
        Format::Csv => estimate_table(&reports)?,
    }
    .into())
}

fn nearmax(a: &NearmaxArgs) -> Result<Outcome> {
    let cfg = DimensionStudy {
        n_list: a.n.iter().map(|&n| n as usize).collect(),
        eps_list: a.eps.clone(),
        replications: a.reps,
        m_replications: a.m_reps,
        master_seed: a.seed,
        c_small: a.c_small,
        c_large: a.c_large,
    };
    info!("nearmax: {cfg:?}");
    let rows = dimension_study(&cfg)?;
    if format_or(&a.output, Format::Csv) == Format::Json {
        return Ok(to_json(&rows)?.into());
    }
    let mut t = Table::new(&[
        "n",
        "eps",
        "m_used",
        "m_se",
        "reps",
        "empty_frac",
        "mean_log_size_nonempty",
        "se",
        "dimension",
        "bound_small",
        "bound_large",
        "m_reps",
        "dimension_se",
        "mean_log_size_indicator",
        "dimension_m_minus_2se",
        "dimension_m_plus_2se",
    ])?;
    for r in &rows {
        t.row(&[
            r.n.to_string(),
            num(r.epsilon),
            num(r.m_used),
            num(r.m_se),
            r.replications.to_string(),
            num(r.empty_frac),
            num(r.mean_log_size_nonempty),
            num(r.se),
            num(r.dimension),
            opt_num(r.bound_small),
            opt_num(r.bound_large),
            r.m_replications.to_string(),
            num(r.dimension_se),
            num(r.mean_log_size_indicator),
            num(r.dimension_m_minus_2se),
            num(r.dimension_m_plus_2se),
        ])?;
    }
    Ok(t.into_bytes()?.into())
}

#[derive(Serialize)]
struct EnumeratedValue {
    assignment: Permutation,
    field_value: f64,
}

fn enumerate(a: &EnumerateArgs) -> Result<Outcome> {
    let c = load_matrix(a.input.as_deref(), a.n.map(|n| n as usize), a.seed)?;
    let all = enumerate_field(&c)?;
    if format_or(&a.output, Format::Csv) == Format::Json {
        let values: Vec<EnumeratedValue> = all
            .into_iter()
            .map(|(assignment, field_value)| EnumeratedValue {
                assignment,
                field_value,
            })
            .collect();
        return Ok(to_json(&values)?.into());
    }
    let mut t = Table::new(&["assignment", "field_value"])?;
    for (u, g) in &all {
        t.row(&[u.to_string(), num(*g)])?;
    }
    Ok(t.into_bytes()?.into())
}

#[derive(Serialize)]
struct Check {
    check: String,
    passed: bool,
    detail: String,
}

fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let n = a.n as usize;
    let deltas: Vec<f64> = if a.delta.is_empty() {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    } else {
        a.delta.clone()
    };
    let mut checks = Vec::new();

    for &delta in &deltas {
        let b = verify_ball_size(n, delta, a.seed)?;
        checks.push(Check {
            check: format!("ball_size delta={delta}"),
            passed: b.passed,
            detail: format!(
                "exhaustive {:?}, formula {}, bound {}",
                b.counts,
                b.formula,
                num(b.upper_bound)
            ),
        });
    }

    let exact = RencontresTable::exact(n)?;
    let hist = correlation_histogram_exact(n)?;
    let same_for_all = histogram_is_reference_invariant(n, a.seed, 3)?;
    checks.push(Check {
        check: "rencontres_histogram".into(),
        passed: hist == exact && same_for_all,
        detail: format!("exhaustive {:?}, formula {:?}", hist.counts, exact.counts),
    });

    if n <= 6 {
        let (p, q) = exhaustive_mean_correlation(n)?;
        checks.push(Check {
            check: "mean_correlation".into(),
            passed: (p, q) == (1, n as u128),
            detail: format!("exhaustive {p}/{q}, expected 1/{n}"),
        });
    }

    let c = CostMatrix::sample(n, a.seed)?;
    let values = field_values(&c)?;
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let brute = solve_max_bruteforce(&c)?.field_value;
    let exact_max = solve_max_exact(&c)?.field_value;
    checks.push(Check {
        check: "maximum".into(),
        passed: (best - brute).abs() <= 1e-9 && (best - exact_max).abs() <= 1e-9,
        detail: format!(
            "enumeration {}, brute force {}, exact {}",
            num(best),
            num(brute),
            num(exact_max)
        ),
    });
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    checks.push(Check {
        check: "field_mean".into(),
        passed: (mean - c.field_mean()).abs() <= 1e-10,
        detail: format!(
            "enumeration {}, closed form {}",
            num(mean),
            num(c.field_mean())
        ),
    });

    let passed = checks.iter().all(|c| c.passed);
    let bytes = match format_or(&a.output, Format::Csv) {
        Format::Json => to_json(&checks)?,
        Format::Csv => {
            let mut t = Table::new(&["check", "result", "detail"])?;
            for c in &checks {
                t.row(&[
                    c.check.as_str(),
                    if c.passed { "pass" } else { "fail" },
                    c.detail.as_str(),
                ])?;
            }
            t.into_bytes()?
        }
    };
    Ok(Outcome { bytes, passed })
}

fn symmetry(a: &SymmetryArgs) -> Result<Outcome> {
    let r = symmetry_check(a.n, a.reps, a.seed)?;
    Ok(match format_or(&a.output, Format::Json) {
        Format::Json => to_json(&r)?,
        Format::Csv => {
            let mut t = Table::new(&[
                "n",
                "reps",
                "statistic",
                "critical_value",
                "alpha",
                "passed",
            ])?;
            t.row(&[
                r.n.to_string(),
                r.replications.to_string(),
                num(r.ks.statistic),
                num(r.ks.critical_value),
                num(r.ks.alpha),
                r.ks.passed.to_string(),
            ])?;
            t.into_bytes()?
        }
    }
    .into())
}
