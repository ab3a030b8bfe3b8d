use std::collections::HashSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use graf_core::solvers::Method;

#[derive(Parser, Debug)]
#[command(
    name = "graf",
    version,
    about = "Gaussian random assignment field: solvers, bounds, enumeration and Monte Carlo studies",
    propagate_version = true
)]
pub struct Cli {
    /// Flat `key = value` file supplying flag values; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for replication pools [default: logical cores].
    #[arg(long, global = true, value_parser = positive_usize)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Solve one assignment problem read from a cost-matrix CSV or sampled from a seed.
    Solve(SolveArgs),
    /// Write a seeded Gaussian cost matrix as CSV.
    Sample(SampleArgs),
    /// Closed-form bounds on E(M_n), Var(M_n), near-max sets and V_n(delta).
    Bounds(BoundsArgs),
    /// Monte Carlo estimate of the maximum, minimum, greedy value and field mean.
    Estimate(EstimateArgs),
    /// One Monte Carlo estimate per n for the E(M_n) / sqrt(2 ln n!) study.
    RatioTable(RatioTableArgs),
    /// Expected dimension of the near-maximal set by exhaustive enumeration.
    Nearmax(NearmaxArgs),
    /// Every assignment and its field value for one matrix (n <= 9).
    Enumerate(EnumerateArgs),
    /// Exhaustive checks of the counting formulas and solvers at one n (n <= 8).
    Verify(VerifyArgs),
    /// Kolmogorov-Smirnov check that -W_n and M_n share a law.
    Symmetry(SymmetryArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Sample(_) => "sample",
            Command::Bounds(_) => "bounds",
            Command::Estimate(_) => "estimate",
            Command::RatioTable(_) => "ratio-table",
            Command::Nearmax(_) => "nearmax",
            Command::Enumerate(_) => "enumerate",
            Command::Verify(_) => "verify",
            Command::Symmetry(_) => "symmetry",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::Solve(a) => &a.output,
            Command::Sample(a) => &a.output,
            Command::Bounds(a) => &a.output,
            Command::Estimate(a) => &a.output,
            Command::RatioTable(a) => &a.output,
            Command::Nearmax(a) => &a.output,
            Command::Enumerate(a) => &a.output,
            Command::Verify(a) => &a.output,
            Command::Symmetry(a) => &a.output,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Solve(a) => a.seed,
            Command::Sample(a) => Some(a.seed),
            Command::Bounds(_) => None,
            Command::Estimate(a) => Some(a.seed),
            Command::RatioTable(a) => Some(a.seed),
            Command::Nearmax(a) => Some(a.seed),
            Command::Enumerate(a) => a.seed,
            Command::Verify(a) => Some(a.seed),
            Command::Symmetry(a) => Some(a.seed),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputArgs {
    /// Output file, written atomically; a `<out>.manifest.json` sidecar records the run.
    /// Without it the result goes to stdout and the manifest to stderr.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Output format [default depends on the subcommand].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Brute,
    Exact,
    Greedy,
    Min,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Brute => Method::Brute,
            MethodArg::Exact => Method::Exact,
            MethodArg::Greedy => Method::Greedy,
            MethodArg::Min => Method::Min,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    /// Cost-matrix CSV (`# n=<n>` header, then n rows).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["n", "seed"])]
    pub input: Option<PathBuf>,
    /// Size of a sampled matrix (with --seed) instead of --input.
    #[arg(long, value_parser = positive_usize, required_unless_present = "input", requires = "seed")]
    pub n: Option<usize>,
    #[arg(long, requires = "n")]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: MethodArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[arg(long, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive_usize)]
    pub n_list: Vec<usize>,
    /// Near-max epsilon grid; adds one row per (n, eps).
    #[arg(long, value_delimiter = ',', value_parser = open_unit)]
    pub eps: Vec<f64>,
    /// Ball radius grid; adds exact V_n(delta) (n <= 20) and n^{delta n} columns.
    #[arg(long, value_delimiter = ',', value_parser = open_unit)]
    pub delta: Vec<f64>,
    /// Constant of the small-epsilon near-max bound.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub c_small: f64,
    /// Constant of the large-epsilon near-max bound.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub c_large: f64,
    /// Constant C in K = C max(eps m^2, m) of the general near-max bound.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub c: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[arg(long, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long, value_parser = replications)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RatioTableArgs {
    #[arg(long, value_delimiter = ',', required = true, value_parser = at_least_two)]
    pub n_list: Vec<usize>,
    #[arg(long, value_parser = replications)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NearmaxArgs {
    /// One or more sizes, each at most 9.
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..=9))]
    pub n: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = open_unit)]
    pub eps: Vec<f64>,
    /// Matrices enumerated per n.
    #[arg(long, value_parser = replications)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Replications of the pass estimating m = E(M_n).
    #[arg(long, default_value_t = 100_000, value_parser = replications)]
    pub m_reps: u64,
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub c_small: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub c_large: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EnumerateArgs {
    #[arg(long, value_name = "PATH", conflicts_with_all = ["n", "seed"])]
    pub input: Option<PathBuf>,
    #[arg(
        long,
        value_parser = clap::value_parser!(u64).range(1..=9),
        required_unless_present = "input",
        requires = "seed"
    )]
    pub n: Option<u64>,
    #[arg(long, requires = "n")]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub n: u64,
    /// Ball radii to check [default: 0.1, 0.2, ..., 0.9].
    #[arg(long, value_delimiter = ',', value_parser = open_unit)]
    pub delta: Vec<f64>,
    /// Seed for the reference permutations and the test matrix.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SymmetryArgs {
    #[arg(long, value_parser = positive_usize)]
    pub n: usize,
    /// Samples per side, at least 100.
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn at_least_two(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("`{s}` is not an integer >= 2")),
    }
}

fn replications(s: &str) -> Result<u64, String> {
    match s.trim().parse::<u64>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("`{s}` is not an integer >= 2")),
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not a number in (0, 1)")),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive finite number")),
    }
}

/// Parses `argv`, first merging any `--config` file into it.
pub fn parse<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let merged = merge_config(argv)?;
    Cli::try_parse_from(merged)
}

fn usage_error(msg: String) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, msg)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Appends `--key value` for every config entry whose flag is absent from `argv`.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, clap::Error> {
    let strings: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let Some(path) = config_path(&strings) else {
        return Ok(argv);
    };
    let root = Cli::command();
    let Some(sub) = strings.iter().skip(1).find_map(|a| root.find_subcommand(a)) else {
        // Let clap report the missing subcommand.
        return Ok(argv);
    };

    let entries = read_config(&path)?;
    let present: HashSet<&str> = strings
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();

    let mut merged = argv.clone();
    for (line, key, value) in entries {
        let key = key.replace('_', "-");
        if key == "config" {
            return Err(usage_error(format!(
                "{}:{line}: a config file cannot name another config file",
                path.display()
            )));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                usage_error(format!(
                    "{}:{line}: unknown key `{key}` for subcommand `{}`",
                    path.display(),
                    sub.get_name()
                ))
            })?;
        if present.contains(key.as_str()) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => merged.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(usage_error(format!(
                        "{}:{line}: `{key}` takes true or false",
                        path.display()
                    )))
                }
            }
        } else {
            merged.push(format!("--{key}").into());
            merged.push(value.into());
        }
    }
    Ok(merged)
}

/// `key = value` lines; `#` starts a comment line, blank lines are skipped.
fn read_config(path: &Path) -> Result<Vec<(usize, String, String)>, clap::Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage_error(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage_error(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !seen.insert(key.clone()) {
            return Err(usage_error(format!(
                "{}:{}: duplicate key `{key}`",
                path.display(),
                i + 1
            )));
        }
        out.push((i + 1, key, value.trim().to_string()));
    }
    Ok(out)
}
