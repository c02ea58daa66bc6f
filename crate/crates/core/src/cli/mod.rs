//! Command-line interface: `fit`, `simulate` and `elicit`.
//!
//! Exit codes are 0 on success, 2 for usage and data errors and 3 for
//! numerical failures.

pub mod contours;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::em::EmConfig;
use crate::gibbs::ChainConfig;
use crate::prior::{NormConstTable, PriorSettings, DEFAULT_KAPPA_THRESHOLD};
use crate::selection::{
    resolve_dispersions, select, Chosen, CovChoice, MapEstimate, ModelRecord, NormConstRecord,
    SelectionConfig, SettingsEcho,
};
use crate::simulate::{simulate_case, simulate_student_misspec, Simulated};
use crate::{CovStructure, Dataset, Error, RandomStream};

use contours::{padded_range, write_contours, Projection};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest `kmax` accepted by `fit`.
pub const MAX_KMAX: usize = 7;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Shape(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "momix",
    version,
    about = "Number of Normal mixture components under non-local priors"
)]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every model in the space and write a JSON report.
    Fit(FitArgs),
    /// Draw a sample from one of the simulation truths.
    Simulate(SimulateArgs),
    /// Print the default prior settings for a dimension.
    Elicit(ElicitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Equal,
    Unequal,
    Both,
}

impl From<CovArg> for CovChoice {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Equal => CovChoice::Equal,
            CovArg::Unequal => CovChoice::Unequal,
            CovArg::Both => CovChoice::Both,
        }
    }
}

/// `auto` (`None`) or a positive number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Auto(pub Option<f64>);

fn parse_auto(s: &str) -> Result<Auto, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Auto(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Auto(Some(v))),
        _ => Err(format!("expected 'auto' or a positive number, got {s:?}")),
    }
}

fn parse_prob(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a probability in (0, 1), got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Comma-separated numeric data, one observation per row.
    #[arg(long)]
    pub data: PathBuf,
    /// The first row holds column names.
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = 6)]
    pub kmax: usize,
    #[arg(long, value_enum, default_value_t = CovArg::Both)]
    pub cov: CovArg,
    /// Prior dispersion of the means.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub g: Auto,
    /// Dirichlet parameter of the weights.
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub q: Auto,
    /// Prior probability that two components are closer than the separation threshold.
    #[arg(long, default_value_t = 0.05, value_parser = parse_prob)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7500)]
    pub iters: usize,
    #[arg(long, default_value_t = 2500)]
    pub burnin: usize,
    /// Random restarts of maximum likelihood EM.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = crate::em::DEFAULT_MAX_ITERS)]
    pub em_max_iters: usize,
    #[arg(long, default_value_t = crate::em::DEFAULT_TOL)]
    pub em_tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<out stem>.contours.csv` with density grids of the chosen models.
    #[arg(long)]
    pub contours: bool,
    /// Project data with more than two columns onto their first two principal components.
    #[arg(long)]
    pub pca2: bool,
    /// Grid points per axis for contours.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `1` to `8`, or `student-t`.
    #[arg(long)]
    pub case: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV path; the truth goes to `<stem>.truth.json` alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0.05, value_parser = parse_prob)]
    pub alpha: f64,
    #[arg(long, default_value_t = 6)]
    pub kmax: usize,
}

#[derive(Debug, Serialize)]
pub struct DataSummary {
    pub path: String,
    pub n: usize,
    pub p: usize,
    pub columns: Option<Vec<String>>,
    pub constant_columns: Vec<usize>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct NonemptyDiagnostic {
    pub k: usize,
    pub cov: CovStructure,
    pub lp: Vec<f64>,
    pub nlp: Vec<f64>,
}

/// The document written by `fit`.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub version: &'static str,
    pub seed: u64,
    pub data: DataSummary,
    pub log_jacobian: f64,
    pub settings: SettingsEcho,
    pub models: Vec<ModelRecord>,
    pub chosen: Chosen,
    pub map_estimates: Vec<MapEstimate>,
    pub nonempty_diagnostic: Option<NonemptyDiagnostic>,
    pub norm_consts: Vec<NormConstRecord>,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    case: &'a str,
    n: usize,
    seed: u64,
    #[serde(flatten)]
    sim: &'a Simulated,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    // a second call (tests run several commands in one process) is harmless
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Elicit(a) => {
            print!("{}", cmd_elicit(a)?);
            Ok(())
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    if !(1..=MAX_KMAX).contains(&a.kmax) {
        return Err(CliError::Usage(format!(
            "--kmax must lie in 1..={MAX_KMAX}, got {}",
            a.kmax
        )));
    }
    if a.iters <= a.burnin {
        return Err(CliError::Usage(format!(
            "--iters ({}) must exceed --burnin ({})",
            a.iters, a.burnin
        )));
    }
    if a.restarts == 0 || a.grid < 2 || !(a.em_tol > 0.0) {
        return Err(CliError::Usage(
            "--restarts must be positive, --grid at least 2, --em-tol positive".into(),
        ));
    }
    let table = io::read_csv(&a.data, a.header)?;
    let (n, p) = table.values.shape();
    if n < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 observations, found {n}"
        )));
    }
    if a.contours && p != 2 && !(a.pca2 && p > 2) {
        return Err(CliError::Usage(format!(
            "contours need bivariate data (found p = {p}); use --pca2 for p > 2"
        )));
    }
    let data = Dataset::standardize(&table.values)?;
    let constant: Vec<usize> = (0..p).filter(|&j| data.constant_columns()[j]).collect();
    for j in &constant {
        log::warn!("column {} is constant", j + 1);
    }
    let cfg = SelectionConfig {
        kmax: a.kmax,
        cov: a.cov.into(),
        g: a.g.0,
        q: a.q.0,
        tail_prob: a.alpha,
        chain: ChainConfig {
            iters: a.iters,
            burnin: a.burnin,
        },
        em: EmConfig {
            max_iters: a.em_max_iters,
            tol: a.em_tol,
            mle_restarts: a.restarts,
        },
        seed: a.seed,
    };
    let report = select(&data, &cfg, None)?;
    let nonempty_diagnostic = report.chosen.nlp.and_then(|c| {
        report.record(c.k, c.cov).map(|m| NonemptyDiagnostic {
            k: m.k,
            cov: m.cov,
            lp: m.nonempty_lp.clone(),
            nlp: m.nonempty_nlp.clone(),
        })
    });
    if a.contours {
        let proj = if p == 2 {
            Projection::identity()
        } else {
            Projection::pca2(&table.values)
        };
        if p > 2 {
            log::info!(
                "first two principal components explain {:.1}% of the variance",
                100.0 * proj.explained
            );
        }
        let range = padded_range(&proj.points(&table.values));
        let mut estimates = Vec::new();
        for m in &report.map_estimates {
            estimates.push((m.method.clone(), proj.params(&m.params.to_params()?)?));
        }
        write_contours(&sibling(&a.out, ".contours.csv"), &estimates, range, a.grid)?;
    }
    let out = FitReport {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        seed: a.seed,
        data: DataSummary {
            path: a.data.display().to_string(),
            n,
            p,
            columns: table.header,
            constant_columns: constant,
            center: data.center().iter().copied().collect(),
            scale: data.scale().iter().copied().collect(),
        },
        log_jacobian: report.log_jacobian,
        settings: report.settings,
        models: report.models,
        chosen: report.chosen,
        map_estimates: report.map_estimates,
        nonempty_diagnostic,
        norm_consts: report.norm_consts,
    };
    io::write_json(&a.out, &out)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut rng = RandomStream::new(a.seed, 0);
    let sim = if a.case.eq_ignore_ascii_case("student-t") {
        simulate_student_misspec(a.n, &mut rng)
    } else {
        let id: u8 = a
            .case
            .parse()
            .ok()
            .filter(|c| (1..=8).contains(c))
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "--case must be 1..8 or student-t, got {:?}",
                    a.case
                ))
            })?;
        simulate_case(id, a.n, &mut rng)?
    };
    io::write_matrix_csv(&a.out, &sim.y)?;
    io::write_json(
        &sibling(&a.out, ".truth.json"),
        &Sidecar {
            case: &a.case,
            n: a.n,
            seed: a.seed,
            sim: &sim,
        },
    )
}

/// The text printed by `elicit`.
pub fn cmd_elicit(a: &ElicitArgs) -> Result<String, CliError> {
    use std::fmt::Write as _;
    if a.p == 0 || a.kmax == 0 {
        return Err(CliError::Usage("--p and --kmax must be positive".into()));
    }
    let p = a.p;
    let cfg = SelectionConfig {
        tail_prob: a.alpha,
        ..Default::default()
    };
    let (g, g_local) = resolve_dispersions(p, &cfg)?;
    let nu = p as f64 + 4.0;
    let mut s = String::new();
    let _ = writeln!(s, "p                 {p}");
    let _ = writeln!(s, "alpha             {}", a.alpha);
    let _ = writeln!(s, "kappa threshold   {DEFAULT_KAPPA_THRESHOLD}");
    let _ = writeln!(s, "g (non-local)     {g:.6}");
    let _ = writeln!(s, "g (local)         {g_local:.6}");
    let _ = writeln!(
        s,
        "q (equal)         {}",
        PriorSettings::default_q(p, CovStructure::Equal)
    );
    let _ = writeln!(
        s,
        "q (unequal)       {}",
        PriorSettings::default_q(p, CovStructure::Unequal)
    );
    let _ = writeln!(s, "nu                {nu}");
    let _ = writeln!(s, "S                 I/{nu} (diagonal {:.6})", 1.0 / nu);
    let _ = writeln!(s, "\n k  C_k                       method");
    let table = NormConstTable::build(a.kmax, p, &mut RandomStream::new(1, u64::MAX))?;
    for ((k, _), e) in table.entries() {
        let method = serde_json::to_value(e.method)
            .map_or_else(|_| String::new(), |v| v.as_str().unwrap_or("").to_string());
        match e.std_err {
            Some(se) => {
                let _ = writeln!(s, "{k:>2}  {:<24.10e}  {method} (se {se:.3e})", e.value);
            }
            None => {
                let _ = writeln!(s, "{k:>2}  {:<24.10e}  {method}", e.value);
            }
        }
    }
    Ok(s)
}
