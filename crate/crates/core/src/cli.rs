//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or numerical failure, 2 the whole requested
//! time range is past extinction, 3 invalid input, 4 oracle instability.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{deviation_profile, phase_diagram, ConvergenceReport, PhaseRow};
use crate::closed_form::{EvalOptions, SolutionField};
use crate::model::{parse_datum_literal, validate_datum, FitnessSign, Parameters, Survival, MASS_TOL};
use crate::pde_oracle::{compare, fmt17, solve_observed, write_snapshots, ErrorReport, OracleConfig, OracleError};
use crate::quadrature::IntegralPath;
use crate::DEFAULT_TOL;

pub const TOL_ENV: &str = "REPLENS_TOL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_EXTINCT: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("extinct at T = {extinction} before the requested range starts at {start}")]
    ExtinctBeforeRange { extinction: f64, start: f64 },
    #[error("oracle failed: {0}")]
    Unstable(OracleError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::ExtinctBeforeRange { .. } => EXIT_EXTINCT,
            CliError::Unstable(_) => EXIT_UNSTABLE,
            CliError::Io(_) | CliError::Numerical(_) => EXIT_FAILURE,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Inclusive `lo:hi:step` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("expected lo:hi:step, got {s:?}"));
        };
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a number: {p:?}"))
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0) {
            return Err(format!("step must be positive, got {step}"));
        }
        if hi < lo {
            return Err(format!("empty range {lo}:{hi}"));
        }
        if (hi - lo) / step > 1e8 {
            return Err(format!("range {s:?} has too many points"));
        }
        Ok(Range { lo, hi, step })
    }
}

/// Comma-separated list of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberList(pub Vec<f64>);

impl FromStr for NumberList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(NumberList)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "replens", version, about = "Closed-form replicator-mutator solutions")]
pub struct Cli {
    /// Suppress informational messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Report oracle progress on stderr.
    #[arg(long, global = true)]
    pub progress: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_parser = FitnessSign::from_str)]
    pub fitness: FitnessSign,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: f64,
    /// `gaussian:a=..,m=..`, `mixture:w*gaussian:a=..,m=..;...` or `table:path.csv`.
    #[arg(long)]
    pub datum: String,
    /// Quadrature tolerance; falls back to $REPLENS_TOL.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate u(t,x).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "t", allow_hyphen_values = true)]
        t_range: Range,
        #[arg(long = "x", allow_hyphen_values = true)]
        x_range: Range,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Tabulate the mean fitness and the second moment.
    Meanfitness {
        #[command(flatten)]
        common: Common,
        #[arg(long = "t", allow_hyphen_values = true)]
        t_range: Range,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Extinction phase diagram for every datum and σ.
    Extinct {
        #[arg(long = "sigma", required = true, num_args = 1..)]
        sigmas: Vec<f64>,
        #[arg(long = "datum", required = true, num_args = 1..)]
        data: Vec<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Convergence towards the fundamental solution (harmonic fitness).
    Converge {
        #[arg(long, allow_hyphen_values = true)]
        sigma: f64,
        #[arg(long)]
        datum: String,
        #[arg(long, default_value = "1,2,3,5,8")]
        times: NumberList,
        #[arg(long = "x", allow_hyphen_values = true)]
        x_range: Option<Range>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Finite-difference run compared with the closed form.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        t_end: f64,
        /// Snapshot times compared with the closed form; `t_end` is always included.
        #[arg(long, allow_hyphen_values = true)]
        snapshots: Option<Range>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        renormalize: bool,
        /// Also write the snapshots as `t,x,u` rows.
        #[arg(long)]
        snapshots_csv: Option<PathBuf>,
    },
}

/// 17 significant digits for every float; non-finite values become `null`.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt17(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    out
}

fn csv_bytes(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(Vec::new());
    let io_err = |e: csv::Error| CliError::Io(io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt17(v))).map_err(io_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(io::Error::other(e.to_string())))
}

fn tolerance(flag: Option<f64>) -> Result<f64, CliError> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("{TOL_ENV}={s:?} is not a number")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    Ok(tol)
}

fn field_from(common: &Common) -> Result<SolutionField, CliError> {
    let params = Parameters::new(common.sigma, common.fitness).map_err(invalid)?;
    let datum = parse_datum_literal(&common.datum).map_err(invalid)?;
    let datum = validate_datum(datum, MASS_TOL).map_err(invalid)?;
    let opts = EvalOptions {
        tol: tolerance(common.tol)?,
        path: IntegralPath::Auto,
    };
    Ok(SolutionField::with_options(params, datum, opts))
}

fn check_times(ts: &[f64]) -> Result<(), CliError> {
    match ts.iter().find(|t| !(**t >= 0.0)) {
        Some(t) => Err(invalid(format!("times must be nonnegative, got {t}"))),
        None => Ok(()),
    }
}

/// Extinction status written next to outputs that reach `T`.
#[derive(Debug, Serialize)]
pub struct StatusSidecar {
    pub status: &'static str,
    pub extinction_time: f64,
    pub first_extinct_t: f64,
}

/// Extinction time when some requested `t` is at or past it.
fn extinction_in(field: &SolutionField, ts: &[f64]) -> Result<Option<(f64, f64)>, CliError> {
    let Some(report) = field.extinction() else {
        return Ok(None);
    };
    let first = ts.iter().copied().find(|&t| t >= report.time);
    match first {
        Some(f) if f == ts[0] => Err(CliError::ExtinctBeforeRange {
            extinction: report.time,
            start: ts[0],
        }),
        Some(f) => Ok(Some((report.time, f))),
        None => Ok(None),
    }
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".status.json");
    PathBuf::from(name)
}

/// What a command produced: the main payload and an optional sidecar.
#[derive(Debug, Default)]
pub struct Outcome {
    pub payload: Vec<u8>,
    pub sidecar: Option<Vec<u8>>,
    pub extra_files: Vec<(PathBuf, Vec<u8>)>,
}

#[derive(Debug, Serialize)]
struct EvaluateRow {
    t: f64,
    x: f64,
    u: f64,
}

#[derive(Debug, Serialize)]
struct MeanFitnessRow {
    t: f64,
    fbar: f64,
    second_moment: f64,
}

#[derive(Debug, Serialize)]
pub struct ExtinctSweep {
    pub sigma: f64,
    pub rows: Vec<PhaseRow>,
}

#[derive(Debug, Serialize)]
struct ConvergeOutput<'a> {
    datum: &'a str,
    #[serde(flatten)]
    report: ConvergenceReport,
}

#[derive(Debug, Serialize)]
struct OracleOutput<'a> {
    datum: &'a str,
    fitness: FitnessSign,
    sigma: f64,
    t_end: f64,
    config: &'a OracleConfig,
    report: ErrorReport,
    max_mass_drift: f64,
    clipped: usize,
    undershoots: usize,
    min_value: f64,
}

pub fn cmd_evaluate(common: &Common, t_range: Range, x_range: Range, format: Format) -> Result<Outcome, CliError> {
    let field = field_from(common)?;
    let ts = t_range.values();
    let xs = x_range.values();
    check_times(&ts)?;
    let extinct = extinction_in(&field, &ts)?;
    let slices = ts
        .par_iter()
        .map(|&t| match field.values(t, &xs) {
            Ok(Survival::Alive(u)) => Ok(u),
            Ok(Survival::Extinct) => Ok(vec![0.0; xs.len()]),
            Err(e) => Err(numerical(e)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let payload = match format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = ts
                .iter()
                .zip(&slices)
                .flat_map(|(&t, u)| xs.iter().zip(u).map(move |(&x, &u)| vec![t, x, u]))
                .collect();
            csv_bytes(&["t", "x", "u"], &rows)?
        }
        Format::Json => {
            let rows: Vec<EvaluateRow> = ts
                .iter()
                .zip(&slices)
                .flat_map(|(&t, u)| xs.iter().zip(u).map(move |(&x, &u)| EvaluateRow { t, x, u }))
                .collect();
            to_json(&rows)
        }
    };
    Ok(Outcome {
        payload,
        sidecar: extinct.map(|(time, first)| {
            to_json(&StatusSidecar {
                status: "extinct",
                extinction_time: time,
                first_extinct_t: first,
            })
        }),
        extra_files: Vec::new(),
    })
}

pub fn cmd_meanfitness(common: &Common, t_range: Range, format: Format) -> Result<Outcome, CliError> {
    let field = field_from(common)?;
    let ts = t_range.values();
    check_times(&ts)?;
    let extinct = extinction_in(&field, &ts)?;
    let alive: Vec<f64> = match extinct {
        Some((_, first)) => ts.iter().copied().filter(|&t| t < first).collect(),
        None => ts,
    };
    let rows = alive
        .par_iter()
        .map(|&t| {
            let m2 = field.second_moment(t).map_err(numerical)?;
            let fbar = field.mean_fitness(t).map_err(numerical)?;
            match (m2, fbar) {
                (Survival::Alive(m2), Survival::Alive(fbar)) => Ok(MeanFitnessRow { t, fbar, second_moment: m2 }),
                _ => Err(numerical(format!("unexpected extinction at t = {t}"))),
            }
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let payload = match format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.t, r.fbar, r.second_moment]).collect();
            csv_bytes(&["t", "fbar", "second_moment"], &rows)?
        }
        Format::Json => to_json(&rows),
    };
    Ok(Outcome {
        payload,
        sidecar: extinct.map(|(time, first)| {
            to_json(&StatusSidecar {
                status: "extinct",
                extinction_time: time,
                first_extinct_t: first,
            })
        }),
        extra_files: Vec::new(),
    })
}

pub fn cmd_extinct(sigmas: &[f64], data: &[String]) -> Result<Outcome, CliError> {
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("σ must be positive, got {s}")));
    }
    let parsed = data
        .iter()
        .map(|lit| {
            let d = parse_datum_literal(lit).map_err(invalid)?;
            let v = validate_datum(d, MASS_TOL).map_err(invalid)?;
            Ok((lit.clone(), v.datum().clone()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let sweeps: Vec<ExtinctSweep> = sigmas
        .par_iter()
        .map(|&sigma| ExtinctSweep {
            sigma,
            rows: phase_diagram(&parsed, sigma),
        })
        .collect();
    Ok(Outcome {
        payload: to_json(&sweeps),
        ..Outcome::default()
    })
}

pub fn cmd_converge(
    sigma: f64,
    datum: &str,
    times: &[f64],
    x_range: Option<Range>,
    tol: Option<f64>,
) -> Result<Outcome, CliError> {
    let common = Common {
        fitness: FitnessSign::Harmonic,
        sigma,
        datum: datum.to_string(),
        tol,
        output: None,
    };
    let field = field_from(&common)?;
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(invalid(format!("times must be positive, got {t}")));
    }
    let xs = x_range.map(|r| r.values());
    let report = deviation_profile(&field, times, xs.as_deref()).map_err(numerical)?;
    Ok(Outcome {
        payload: to_json(&ConvergeOutput { datum, report }),
        ..Outcome::default()
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_oracle(
    common: &Common,
    t_end: f64,
    snapshots: Option<Range>,
    half_width: Option<f64>,
    nx: Option<usize>,
    dt: Option<f64>,
    renormalize: bool,
    snapshots_csv: Option<&Path>,
    progress: Option<&mut dyn FnMut(f64)>,
) -> Result<Outcome, CliError> {
    let field = field_from(common)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(format!("t_end must be positive, got {t_end}")));
    }
    let mut cfg = OracleConfig::reference(field.datum(), common.sigma);
    if let Some(l) = half_width {
        cfg.half_width = l;
    }
    if let Some(n) = nx {
        cfg.nx = n;
    }
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    cfg.renormalize = renormalize;
    if let Some(r) = snapshots {
        cfg.snapshot_times = r.values();
    }
    let mut report_progress = progress;
    let mut next = 0.1;
    let traj = solve_observed(field.datum(), common.sigma, common.fitness, t_end, &cfg, |_, t| {
        if let Some(p) = report_progress.as_mut() {
            if t >= next * t_end {
                p(t / t_end);
                next += 0.1;
            }
        }
    })
    .map_err(|e| match e {
        OracleError::Config(_) | OracleError::StepTooLarge(_) | OracleError::BeyondExtinction { .. } => invalid(e),
        OracleError::BlowUp { .. } | OracleError::Instability { .. } => CliError::Unstable(e),
    })?;
    let report = compare(&traj, &field, None).map_err(numerical)?;
    let mut extra_files = Vec::new();
    if let Some(path) = snapshots_csv {
        let mut buf = Vec::new();
        write_snapshots(&traj, &mut buf).map_err(|e| CliError::Io(io::Error::other(e)))?;
        extra_files.push((path.to_path_buf(), buf));
    }
    let out = OracleOutput {
        datum: &common.datum,
        fitness: common.fitness,
        sigma: common.sigma,
        t_end,
        config: &cfg,
        report,
        max_mass_drift: traj.max_mass_drift(),
        clipped: traj.clipped,
        undershoots: traj.undershoots,
        min_value: traj.min_value,
    };
    Ok(Outcome {
        payload: to_json(&out),
        sidecar: None,
        extra_files,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()
}

/// Runs a parsed command, writing to `--output` or `stdout`.
pub fn run<O: Write, E: Write>(cli: Cli, stdout: &mut O, stderr: &mut E) -> Result<(), CliError> {
    let quiet = cli.quiet;
    let (outcome, output) = match &cli.command {
        Command::Evaluate { common, t_range, x_range, format } => {
            (cmd_evaluate(common, *t_range, *x_range, *format)?, common.output.clone())
        }
        Command::Meanfitness { common, t_range, format } => {
            (cmd_meanfitness(common, *t_range, *format)?, common.output.clone())
        }
        Command::Extinct { sigmas, data, output } => (cmd_extinct(sigmas, data)?, output.clone()),
        Command::Converge { sigma, datum, times, x_range, tol, output } => {
            (cmd_converge(*sigma, datum, &times.0, *x_range, *tol)?, output.clone())
        }
        Command::Oracle {
            common,
            t_end,
            snapshots,
            half_width,
            nx,
            dt,
            renormalize,
            snapshots_csv,
        } => {
            let mut report = |frac: f64| {
                let _ = writeln!(stderr, "oracle: {:.0}%", 100.0 * frac);
            };
            let progress: Option<&mut dyn FnMut(f64)> = if cli.progress && !quiet {
                Some(&mut report)
            } else {
                None
            };
            let outcome = cmd_oracle(
                common,
                *t_end,
                *snapshots,
                *half_width,
                *nx,
                *dt,
                *renormalize,
                snapshots_csv.as_deref(),
                progress,
            )?;
            (outcome, common.output.clone())
        }
    };
    match &output {
        Some(path) => {
            write_file(path, &outcome.payload)?;
            if let Some(side) = &outcome.sidecar {
                write_file(&sidecar_path(path), side)?;
            }
        }
        None => {
            stdout.write_all(&outcome.payload)?;
            if let Some(side) = &outcome.sidecar {
                if !quiet {
                    stderr.write_all(side)?;
                }
            }
        }
    }
    for (path, bytes) in &outcome.extra_files {
        write_file(path, bytes)?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T, O, E>(args: I, stdout: &mut O, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    match run(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "replens: {e}");
            e.exit_code()
        }
    }
}
