//! Command-line front end: threshold tables, rate-vs-loss curves, Monte Carlo
//! runs and brute-force bound verification, all written as CSV.
//!
//! Data goes to the output stream (stdout or `--out`), diagnostics to the
//! diagnostic stream. Exit statuses: 0 success, 1 usage or configuration
//! error, 2 at least one attack failed its bound check.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdrrdps::bounds::{threshold_with, BoundForm, ProtocolParams};
use hdrrdps::channel::{loss_grid, rate_curve_with, EmisTable, NoiseModel, RatePoint};
use hdrrdps::csv::fmt_num;
use hdrrdps::oracle::{random_attack, verify, VerificationReport, VERIFY_MAX_D, VERIFY_MAX_L};
use hdrrdps::sim::{run, run_with_rounds, RoundOutcome, SimStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hdrrdps::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "hdrrdps",
    version,
    about = "High-dimensional round-robin DPS QKD: key rates, thresholds, simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Error thresholds with and without monitoring.
    Threshold(ThresholdArgs),
    /// Secret key rate against channel loss.
    RateCurve(RateCurveArgs),
    /// Monte Carlo protocol rounds.
    Simulate(SimulateArgs),
    /// Check the analytic bounds against random collective attacks.
    VerifyBound(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Grid {
    /// Packet lengths: `a`, `a:b[:step]` or a comma list of those.
    #[arg(long = "L", value_name = "LIST")]
    pub l: String,
    /// Encoding dimensions, same syntax as --L.
    #[arg(long = "d", value_name = "LIST")]
    pub d: String,
    /// Output file; standard output if absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Monitor {
    On,
    Off,
    Both,
}

impl Monitor {
    fn flags(self) -> &'static [bool] {
        match self {
            Monitor::On => &[true],
            Monitor::Off => &[false],
            Monitor::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum FormArg {
    #[default]
    Symmetrized,
    Printed,
}

impl From<FormArg> for BoundForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Symmetrized => BoundForm::Symmetrized,
            FormArg::Printed => BoundForm::AsPrinted,
        }
    }
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, value_enum, default_value = "both")]
    pub monitor: Monitor,
    /// Bisection tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "symmetrized")]
    pub bound_form: FormArg,
}

#[derive(Debug, Args)]
pub struct RateCurveArgs {
    #[command(flatten)]
    pub grid: Grid,
    /// Mode mismatch probability.
    #[arg(long, default_value_t = 0.05)]
    pub e_mis: f64,
    /// Dark count probability per detector and gate.
    #[arg(long, default_value_t = 1e-4)]
    pub pd: f64,
    /// Loss in dB: a value, `a:b[:step]` or a comma list.
    #[arg(long, default_value = "0:60:0.5")]
    pub loss: String,
    #[arg(long, value_enum, default_value = "both")]
    pub monitor: Monitor,
    /// CSV of `L,d,e_mis`; overrides --e-mis per (L, d).
    #[arg(long, value_name = "PATH")]
    pub emis_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "symmetrized")]
    pub bound_form: FormArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, default_value_t = 0.0)]
    pub e_mis: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pd: f64,
    #[arg(long, default_value = "0")]
    pub loss: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stream one CSV row per round; the summary goes to stderr.
    #[arg(long)]
    pub dump_rounds: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    /// Trial `t` uses seed `seed + t`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Squared diagonal weight of every attack; drawn per trial if absent.
    #[arg(long)]
    pub diag_bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Threshold,
    RateCurve,
    Simulate,
    VerifyBound,
}

/// Validated settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub ls: Vec<u32>,
    pub ds: Vec<u32>,
    /// Dark count and mismatch settings; the loss comes from `losses`.
    pub noise: NoiseModel,
    pub losses: Vec<f64>,
    pub rounds: u64,
    pub seed: u64,
    pub trials: u64,
    pub monitor: Monitor,
    pub tol: f64,
    pub bound_form: BoundForm,
    pub diag_bias: Option<f64>,
    pub dump_rounds: bool,
    pub output_path: Option<PathBuf>,
    pub emis_path: Option<PathBuf>,
}

impl RunConfig {
    fn base(command: Command, grid: &Grid) -> CliResult<Self> {
        Ok(Self {
            command,
            ls: parse_int_list(&grid.l).map_err(|e| CliError::Usage(format!("--L: {e}")))?,
            ds: parse_int_list(&grid.d).map_err(|e| CliError::Usage(format!("--d: {e}")))?,
            noise: NoiseModel::noiseless(),
            losses: vec![0.0],
            rounds: 1,
            seed: 0,
            trials: 1,
            monitor: Monitor::Both,
            tol: 1e-9,
            bound_form: BoundForm::default(),
            diag_bias: None,
            dump_rounds: false,
            output_path: grid.out.clone(),
            emis_path: None,
        })
    }

    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let cfg = match &cli.command {
            Sub::Threshold(a) => Self {
                monitor: a.monitor,
                tol: a.tol,
                bound_form: a.bound_form.into(),
                ..Self::base(Command::Threshold, &a.grid)?
            },
            Sub::RateCurve(a) => Self {
                noise: noise(a.pd, a.e_mis)?,
                losses: parse_loss(&a.loss)?,
                monitor: a.monitor,
                emis_path: a.emis_table.clone(),
                bound_form: a.bound_form.into(),
                ..Self::base(Command::RateCurve, &a.grid)?
            },
            Sub::Simulate(a) => Self {
                noise: noise(a.pd, a.e_mis)?,
                losses: parse_loss(&a.loss)?,
                rounds: a.rounds,
                seed: a.seed,
                dump_rounds: a.dump_rounds,
                ..Self::base(Command::Simulate, &a.grid)?
            },
            Sub::VerifyBound(a) => Self {
                trials: a.trials,
                seed: a.seed,
                tol: a.tol,
                diag_bias: a.diag_bias,
                ..Self::base(Command::VerifyBound, &a.grid)?
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage(format!(
                "--tol must be positive, got {}",
                self.tol
            )));
        }
        match self.command {
            Command::Simulate => {
                if self.rounds == 0 {
                    return Err(CliError::Usage("--rounds must be at least 1".into()));
                }
                if self.dump_rounds && self.ls.len() * self.ds.len() * self.losses.len() != 1 {
                    return Err(CliError::Usage(
                        "--dump-rounds needs a single L, d and loss value".into(),
                    ));
                }
            }
            Command::VerifyBound => {
                if self.trials == 0 {
                    return Err(CliError::Usage("--trials must be at least 1".into()));
                }
                if let Some(b) = self.diag_bias {
                    if !(0.0..=1.0).contains(&b) {
                        return Err(CliError::Usage(format!(
                            "--diag-bias must lie in [0, 1], got {b}"
                        )));
                    }
                }
                let too_big = self.ls.iter().any(|&l| l > VERIFY_MAX_L)
                    || self.ds.iter().any(|&d| d > VERIFY_MAX_D);
                if too_big {
                    return Err(CliError::Usage(format!(
                        "verify-bound is capped at L <= {VERIFY_MAX_L} and d <= {VERIFY_MAX_D}"
                    )));
                }
            }
            Command::Threshold | Command::RateCurve => {}
        }
        Ok(())
    }
}

fn noise(pd: f64, e_mis: f64) -> CliResult<NoiseModel> {
    NoiseModel::new(0.0, pd, e_mis).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_loss(s: &str) -> CliResult<Vec<f64>> {
    parse_real_list(s).map_err(|e| CliError::Usage(format!("--loss: {e}")))
}

/// `3`, `3:64`, `3:64:2`, `2,3,4` or any comma list of those.
pub fn parse_int_list(s: &str) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad integer {p:?} in {s:?}"))
        };
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 || b < a {
                    return Err(format!("bad range {item:?}"));
                }
                out.extend((a..=b).step_by(step as usize));
            }
            _ => return Err(format!("bad range {item:?}")),
        }
    }
    Ok(out)
}

/// Like [`parse_int_list`] for reals; ranges are inclusive with step 1 by default.
pub fn parse_real_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |p: &str| match p.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("bad number {p:?} in {s:?}")),
        };
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b] => out.extend(loss_grid(num(a)?, num(b)?, 1.0).map_err(|e| e.to_string())?),
            [a, b, c] => {
                out.extend(loss_grid(num(a)?, num(b)?, num(c)?).map_err(|e| e.to_string())?)
            }
            _ => return Err(format!("bad range {item:?}")),
        }
    }
    Ok(out)
}

/// Valid `(L, d)` pairs in request order; the rest are reported on `diag`.
fn pairs(cfg: &RunConfig, diag: &mut dyn Write) -> CliResult<Vec<ProtocolParams>> {
    let mut out = Vec::new();
    for &l in &cfg.ls {
        for &d in &cfg.ds {
            match ProtocolParams::new(l, d) {
                Ok(p) => out.push(p),
                Err(e) => writeln!(diag, "warning: skipping L={l}, d={d}: {e}")?,
            }
        }
    }
    Ok(out)
}

/// Whether every bound check passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    VerificationFailed,
}

pub fn cmd_threshold(
    cfg: &RunConfig,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> CliResult<Outcome> {
    writeln!(out, "L,d,monitored,threshold")?;
    for p in pairs(cfg, diag)? {
        for &m in cfg.monitor.flags() {
            let t = threshold_with(p, m, cfg.tol, cfg.bound_form);
            writeln!(out, "{},{},{},{}", p.l(), p.d(), m, fmt_num(t.value))?;
        }
    }
    Ok(Outcome::Ok)
}

pub fn cmd_rate_curve(
    cfg: &RunConfig,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> CliResult<Outcome> {
    let table = match &cfg.emis_path {
        Some(path) => Some(
            EmisTable::load(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let pairs = pairs(cfg, diag)?;
    // resolve every e_mis first so a missing entry fails before any output
    let noises = pairs
        .iter()
        .map(|&p| match &table {
            Some(t) => Ok(cfg.noise.with_e_mis(t.get(p)?)?),
            None => Ok(cfg.noise),
        })
        .collect::<CliResult<Vec<_>>>()?;
    writeln!(out, "L,d,{}", RatePoint::CSV_HEADER)?;
    for (p, noise) in pairs.iter().zip(&noises) {
        for &m in cfg.monitor.flags() {
            for point in rate_curve_with(*p, noise, &cfg.losses, m, cfg.bound_form)? {
                writeln!(out, "{},{},{}", p.l(), p.d(), point.csv_row())?;
            }
        }
    }
    Ok(Outcome::Ok)
}

const SIM_PREFIX: &str = "L,d,loss_db,p_d,e_mis,seed";

pub fn cmd_simulate(
    cfg: &RunConfig,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> CliResult<Outcome> {
    let pairs = pairs(cfg, diag)?;
    let prefix = |p: ProtocolParams, n: &NoiseModel| {
        format!(
            "{},{},{},{},{},{}",
            p.l(),
            p.d(),
            fmt_num(n.loss_db()),
            fmt_num(n.p_d()),
            fmt_num(n.e_mis()),
            cfg.seed
        )
    };
    if cfg.dump_rounds {
        let Some(&p) = pairs.first() else {
            return Ok(Outcome::Ok);
        };
        let noise = cfg.noise.with_loss(cfg.losses[0])?;
        writeln!(out, "{}", RoundOutcome::CSV_HEADER)?;
        let stats = run_with_rounds(p, &noise, cfg.rounds, cfg.seed, |r, o| {
            writeln!(out, "{}", o.csv_row(r))?;
            Ok(())
        })?;
        writeln!(diag, "{SIM_PREFIX},{}", SimStats::CSV_HEADER)?;
        writeln!(diag, "{},{}", prefix(p, &noise), stats.csv_row())?;
        return Ok(Outcome::Ok);
    }
    writeln!(out, "{SIM_PREFIX},{}", SimStats::CSV_HEADER)?;
    for p in pairs {
        for &loss in &cfg.losses {
            let noise = cfg.noise.with_loss(loss)?;
            let stats = run(p, &noise, cfg.rounds, cfg.seed)?;
            writeln!(out, "{},{}", prefix(p, &noise), stats.csv_row())?;
        }
    }
    Ok(Outcome::Ok)
}

/// Diagonal weight for trial seed `seed` when none is fixed on the command line.
pub fn trial_diag_bias(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng.random::<f64>()
}

pub fn cmd_verify_bound(
    cfg: &RunConfig,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> CliResult<Outcome> {
    writeln!(out, "{}", VerificationReport::CSV_HEADER)?;
    let mut failures = 0u64;
    for p in pairs(cfg, diag)? {
        for t in 0..cfg.trials {
            let seed = cfg.seed.wrapping_add(t);
            let bias = cfg.diag_bias.unwrap_or_else(|| trial_diag_bias(seed));
            let attack = random_attack(p.l() as usize, seed, bias)?;
            let report = verify(&attack, p, cfg.tol)?.with_seed(seed);
            failures += u64::from(!report.pass);
            writeln!(out, "{}", report.csv_row())?;
        }
    }
    if failures > 0 {
        writeln!(diag, "{failures} attack(s) violated the bound")?;
        return Ok(Outcome::VerificationFailed);
    }
    Ok(Outcome::Ok)
}

pub fn execute(cfg: &RunConfig, out: &mut dyn Write, diag: &mut dyn Write) -> CliResult<Outcome> {
    let outcome = match cfg.command {
        Command::Threshold => cmd_threshold(cfg, out, diag),
        Command::RateCurve => cmd_rate_curve(cfg, out, diag),
        Command::Simulate => cmd_simulate(cfg, out, diag),
        Command::VerifyBound => cmd_verify_bound(cfg, out, diag),
    }?;
    out.flush()?;
    Ok(outcome)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Data goes to `--out` if given, else `stdout`.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, diag: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(diag, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = RunConfig::from_cli(&cli).and_then(|cfg| match &cfg.output_path {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            execute(&cfg, &mut file, diag)
        }
        None => execute(&cfg, stdout, diag),
    });
    match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::VerificationFailed) => EXIT_VERIFY_FAILED,
        Err(e) => {
            let _ = writeln!(diag, "error: {e}");
            EXIT_USAGE
        }
    }
}
