mod artifact;
mod check;
mod error;
mod fit;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use error::CliError;
use ponly::data::BackgroundMode;
use ponly::simstudy::SpecVariant;
use ponly::solvers::{Penalty, PenaltyKind};

#[derive(Debug, Parser)]
#[command(name = "ponly", version, about = "Presence-only species distribution estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a presence/background CSV and write the fit as JSON.
    Fit(FitArgs),
    /// Simulate a presence/background dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the logistic-regression misspecification sweep and write its table.
    Sweep(SweepArgs),
    /// Run equivalence checks and write one JSON report per line.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Ipp,
    Maxent,
    Lr,
    Iwlr,
    BermanTurner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyName {
    None,
    L1,
    L2,
    Elastic,
}

impl From<PenaltyName> for PenaltyKind {
    fn from(p: PenaltyName) -> Self {
        match p {
            PenaltyName::None => PenaltyKind::None,
            PenaltyName::L1 => PenaltyKind::L1,
            PenaltyName::L2 => PenaltyKind::L2,
            PenaltyName::Elastic => PenaltyKind::Elastic,
        }
    }
}

/// Penalty as it appears in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub mix: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            kind: PenaltyKind::None,
            lambda: 0.0,
            mix: 0.5,
        }
    }
}

impl PenaltyConfig {
    pub fn apply(&mut self, flags: &PenaltyFlags) {
        if let Some(p) = flags.penalty {
            self.kind = p.into();
        }
        if let Some(l) = flags.lambda {
            self.lambda = l;
        }
        if let Some(m) = flags.mix {
            self.mix = m;
        }
    }

    pub fn build(&self) -> Result<Penalty, CliError> {
        let needs_lambda = self.kind != PenaltyKind::None;
        if needs_lambda && !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CliError::Input(format!("--lambda must be >= 0, got {}", self.lambda)));
        }
        let p = match self.kind {
            PenaltyKind::None => Penalty::none(),
            PenaltyKind::L1 => Penalty::l1(self.lambda),
            PenaltyKind::L2 => Penalty::l2(self.lambda),
            PenaltyKind::Elastic => Penalty::elastic(self.lambda, self.mix),
        };
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct PenaltyFlags {
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyName>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Elastic-net share of the L1 term.
    #[arg(long)]
    pub mix: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl SolverFlags {
    pub fn apply(&self, opts: &mut ponly::solvers::OptimOptions) {
        if let Some(t) = self.grad_tol {
            opts.grad_tol = t;
        }
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Presence/background CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Area of the study domain.
    #[arg(long)]
    pub area: Option<f64>,
    #[command(flatten)]
    pub penalty: PenaltyFlags,
    /// Fixed background weight for `lr` and `iwlr` (iwlr escalates it otherwise).
    #[arg(long = "W")]
    pub weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config JSON, or an earlier artifact to reproduce.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Mixture45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackgroundName {
    Uniform,
    Grid,
}

impl From<BackgroundName> for BackgroundMode {
    fn from(b: BackgroundName) -> Self {
        match b {
            BackgroundName::Uniform => BackgroundMode::Uniform,
            BackgroundName::Grid => BackgroundMode::Grid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantName {
    Canonical,
    Alternate,
    Correct,
}

impl From<VariantName> for SpecVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Canonical => SpecVariant::Canonical,
            VariantName::Alternate => SpecVariant::Alternate,
            VariantName::Correct => SpecVariant::Correct,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named study design instead of a model spec.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Presence law for the preset.
    #[arg(long, value_enum)]
    pub variant: Option<VariantName>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long, value_enum)]
    pub background: Option<BackgroundName>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Simulation spec JSON (intensity or thinning model, domain, features), or an earlier artifact.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep config JSON, or an earlier artifact.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated estimators (iwlr, lr).
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantName>,
    /// Add n0 = 10^6 to the grid.
    #[arg(long)]
    pub full_grid: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Check this CSV instead of running the standard random sweep.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub area: Option<f64>,
    #[command(flatten)]
    pub penalty: PenaltyFlags,
    /// Fixed background weight for the weighted-logistic check.
    #[arg(long = "W")]
    pub weight: Option<f64>,
    /// Replace every check's tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PONLY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("PONLY_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Check(a) => check::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ponly: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
