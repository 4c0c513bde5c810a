use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_background, draw_presence, population_lr_limit, study_dataset, MixtureSpec1D, SpecVariant};
use crate::error::{DataError, Error};
use crate::rng::derive_seed;
use crate::solvers::{fit_iwlr, fit_logistic, OptimOptions, Penalty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Infinitely weighted logistic regression.
    Iwlr,
    /// Unweighted logistic regression.
    Lr,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Iwlr => "iwlr",
            Estimator::Lr => "lr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "iwlr" => Some(Estimator::Iwlr),
            "lr" => Some(Estimator::Lr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n1: usize,
    pub n0_grid: Vec<usize>,
    pub replicates: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub spec_variant: SpecVariant,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n1: 3000,
            n0_grid: vec![1_000, 3_000, 10_000, 30_000, 100_000, 300_000],
            replicates: 20,
            estimators: vec![Estimator::Iwlr, Estimator::Lr],
            seed: 45,
            spec_variant: SpecVariant::Canonical,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n1 == 0 || self.replicates == 0 || self.n0_grid.is_empty() || self.estimators.is_empty() {
            return Err(Error::Precondition(
                "n1, replicates, n0_grid and estimators must be non-empty".into(),
            ));
        }
        if self.n0_grid.contains(&0) {
            return Err(Error::Precondition("n0_grid entries must be positive".into()));
        }
        Ok(())
    }
}

/// One fit of the sweep. `beta_hat` is `None` when the fit failed, with the
/// reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub estimator: Estimator,
    pub n0: usize,
    pub replicate: usize,
    pub background_seed: u64,
    pub beta_hat: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Slope limit of the infinitely weighted fit.
    pub beta_limit: f64,
    /// Population limit of the unweighted fit at each `n1 / n0`, in grid order.
    pub lr_limits: Vec<f64>,
    pub presence_seed: u64,
    /// Ordered by estimator (config order), then `n0` (grid order), then replicate.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Successful `beta_hat` values of one (estimator, n0) cell group.
    pub fn betas(&self, estimator: Estimator, n0: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.estimator == estimator && c.n0 == n0)
            .filter_map(|c| c.beta_hat)
            .collect()
    }
}

/// Runs the sweep: one presence sample, a fresh background per
/// `(n0, replicate)`, each estimator fitted to the same data.
pub fn run_sweep(config: &SweepConfig, opts: &OptimOptions) -> Result<SweepResult, Error> {
    config.validate()?;
    let spec = MixtureSpec1D::variant(config.spec_variant);
    let presence_seed = derive_seed(config.seed, &[0]);
    let presence = draw_presence(&spec, config.n1, presence_seed);

    let jobs: Vec<(usize, usize)> = config
        .n0_grid
        .iter()
        .flat_map(|&n0| (0..config.replicates).map(move |r| (n0, r)))
        .collect();
    let fitted: Vec<Vec<SweepCell>> = jobs
        .par_iter()
        .map(|&(n0, replicate)| {
            let background_seed = derive_seed(config.seed, &[1, n0 as u64, replicate as u64]);
            let background = draw_background(n0, background_seed);
            let data = study_dataset(&presence, &background);
            config
                .estimators
                .iter()
                .map(|&estimator| {
                    let fit = data.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                        let r = match estimator {
                            Estimator::Lr => fit_logistic(d, 1.0, &Penalty::none(), opts),
                            Estimator::Iwlr => fit_iwlr(d, &Penalty::none(), opts),
                        };
                        r.map_err(|e| e.to_string())
                    });
                    let (beta_hat, error) = match fit {
                        Ok(f) => (Some(f.beta[0]), None),
                        Err(e) => (None, Some(e)),
                    };
                    SweepCell {
                        estimator,
                        n0,
                        replicate,
                        background_seed,
                        beta_hat,
                        error,
                    }
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::with_capacity(jobs.len() * config.estimators.len());
    for (k, _) in config.estimators.iter().enumerate() {
        cells.extend(fitted.iter().map(|group| group[k].clone()));
    }
    let beta_limit = population_lr_limit(&spec, 0.0)?.beta;
    let lr_limits = config
        .n0_grid
        .iter()
        .map(|&n0| population_lr_limit(&spec, config.n1 as f64 / n0 as f64).map(|l| l.beta))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        config: config.clone(),
        beta_limit,
        lr_limits,
        presence_seed,
        cells,
    })
}

/// One row of the long-format figure table.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub estimator: Estimator,
    pub n0: usize,
    pub replicate: usize,
    pub beta_hat: Option<f64>,
    pub beta_limit: f64,
    pub status: String,
}

pub const FIGURE_HEADER: [&str; 6] = ["estimator", "n0", "replicate", "beta_hat", "beta_limit", "status"];

/// Writes `# `-prefixed comment lines, then one row per cell. Failed cells
/// have an empty `beta_hat` and the error in `status`.
pub fn emit_figure_data<W: Write>(result: &SweepResult, out: W, comments: &[String]) -> Result<(), DataError> {
    let mut out = out;
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIGURE_HEADER).map_err(csv_err)?;
    for c in &result.cells {
        let beta = c.beta_hat.map(|b| b.to_string()).unwrap_or_default();
        let status = match &c.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {e}"),
        };
        w.write_record([
            c.estimator.name(),
            &c.n0.to_string(),
            &c.replicate.to_string(),
            &beta,
            &result.beta_limit.to_string(),
            &status,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::InvalidArgument(format!("{other:?}")),
    }
}

/// Reads a table written by [`emit_figure_data`].
pub fn read_figure_data<R: Read>(input: R) -> Result<Vec<FigureRow>, DataError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(FIGURE_HEADER) {
        return Err(DataError::Malformed {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| DataError::Malformed {
            line,
            message: format!("bad {what}"),
        };
        let float = |s: &str| s.parse::<f64>();
        let estimator = Estimator::parse(&rec[0]).ok_or_else(|| bad("estimator"))?;
        let n0 = rec[1].parse().map_err(|_| bad("n0"))?;
        let replicate = rec[2].parse().map_err(|_| bad("replicate"))?;
        let beta_hat = if rec[3].is_empty() {
            None
        } else {
            Some(float(&rec[3]).map_err(|_| bad("beta_hat"))?)
        };
        let beta_limit = float(&rec[4]).map_err(|_| bad("beta_limit"))?;
        rows.push(FigureRow {
            estimator,
            n0,
            replicate,
            beta_hat,
            beta_limit,
            status: rec[5].to_string(),
        });
    }
    Ok(rows)
}
