use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ponly::data::read_csv;
use ponly::likelihoods::bin_by_features;
use ponly::solvers::{
    fit_ipp, fit_iwlr, fit_logistic, fit_maxent, fit_poisson_llm, ModelFit, ModelKind, OptimOptions,
};

use crate::artifact::{load_config, to_json, write_output};
use crate::error::CliError;
use crate::{FitArgs, ModelName, PenaltyConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: Option<ModelName>,
    pub data: Option<PathBuf>,
    pub area: Option<f64>,
    pub penalty: PenaltyConfig,
    #[serde(rename = "W")]
    pub weight: Option<f64>,
    pub seed: u64,
    pub options: OptimOptions,
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    ponly_version: &'a str,
    command: &'a str,
    config: &'a FitConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a ModelFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<Value>,
}

fn resolve(args: &FitArgs) -> Result<FitConfig, CliError> {
    let mut cfg: FitConfig = match &args.config {
        Some(p) => load_config(p, "fit")?,
        None => FitConfig::default(),
    };
    if args.model.is_some() {
        cfg.model = args.model;
    }
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if args.area.is_some() {
        cfg.area = args.area;
    }
    cfg.penalty.apply(&args.penalty);
    if args.weight.is_some() {
        cfg.weight = args.weight;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    args.solver.apply(&mut cfg.options);
    Ok(cfg)
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Input(format!("missing required {flag}\n\nUsage: ponly fit --model <MODEL> --data <CSV> --area <AREA> [OPTIONS]")))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The fit plus optional metadata.
fn fit_model(cfg: &FitConfig, model: ModelName, path: &Path, area: f64) -> Result<(ModelFit, Option<Value>), CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let data = read_csv(file, area)?;
    let penalty = cfg.penalty.build()?;
    let opts = &cfg.options;
    if cfg.weight.is_some() && !matches!(model, ModelName::Lr | ModelName::Iwlr) {
        return Err(CliError::Input("--W only applies to the lr and iwlr models".into()));
    }
    let out = match model {
        ModelName::Ipp => (fit_ipp(&data, &penalty, opts)?, None),
        ModelName::Maxent => (fit_maxent(&data, &penalty, opts)?, None),
        ModelName::Lr => (fit_logistic(&data, cfg.weight.unwrap_or(1.0), &penalty, opts)?, None),
        ModelName::Iwlr => match cfg.weight {
            None => (fit_iwlr(&data, &penalty, opts)?, None),
            Some(w) => {
                // a fixed weight may be too small for the limit; compare with the escalated fit
                let mut fixed = fit_logistic(&data, w, &penalty, opts)?;
                fixed.model = ModelKind::Iwlr;
                let reference = fit_iwlr(&data, &penalty, opts)?;
                let gap = max_gap(&fixed.beta, &reference.beta);
                let meta = json!({
                    "W_forced": w,
                    "reference_W": reference.weight,
                    "beta_gap_to_reference": gap,
                    "within_limit_tolerance": gap <= ponly::equivalence::LIMIT_TOL,
                });
                (fixed, Some(meta))
            }
        },
        ModelName::BermanTurner => {
            let (binned, cells) = bin_by_features(&data)?;
            (fit_poisson_llm(&binned, &cells, &penalty, opts)?, None)
        }
    };
    Ok(out)
}

pub fn run(args: FitArgs) -> Result<(), CliError> {
    let cfg = resolve(&args)?;
    let model = required(&cfg.model, "--model")?;
    let path = required(&cfg.data, "--data")?;
    let area = required(&cfg.area, "--area")?;
    if !path.exists() {
        return Err(CliError::Input(format!("data file {} does not exist", path.display())));
    }
    let artifact = |fit: Option<&ModelFit>, metadata: Option<Value>, error: Option<Value>| {
        let a = FitArtifact {
            ponly_version: ponly::VERSION,
            command: "fit",
            config: &cfg,
            fit,
            metadata,
            error,
        };
        format!("{}\n", to_json(&a))
    };
    match fit_model(&cfg, model, &path, area) {
        Ok((fit, meta)) => {
            let fit = fit.with_seed(cfg.seed);
            write_output(args.out.as_deref(), artifact(Some(&fit), meta, None).as_bytes())
        }
        Err(CliError::Numerical { message, diagnostic }) => {
            write_output(args.out.as_deref(), artifact(None, None, Some(diagnostic.clone())).as_bytes())?;
            Err(CliError::Numerical { message, diagnostic })
        }
        Err(e) => Err(e),
    }
}
