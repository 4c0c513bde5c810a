use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ponly::data::read_csv;
use ponly::equivalence::{check_prop1, check_prop2, check_scores, run_standard_sweep, EquivalenceReport};
use ponly::solvers::{fit_ipp, OptimOptions};
use ponly::Error;

use crate::artifact::{load_config, to_json, write_output};
use crate::error::{error_diagnostic, CliError};
use crate::{CheckArgs, PenaltyConfig};

pub const STANDARD_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// `None` runs the standard random-dataset sweep.
    pub data: Option<PathBuf>,
    pub area: Option<f64>,
    pub penalty: PenaltyConfig,
    #[serde(rename = "W")]
    pub weight: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: u64,
    pub options: OptimOptions,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            data: None,
            area: None,
            penalty: PenaltyConfig::default(),
            weight: None,
            tolerance: None,
            seed: STANDARD_SEED,
            options: OptimOptions::default(),
        }
    }
}

fn resolve(args: &CheckArgs) -> Result<CheckConfig, CliError> {
    let mut cfg: CheckConfig = match &args.config {
        Some(p) => load_config(p, "check")?,
        None => CheckConfig::default(),
    };
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
    if args.tolerance.is_some() {
        cfg.tolerance = args.tolerance;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    args.solver.apply(&mut cfg.options);
    Ok(cfg)
}

#[derive(Serialize)]
struct Header<'a> {
    ponly_version: &'a str,
    command: &'a str,
    config: &'a CheckConfig,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    check: &'a str,
    error: Value,
}

fn user_checks(cfg: &CheckConfig, path: &PathBuf) -> Result<Vec<(String, Result<EquivalenceReport, Error>)>, CliError> {
    let area = cfg
        .area
        .ok_or_else(|| CliError::Input("missing required --area for --data".into()))?;
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let data = read_csv(file, area)?;
    let penalty = cfg.penalty.build()?;
    let opts = &cfg.options;
    let scores = fit_ipp(&data, &penalty, opts)
        .map_err(Error::from)
        .and_then(|fit| check_scores(&fit, &data, &penalty));
    Ok(vec![
        ("maxent_vs_ipp".into(), check_prop1(&data, &penalty, opts)),
        ("iwlr_vs_ipp".into(), check_prop2(&data, &penalty, cfg.weight, opts)),
        ("score_identities".into(), scores),
    ])
}

pub fn run(args: CheckArgs) -> Result<(), CliError> {
    let cfg = resolve(&args)?;
    if let Some(t) = cfg.tolerance {
        if !(t >= 0.0) {
            return Err(CliError::Input(format!("--tolerance must be >= 0, got {t}")));
        }
    }
    let results = match &cfg.data {
        Some(path) => user_checks(&cfg, path)?,
        None => {
            if cfg.weight.is_some() || cfg.area.is_some() {
                return Err(CliError::Input("--W and --area need --data".into()));
            }
            run_standard_sweep(cfg.seed, &cfg.options)
                .into_iter()
                .map(|r| ("standard_sweep".to_string(), r))
                .collect()
        }
    };

    let header = Header {
        ponly_version: ponly::VERSION,
        command: "check",
        config: &cfg,
    };
    let mut out = format!("{}\n", to_json(&header));
    let (mut failed, mut errors) = (0, 0);
    for (name, r) in results {
        match r {
            Ok(mut report) => {
                if let Some(t) = cfg.tolerance {
                    report = report.with_tolerance(t);
                }
                if !report.pass {
                    failed += 1;
                }
                out.push_str(&report.to_json_line());
            }
            Err(e) => {
                errors += 1;
                let line = ErrorLine {
                    check: &name,
                    error: error_diagnostic(&e),
                };
                out.push_str(&to_json(&line));
            }
        }
        out.push('\n');
    }
    write_output(args.out.as_deref(), out.as_bytes())?;
    if errors > 0 {
        return Err(CliError::Numerical {
            message: format!("{errors} check(s) could not be computed"),
            diagnostic: json!({ "errors": errors }),
        });
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
