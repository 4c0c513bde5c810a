use ponly::simstudy::{emit_figure_data, run_sweep, Estimator, SweepConfig};
use ponly::solvers::OptimOptions;

use crate::artifact::{csv_header, load_config, to_json, write_output};
use crate::error::CliError;
use crate::SweepArgs;

const TOP_N0: usize = 1_000_000;

fn resolve(args: &SweepArgs) -> Result<SweepConfig, CliError> {
    let mut cfg: SweepConfig = match &args.config {
        Some(p) => load_config(p, "sweep")?,
        None => SweepConfig::default(),
    };
    if let Some(n) = args.n1 {
        cfg.n1 = n;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(list) = &args.estimators {
        cfg.estimators = list
            .split(',')
            .map(|s| {
                Estimator::parse(s.trim())
                    .ok_or_else(|| CliError::Input(format!("unknown estimator {s:?} (expected iwlr or lr)")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = args.variant {
        cfg.spec_variant = v.into();
    }
    if args.full_grid && !cfg.n0_grid.contains(&TOP_N0) {
        cfg.n0_grid.push(TOP_N0);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let cfg = resolve(&args)?;
    cfg.validate()?;
    let mut opts = OptimOptions::default();
    args.solver.apply(&mut opts);
    let result = run_sweep(&cfg, &opts)?;
    let mut comments = csv_header("sweep", &cfg);
    comments.push(format!("lr_limits: {}", to_json(&result.lr_limits)));
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        eprintln!("ponly: {failed} sweep cell(s) failed; see the status column");
    }
    let mut buf = Vec::new();
    emit_figure_data(&result, &mut buf, &comments)?;
    write_output(args.out.as_deref(), &buf)
}
