use serde::{Deserialize, Serialize};

use ponly::data::{
    assemble_dataset, sample_background, simulate_ipp, thin_process, write_csv, BackgroundMode, Dataset, Domain,
    FeatureMap, IntensityModel, StandardFeatures, ThinningModel,
};
use ponly::rng::derive_seed;
use ponly::simstudy::{draw_study_data, MixtureSpec1D, SpecVariant};

use crate::artifact::{csv_header, load_config, write_output};
use crate::error::CliError;
use crate::{Preset, SimulateArgs};

pub const DEFAULT_N0: usize = 10_000;
pub const PRESET_N1: usize = 3_000;

/// Either a preset study design or an explicit intensity (optionally thinned)
/// on a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: Option<Preset>,
    pub variant: SpecVariant,
    pub intensity: Option<IntensityModel>,
    pub thinning: Option<ThinningModel>,
    pub domain: Option<Domain>,
    pub features: StandardFeatures,
    pub background: BackgroundMode,
    /// Presence count; only for presets (otherwise it is Poisson).
    pub n1: Option<usize>,
    pub n0: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            preset: None,
            variant: SpecVariant::Canonical,
            intensity: None,
            thinning: None,
            domain: None,
            features: StandardFeatures::Identity,
            background: BackgroundMode::Uniform,
            n1: None,
            n0: DEFAULT_N0,
            seed: 0,
        }
    }
}

fn resolve(args: &SimulateArgs) -> Result<SimulateConfig, CliError> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(p) => load_config(p, "simulate")?,
        None => SimulateConfig::default(),
    };
    if args.preset.is_some() {
        cfg.preset = args.preset;
    }
    if let Some(v) = args.variant {
        cfg.variant = v.into();
    }
    if args.n1.is_some() {
        cfg.n1 = args.n1;
    }
    if let Some(n) = args.n0 {
        cfg.n0 = n;
    }
    if let Some(b) = args.background {
        cfg.background = b.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if cfg.preset.is_some() && cfg.n1.is_none() {
        cfg.n1 = Some(PRESET_N1);
    }
    Ok(cfg)
}

/// Simulates the dataset described by `cfg`.
pub fn simulate(cfg: &SimulateConfig) -> Result<Dataset, CliError> {
    if cfg.n0 == 0 {
        return Err(CliError::Input("n0 must be positive".into()));
    }
    if let Some(Preset::Mixture45) = cfg.preset {
        if cfg.intensity.is_some() || cfg.thinning.is_some() || cfg.domain.is_some() {
            return Err(CliError::Input("a preset cannot be combined with a model spec".into()));
        }
        let spec = MixtureSpec1D::variant(cfg.variant);
        let n1 = cfg.n1.unwrap_or(PRESET_N1);
        return Ok(draw_study_data(&spec, n1, cfg.n0, cfg.seed)?);
    }
    if cfg.n1.is_some() {
        return Err(CliError::Input("n1 is random for model specs; only presets take --n1".into()));
    }
    let domain = cfg
        .domain
        .as_ref()
        .ok_or_else(|| CliError::Input("spec needs a domain (or use --preset)".into()))?;
    let fmap = &cfg.features;
    let p = fmap.features(&vec![0.0; domain.dim()]).len();
    let (model, thinning) = match (&cfg.intensity, &cfg.thinning) {
        (Some(m), None) => (m.clone(), None),
        (None, Some(t)) => (t.occurrence_over(p)?, Some(t)),
        (None, None) => return Err(CliError::Input("spec needs an intensity or a thinning model".into())),
        (Some(_), Some(_)) => {
            return Err(CliError::Input(
                "give either intensity or thinning (which carries the occurrence model), not both".into(),
            ))
        }
    };
    if model.dim() != p {
        return Err(CliError::Input(format!(
            "intensity has {} slopes but the {:?} features have {p} components",
            model.dim(),
            cfg.features
        )));
    }
    let mut presence = simulate_ipp(&model, domain, fmap, derive_seed(cfg.seed, &[0]))?;
    if let Some(t) = thinning {
        presence = thin_process(&presence, t, fmap, derive_seed(cfg.seed, &[1]))?;
    }
    if presence.is_empty() {
        return Err(CliError::Input("the simulated process has no points; raise the intensity".into()));
    }
    let background = sample_background(domain, cfg.n0, cfg.background, derive_seed(cfg.seed, &[2]))?;
    Ok(assemble_dataset(&presence, &background, fmap, domain.area(), None)?)
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = resolve(&args)?;
    let data = simulate(&cfg)?;
    let mut comments = csv_header("simulate", &cfg);
    comments.push(format!("domain_area: {}", data.domain_area()));
    comments.push(format!("n1: {}, n0: {}", data.n1(), data.n0()));
    let mut buf = Vec::new();
    write_csv(&mut buf, &data, &comments)?;
    write_output(args.out.as_deref(), &buf)
}
