//! Presence-only datasets and the synthetic data generators behind them.

mod csv;
mod dataset;
mod domain;
mod process;

pub use self::csv::{read_csv, write_csv};
pub use dataset::{assemble_dataset, Dataset};
pub use domain::{
    grid_side, sample_background, BackgroundMode, Domain, FeatureMap, Location, StandardFeatures,
};
pub use process::{
    integrated_intensity, simulate_ipp, thin_process, Component, IntensityKind, IntensityModel,
    ThinningModel, ENVELOPE_FACTOR, PROBE_NODES,
};
