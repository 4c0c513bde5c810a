//! Study regions, background sampling and feature maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::rng::rng_from_seed;

/// A point in the study region.
pub type Location = Vec<f64>;

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, DataError> {
        if bounds.is_empty() {
            return Err(DataError::InvalidArgument("domain needs at least one axis".into()));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(DataError::InvalidArgument(format!(
                    "axis {k}: need finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, DataError> {
        Self::new(vec![(lo, hi)])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self, DataError> {
        Self::new(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// `|D|`, the product of the axis extents.
    pub fn area(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, loc: &[f64]) -> bool {
        loc.len() == self.dim()
            && loc
                .iter()
                .zip(&self.bounds)
                .all(|(&z, &(lo, hi))| z >= lo && z <= hi)
    }

    pub(crate) fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Location {
        self.bounds
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// Cell centres of the regular `m^d` lattice; the first axis varies fastest.
    pub fn grid_centers(&self, per_axis: usize) -> Vec<Location> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                self.bounds
                    .iter()
                    .map(|&(lo, hi)| {
                        let k = idx % per_axis;
                        idx /= per_axis;
                        lo + (hi - lo) * (k as f64 + 0.5) / per_axis as f64
                    })
                    .collect()
            })
            .collect()
    }
}

impl TryFrom<Vec<(f64, f64)>> for Domain {
    type Error = DataError;
    fn try_from(bounds: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Domain::new(bounds)
    }
}

impl From<Domain> for Vec<(f64, f64)> {
    fn from(d: Domain) -> Self {
        d.bounds
    }
}

/// How background locations are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    #[default]
    Uniform,
    Grid,
}

/// Side length `m` with `m^d == n`, if it exists.
pub fn grid_side(n: usize, d: usize) -> Option<usize> {
    if n == 0 || d == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1)
        .find(|&m| m > 0 && m.checked_pow(d as u32) == Some(n))
}

/// Draws `n0` background locations, i.i.d. uniform or as a regular lattice of
/// cell centres. Grid mode needs `n0 = m^d`.
pub fn sample_background(
    domain: &Domain,
    n0: usize,
    mode: BackgroundMode,
    seed: u64,
) -> Result<Vec<Location>, DataError> {
    if n0 == 0 {
        return Err(DataError::InvalidArgument("n0 must be at least 1".into()));
    }
    match mode {
        BackgroundMode::Uniform => {
            let mut rng = rng_from_seed(seed);
            Ok((0..n0).map(|_| domain.uniform_point(&mut rng)).collect())
        }
        BackgroundMode::Grid => {
            let m = grid_side(n0, domain.dim()).ok_or_else(|| {
                DataError::InvalidArgument(format!(
                    "grid background needs n0 = m^{} for integer m, got {n0}",
                    domain.dim()
                ))
            })?;
            Ok(domain.grid_centers(m))
        }
    }
}

/// Maps a location to its feature vector `x(z)`.
pub trait FeatureMap: Sync {
    fn features(&self, loc: &[f64]) -> Vec<f64>;
}

impl<F> FeatureMap for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn features(&self, loc: &[f64]) -> Vec<f64> {
        self(loc)
    }
}

/// Feature maps that can be named in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardFeatures {
    /// `x(z) = z`.
    #[default]
    Identity,
    /// The coordinates followed by their squares.
    Quadratic,
}

impl FeatureMap for StandardFeatures {
    fn features(&self, loc: &[f64]) -> Vec<f64> {
        match self {
            StandardFeatures::Identity => loc.to_vec(),
            StandardFeatures::Quadratic => {
                loc.iter().copied().chain(loc.iter().map(|z| z * z)).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_1d_four_cells() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = sample_background(&d, 4, BackgroundMode::Grid, 0).unwrap();
        let expect = [0.125, 0.375, 0.625, 0.875];
        for (p, e) in g.iter().zip(expect) {
            assert_abs_diff_eq!(p[0], e, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_2d_nine_cells() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let g = sample_background(&d, 9, BackgroundMode::Grid, 0).unwrap();
        let axis = [1.0 / 6.0, 0.5, 5.0 / 6.0];
        assert_eq!(g.len(), 9);
        for (k, p) in g.iter().enumerate() {
            assert_abs_diff_eq!(p[0], axis[k % 3], epsilon = 1e-15);
            assert_abs_diff_eq!(p[1], axis[k / 3], epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_rejects_non_square_counts() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 2.0)).unwrap();
        assert!(sample_background(&d, 10, BackgroundMode::Grid, 0).is_err());
        assert!(sample_background(&d, 16, BackgroundMode::Grid, 0).is_ok());
    }

    #[test]
    fn zero_background_is_invalid() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        for mode in [BackgroundMode::Uniform, BackgroundMode::Grid] {
            assert!(matches!(
                sample_background(&d, 0, mode, 1),
                Err(DataError::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn uniform_mean_is_central() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let pts = sample_background(&d, 100_000, BackgroundMode::Uniform, 11).unwrap();
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        assert!((mean - 0.5).abs() <= 0.005, "mean {mean}");
    }

    #[test]
    fn grid_cells_partition_domain() {
        let d = Domain::rectangle((-1.0, 3.0), (0.0, 0.5)).unwrap();
        let m = 7;
        let g = d.grid_centers(m);
        let cell_area = d.area() / g.len() as f64;
        assert_abs_diff_eq!(cell_area * g.len() as f64, d.area(), epsilon = 1e-12);
        assert!(g.iter().all(|p| d.contains(p)));
        // centres are distinct and each sits half a cell from its lower edge
        for p in &g {
            for (z, &(lo, hi)) in p.iter().zip(d.bounds()) {
                let h = (hi - lo) / m as f64;
                let frac = ((z - lo) / h).fract();
                assert_abs_diff_eq!(frac, 0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::new(vec![]).is_err());
    }

    #[test]
    fn quadratic_features() {
        assert_eq!(StandardFeatures::Quadratic.features(&[2.0, -1.0]), vec![2.0, -1.0, 4.0, 1.0]);
    }
}
