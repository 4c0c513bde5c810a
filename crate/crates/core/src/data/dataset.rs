use nalgebra::DMatrix;

use super::domain::{FeatureMap, Location};
use crate::error::DataError;

const WEIGHT_SUM_RTOL: f64 = 1e-9;

/// Presence and background rows sharing one feature space.
///
/// Background rows carry quadrature weights that sum to the domain area; when
/// none are given each background row gets `|D| / n0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    presence: Vec<bool>,
    n1: usize,
    n0: usize,
    domain_area: f64,
    quad_weights: Option<Vec<f64>>,
    row_weights: Vec<f64>,
}

impl Dataset {
    /// `x` is `n x p` with one row per observation; `labels[i]` is true for presence.
    /// `quad_weights`, when given, lists the background weights in row order.
    pub fn new(
        labels: Vec<bool>,
        x: DMatrix<f64>,
        domain_area: f64,
        quad_weights: Option<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if labels.len() != x.nrows() {
            return Err(DataError::InvalidArgument(format!(
                "{} labels for {} feature rows",
                labels.len(),
                x.nrows()
            )));
        }
        if !(domain_area.is_finite() && domain_area > 0.0) {
            return Err(DataError::InvalidArgument(format!(
                "domain area must be positive, got {domain_area}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument("non-finite feature value".into()));
        }
        let n1 = labels.iter().filter(|&&y| y).count();
        let n0 = labels.len() - n1;
        if n1 == 0 || n0 == 0 {
            return Err(DataError::InvalidArgument(format!(
                "need at least one presence and one background row (n1 = {n1}, n0 = {n0})"
            )));
        }

        let mut row_weights = vec![0.0; labels.len()];
        match &quad_weights {
            Some(w) => {
                if w.len() != n0 {
                    return Err(DataError::InvalidArgument(format!(
                        "{} quadrature weights for {n0} background rows",
                        w.len()
                    )));
                }
                if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(DataError::InvalidArgument(
                        "quadrature weights must be positive".into(),
                    ));
                }
                let total: f64 = w.iter().sum();
                if (total - domain_area).abs() > WEIGHT_SUM_RTOL * domain_area {
                    return Err(DataError::InvalidArgument(format!(
                        "quadrature weights sum to {total}, expected domain area {domain_area}"
                    )));
                }
                let mut it = w.iter();
                for (rw, _) in row_weights.iter_mut().zip(&labels).filter(|(_, &y)| !y) {
                    *rw = *it.next().expect("length checked");
                }
            }
            None => {
                let w = domain_area / n0 as f64;
                for (rw, _) in row_weights.iter_mut().zip(&labels).filter(|(_, &y)| !y) {
                    *rw = w;
                }
            }
        }

        Ok(Self {
            x,
            presence: labels,
            n1,
            n0,
            domain_area,
            quad_weights,
            row_weights,
        })
    }

    /// Builds a dataset from feature rows given as slices.
    pub fn from_rows(
        labels: Vec<bool>,
        rows: &[Vec<f64>],
        domain_area: f64,
        quad_weights: Option<Vec<f64>>,
    ) -> Result<Self, DataError> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(DataError::InvalidArgument(
                "feature rows have differing dimensions".into(),
            ));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(labels, x, domain_area, quad_weights)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[bool] {
        &self.presence
    }

    pub fn is_presence(&self, row: usize) -> bool {
        self.presence[row]
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn len(&self) -> usize {
        self.presence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presence.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn domain_area(&self) -> f64 {
        self.domain_area
    }

    pub fn quad_weights(&self) -> Option<&[f64]> {
        self.quad_weights.as_deref()
    }

    /// Quadrature weight of a row; zero for presence rows.
    pub fn row_weight(&self, row: usize) -> f64 {
        self.row_weights[row]
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn presence_rows(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.len()).filter(|&i| self.presence[i])
    }

    pub fn background_rows(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.len()).filter(|&i| !self.presence[i])
    }

    /// Same rows and weights with features replaced by `x` (same shape or same row count).
    pub fn with_features(&self, x: DMatrix<f64>) -> Result<Self, DataError> {
        Self::new(
            self.presence.clone(),
            x,
            self.domain_area,
            self.quad_weights.clone(),
        )
    }
}

/// Presence rows first, then background, each in input order.
pub fn assemble_dataset<F: FeatureMap + ?Sized>(
    presence: &[Location],
    background: &[Location],
    feature_map: &F,
    domain_area: f64,
    quad_weights: Option<Vec<f64>>,
) -> Result<Dataset, DataError> {
    if presence.is_empty() {
        return Err(DataError::InvalidArgument("presence list is empty".into()));
    }
    if background.is_empty() {
        return Err(DataError::InvalidArgument("background list is empty".into()));
    }
    let rows: Vec<Vec<f64>> = presence
        .iter()
        .chain(background)
        .map(|z| feature_map.features(z))
        .collect();
    let labels = (0..rows.len()).map(|i| i < presence.len()).collect();
    Dataset::from_rows(labels, &rows, domain_area, quad_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StandardFeatures;

    fn locs(v: &[f64]) -> Vec<Location> {
        v.iter().map(|&z| vec![z]).collect()
    }

    #[test]
    fn counts_and_order() {
        let d = assemble_dataset(
            &locs(&[0.1, 0.2]),
            &locs(&[0.3, 0.4, 0.5]),
            &StandardFeatures::Identity,
            1.0,
            None,
        )
        .unwrap();
        assert_eq!((d.n1(), d.n0(), d.dim()), (2, 3, 1));
        assert_eq!(d.labels(), &[true, true, false, false, false]);
        assert_eq!(d.features()[(2, 0)], 0.3);
    }

    #[test]
    fn default_weights_are_uniform() {
        let d = assemble_dataset(
            &locs(&[0.1]),
            &locs(&[0.3, 0.4, 0.5, 0.6]),
            &StandardFeatures::Identity,
            2.0,
            None,
        )
        .unwrap();
        assert_eq!(d.row_weight(0), 0.0);
        for i in d.background_rows() {
            assert_eq!(d.row_weight(i), 0.5);
        }
    }

    #[test]
    fn weights_must_sum_to_area() {
        let r = assemble_dataset(
            &locs(&[0.1]),
            &locs(&[0.3, 0.4]),
            &StandardFeatures::Identity,
            2.0,
            Some(vec![0.5, 0.5]),
        );
        assert!(matches!(r, Err(DataError::InvalidArgument(_))));
        let ok = assemble_dataset(
            &locs(&[0.1]),
            &locs(&[0.3, 0.4]),
            &StandardFeatures::Identity,
            2.0,
            Some(vec![1.5, 0.5]),
        )
        .unwrap();
        assert_eq!(ok.row_weight(1), 1.5);
    }

    #[test]
    fn empty_lists_rejected() {
        let f = StandardFeatures::Identity;
        assert!(assemble_dataset(&[], &locs(&[0.1]), &f, 1.0, None).is_err());
        assert!(assemble_dataset(&locs(&[0.1]), &[], &f, 1.0, None).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let r = Dataset::from_rows(vec![true, false], &[vec![1.0], vec![1.0, 2.0]], 1.0, None);
        assert!(r.is_err());
    }

    #[test]
    fn assembly_is_deterministic() {
        let f = StandardFeatures::Quadratic;
        let a = assemble_dataset(&locs(&[0.1, 0.7]), &locs(&[0.2, 0.9]), &f, 1.0, None).unwrap();
        let b = assemble_dataset(&locs(&[0.1, 0.7]), &locs(&[0.2, 0.9]), &f, 1.0, None).unwrap();
        assert_eq!(a, b);
    }
}
