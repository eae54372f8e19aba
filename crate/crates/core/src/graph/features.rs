use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Upper bound for the automatically chosen degree cap.
pub const DEGREE_CAP_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureScheme {
    /// One-hot over the dataset's distinct node labels.
    NodeLabelOneHot,
    /// One-hot of `min(degree, cap)`; width `cap + 1`.
    DegreeOneHot { cap: usize },
}

impl FeatureScheme {
    /// Node labels when available, otherwise degrees capped at the largest
    /// degree seen in `train` (clamped to [`DEGREE_CAP_LIMIT`]).
    pub fn auto(dataset: &Dataset, train: &[usize]) -> Self {
        if dataset.has_node_labels() {
            return FeatureScheme::NodeLabelOneHot;
        }
        let max_degree = train.iter().flat_map(|&i| dataset.records[i].topology.degrees()).max().unwrap_or(1);
        FeatureScheme::DegreeOneHot { cap: max_degree.clamp(1, DEGREE_CAP_LIMIT) }
    }

    pub fn width(&self, dataset: &Dataset) -> usize {
        match self {
            FeatureScheme::NodeLabelOneHot => dataset.node_label_values().len(),
            FeatureScheme::DegreeOneHot { cap } => cap + 1,
        }
    }
}

pub fn build_node_features(dataset: &Dataset, scheme: FeatureScheme) -> Result<Dataset> {
    let mut out = dataset.clone();
    match scheme {
        FeatureScheme::NodeLabelOneHot => {
            if !dataset.has_node_labels() {
                return Err(Error::Scheme(format!("{} has no node labels", dataset.name)));
            }
            let values = dataset.node_label_values();
            let width = values.len();
            for r in &mut out.records {
                let labels = r.node_labels.as_ref().expect("checked above");
                let mut data = vec![0.0; labels.len() * width];
                for (n, l) in labels.iter().enumerate() {
                    let k = values.binary_search(l).expect("value collected above");
                    data[n * width + k] = 1.0;
                }
                r.features = Some(Tensor::new(data, &[labels.len(), width])?);
            }
        }
        FeatureScheme::DegreeOneHot { cap } => {
            if cap < 1 {
                return Err(Error::Scheme("degree cap must be at least 1".into()));
            }
            let width = cap + 1;
            for r in &mut out.records {
                let degrees = r.topology.degrees();
                let mut data = vec![0.0; degrees.len() * width];
                for (n, d) in degrees.iter().enumerate() {
                    data[n * width + (*d).min(cap)] = 1.0;
                }
                r.features = Some(Tensor::new(data, &[degrees.len(), width])?);
            }
        }
    }
    out.feature_scheme = Some(scheme);
    Ok(out)
}
