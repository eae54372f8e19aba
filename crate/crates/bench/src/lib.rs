//! Shared fixtures for the benchmarks.

use std::path::Path;

use mega_core::gnn::{init_params, ModelDims, ModelParams};
use mega_core::graph::{batch_graphs, build_node_features, parse_tu_dataset, FeatureScheme, GraphBatch};

/// The first `size` MUTAG graphs as one batch, with default-size parameters.
pub fn mutag_batch(size: usize) -> (GraphBatch, ModelParams) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let dataset = parse_tu_dataset(&root, "MUTAG").expect("MUTAG under data/");
    let data = build_node_features(&dataset, FeatureScheme::NodeLabelOneHot).expect("MUTAG has node labels");
    let indices: Vec<usize> = (0..size.min(data.len())).collect();
    let batch = batch_graphs(&data.subset(&indices)).expect("uniform feature width");
    let params = init_params(ModelDims::with_input(batch.feature_width()), 0).expect("valid dims");
    (batch, params)
}
