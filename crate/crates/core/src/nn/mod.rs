//! Graph neural backbones with hand-written backpropagation.
//!
//! Parameters live in a flat [`ParamVector`] of `f32`; all arithmetic runs in
//! `f64` on a copy. Graphs are processed as full batches.

mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
mod sparse;

pub use gradcheck::{check_gradient, grad_check, relative_error};
pub use loss::{
    cross_entropy, info_nce, link_bce, masked_mse, reconstruction_nodes, sample_negative_edges, Objective, TEMPERATURE,
};
pub use model::{Architecture, Batch, Forward, Fusion, Model, ModelSpec, OutputGrads};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{Layout, ParamVector, Segment};
pub use sparse::{normalize_adjacency, SparseMatrix};

/// Row-wise argmax.
pub fn argmax_rows(x: &ndarray::Array2<f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
