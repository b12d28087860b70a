//! Trainable models, losses, optimizer, training loops and evaluation.

mod adam;
mod checkpoint;
mod counting;
mod eval;
mod params;
mod pointer;
mod retrieval;
mod train;

pub use adam::{AdamConfig, AdamState};

use crate::matrix::Matrix;
use crate::rng::{derive_seed, SplitMix64};

/// Gaussian init with std `1/sqrt(rows)`, the fan-in scaling used across
/// the models.
pub(crate) fn scaled_gaussian(rows: usize, cols: usize, seed: u64, stream: u64) -> Matrix {
    let std = 1.0 / (rows as f64).sqrt();
    let mut rng = SplitMix64::new(derive_seed(seed, stream));
    Matrix::from_computed(
        rows,
        cols,
        rng.gaussian_vec(rows * cols)
            .into_iter()
            .map(|v| v * std)
            .collect(),
    )
}
pub use checkpoint::{load_params, save_params};
pub use counting::{CountingModel, CountingModelConfig};
pub use eval::{eval_counting, eval_pointer, eval_retrieval, retrieval_similarities};
pub use params::{BoundParams, ParamId, ParamSet};
pub use pointer::{PointerModel, PointerModelConfig};
pub use retrieval::{hardest_triplet_loss, RetrievalModel, RetrievalModelConfig};
pub use train::{train_counting, train_pointer, train_retrieval, TrainConfig, TrainOutcome};
