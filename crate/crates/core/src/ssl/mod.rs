//! Cross-view self-supervised training on occupancy-grid sequences.
//!
//! An MLP encoder `f` maps a downsampled grid sequence to a representation
//! `h`; a projector `g` maps `h` to the embedding `z` on which the Barlow
//! Twins or VICReg objective is computed. Downstream metrics use `h`.

pub mod loss;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod train;

pub use loss::{barlow_twins_loss, vicreg_loss, LossOutput, VicregCoeffs};
pub use model::{EmbeddingMode, EncoderSpec, Model, ProjectorSpec};
pub use train::{embed_dataset, train, Objective, TrainConfig, TrainOutcome, Variant, ViewRecipe};

use ndarray::Array2;

/// Largest `|a − n| / max(|a|, |n|, 1e-6)` over matching entries; used to
/// compare analytic gradients against finite differences.
pub fn max_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    assert_eq!(analytic.dim(), numeric.dim());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
