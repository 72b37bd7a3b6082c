//! Image-to-mesh regression network with hand-written backpropagation.
//!
//! Pipeline: label image -> strided CNN encoder -> global average pool -> dense
//! compression to per-vertex features -> spiral graph convolutions (ELU) ->
//! per-vertex linear head emitting 3D coordinates normalised by the image size.

mod adam;
mod checkpoint;
pub mod layers;
mod model;
mod spiral;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Precision};
pub use model::{l2_loss, l2_loss_grad, Architecture, ForwardCache, GcnModel, Network};
pub use spiral::{build_spirals, SpiralIndex};
pub use train::{
    evaluate_loss, image_to_input, predict_coords, train, write_loss_csv, EpochLoss, PreparedSample, TrainConfig,
    TrainOutcome, Trainer,
};

/// Floating-point type the network runs in: `f32` for training, `f64` for
/// gradient verification.
pub trait Scalar: num_traits::Float + Sum + Send + Sync + Debug + Default + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
