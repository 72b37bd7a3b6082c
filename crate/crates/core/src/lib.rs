//! Synthetic echocardiography view generation and 2D-to-3D heart mesh regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: multi-structure triangle meshes, OBJ/landmark I/O and a procedural
//!   four-chamber phantom.
//! - [`correspondence`]: edge-collapse downsampling and template correspondence.
//! - [`view`]: standard view frames, pose sampling, mesh slicing, rasterisation and
//!   sector masks.
//! - [`dataset`]: sample generation and on-disk dataset layout.
//! - [`neural`]: CNN encoder, spiral graph convolutions, Adam and training.
//! - [`eval`]: plane fitting, view recognition and localisation metrics.
//! - [`verify`]: independent oracles used by the `verify` command and the test suites.

pub mod correspondence;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod mesh;
pub mod neural;
pub mod parallel;
pub mod verify;
pub mod view;

pub use error::{Error, Result};

/// Double-precision 3D vector used for all geometry.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 double-precision matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
