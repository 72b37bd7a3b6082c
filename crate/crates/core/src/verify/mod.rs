//! Independent oracles and the verification suites run by `echoview verify`.

pub mod gradcheck;
mod suites;
pub mod voxel;


pub use suites::{gradient_suite, slicing_suite, view_recovery_suite, SuiteOutcome, SLICING_MIN_IOU};
