//! Training certification with closed-form least-squares bounds.
//!
//! This crate holds the numerical core: dense matrices with an SVD-backed
//! pseudoinverse, a small fully connected network with hand-written
//! backpropagation, the YES-0 / YES-k bound engine, the training-cloud
//! classifier and the dataset generators. Everything here is deterministic
//! and free of IO, so it builds with `no_std` + `alloc`.
//!
//! The `std` feature (on by default) only enables `std::error::Error`
//! interop through `thiserror`; no functionality depends on it.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;

pub mod bounds;
pub mod linalg;
pub mod matrix;
pub mod mlp;
pub mod monitor;
pub mod tasks;

pub use bounds::{
    classify_region, guidance_distance, least_squares_map, yes0_trace, yes_bound_set, yes_k_bound, BoundConfig,
    BoundEngine, CheckpointSet, CloudRegion, Yes0Trace, YesBoundSet, YesKResult,
};
pub use error::{Error, Result};
pub use linalg::{pinv, svd, RowSpaceProjector, SvdResult};
pub use matrix::{augment_ones, frob_norm_sq, matmul, Matrix};
pub use mlp::{
    backward, forward, init_params, loss_mse, optimizer_step, weight_change_norm, Activation, ForwardPass, Gradients,
    LayerParams, LrSchedule, MlpParams, OptimizerKind, OptimizerState, Trainer,
};
pub use monitor::{
    guidance_hook, plateau_detector, stop_rule, ControlAction, ControlCommand, EpochEvent, EpochRecord, GuidanceRule,
    PlateauRule, StopReason, StopRule,
};
pub use tasks::Dataset;

/// Default singular-value cutoff relative to the largest singular value,
/// scaled by `max(rows, cols)` at the call site.
pub const DEFAULT_RCOND_FACTOR: f64 = 1e-12;

/// `rcond` used when the caller does not pick one: `1e-12 * max(rows, cols)`.
pub fn default_rcond(rows: usize, cols: usize) -> f64 {
    DEFAULT_RCOND_FACTOR * rows.max(cols) as f64
}
