//! Dataset generators for the benchmark tasks.
//!
//! Every generator is a pure function of its parameters and seed. Inputs are
//! measurements and targets are the clean signals, so networks learn the
//! inverse map.

mod image;
mod mnist;
mod synthetic;

pub use image::{depatchify, gen_quadratic_image, patchify, GrayImage, ImagePatchPlan, SensingKind};
pub use mnist::{
    decode_label, encode_label, mnist_dataset, parse_idx_images, parse_idx_labels, success_rate, synthetic_digits,
    IdxImages, LabeledDataset, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, MNIST_PIXELS,
};
pub use synthetic::{gen_denoising, gen_phase_retrieval, phase_retrieval_sensing, NoiseScale, DENOISING_NOISE_SCALE};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub task: String,
    pub seed: u64,
    pub params: Vec<(String, f64)>,
}

/// Paired inputs (`n x d`) and targets (`m x d`), one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub meta: TaskMeta,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, meta: TaskMeta) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::DimensionMismatch { op: "Dataset::new", left: x.shape(), right: y.shape() });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Config("dataset contains non-finite entries".into()));
        }
        Ok(Self { x, y, meta })
    }

    /// Number of samples `d`.
    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.rows()
    }
}

pub(crate) fn meta(task: &str, seed: u64, params: &[(&str, f64)]) -> TaskMeta {
    TaskMeta { task: task.into(), seed, params: params.iter().map(|(k, v)| (String::from(*k), *v)).collect() }
}
