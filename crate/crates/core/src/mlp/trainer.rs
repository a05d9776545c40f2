use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, optimizer_step, weight_change_norm, MlpParams, OptimizerState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mini-batch training state: parameters, optimizer and shuffle stream.
///
/// The only per-epoch input besides the data is the learning rate; there is
/// no way to hand certification results to the trainer.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: MlpParams,
    optimizer: OptimizerState,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(params: MlpParams, optimizer: OptimizerState, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self { params, optimizer, batch_size, rng })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn into_params(self) -> MlpParams {
        self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// One pass over a fresh permutation of the columns. Returns the RMS
    /// parameter change over the epoch.
    pub fn run_epoch(&mut self, x: &Matrix, y: &Matrix, lr: f64) -> Result<f64> {
        if x.cols() != y.cols() {
            return Err(Error::DimensionMismatch { op: "run_epoch", left: x.shape(), right: y.shape() });
        }
        let before = self.params.clone();
        let mut order: Vec<usize> = (0..x.cols()).collect();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(self.batch_size) {
            let xb = x.select_columns(batch);
            let yb = y.select_columns(batch);
            let grads = backward(&self.params, &xb, &yb)?;
            optimizer_step(&mut self.params, &grads, &mut self.optimizer, lr)?;
        }
        weight_change_norm(&before, &self.params)
    }
}
