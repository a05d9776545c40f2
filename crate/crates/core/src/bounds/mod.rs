//! YES bounds: closed-form upper bounds on the best achievable training
//! loss, built from chained least-squares projections.
//!
//! Each layer is replaced by the linear map that best sends its input to a
//! chosen target, followed by the layer's activation:
//! `Y_{j+1} = act_j(T_j * pinv(Y_j) * Y_j)` with `Y_1 = X`. The YES-0 bound
//! aims every layer at the final target `Y`; the YES-k bounds aim earlier
//! layers at `k` intermediate outputs captured from the live model and keep
//! the best of all checkpoint choices. The bound is the normalized error
//! `||Y - Y_{K+1}||_F^2 / d` of the resulting chain.

mod checkpoints;

pub use checkpoints::{combinations, CheckpointSet};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv, RowSpaceProjector};
use crate::matrix::{augment_ones, frob_norm_sq, Matrix};
use crate::mlp::Activation;

/// Per-layer errors of the YES-0 chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Yes0Trace {
    /// `||Y - Y_{k+1}||_F^2 / d` after each of the `K` projection steps.
    pub per_layer_error: Vec<f64>,
    /// The last entry of `per_layer_error`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YesKResult {
    pub bound: f64,
    pub best: CheckpointSet,
}

/// Bounds computed at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YesBoundSet {
    pub yes0: f64,
    /// `yes_k[k - 1]` is the degree-`k` bound.
    pub yes_k: Vec<f64>,
    pub cloud_top: f64,
    pub cloud_bottom: f64,
    pub best_checkpoints: CheckpointSet,
}

impl YesBoundSet {
    pub fn is_well_formed(&self) -> bool {
        let all_ok = core::iter::once(self.yes0).chain(self.yes_k.iter().copied()).all(|v| v.is_finite() && v >= 0.0);
        all_ok && self.cloud_bottom <= self.cloud_top
    }
}

/// Where a training loss sits relative to the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudRegion {
    /// Above the YES-0 bound: training has not beaten a linear projection.
    Red,
    /// Inside the cloud.
    Yellow,
    /// At or below the best bound.
    Green,
}

impl CloudRegion {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudRegion::Red => "red",
            CloudRegion::Yellow => "yellow",
            CloudRegion::Green => "green",
        }
    }
}

/// Settings shared by every bound evaluation of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    /// One activation per layer; the length is the depth `K`.
    pub activations: Vec<Activation>,
    /// Project with the ones-augmented input so the linear maps carry a bias.
    pub use_bias: bool,
    /// Relative singular-value cutoff. `None` uses `1e-12 * max(rows, cols)`
    /// of each projected matrix.
    pub rcond: Option<f64>,
}

impl BoundConfig {
    pub fn new(activations: Vec<Activation>, use_bias: bool) -> Self {
        Self { activations, use_bias, rcond: None }
    }

    pub fn depth(&self) -> usize {
        self.activations.len()
    }

    fn rcond_for(&self, m: &Matrix) -> f64 {
        self.rcond.unwrap_or_else(|| crate::default_rcond(m.rows(), m.cols()))
    }

    fn projector(&self, source: &Matrix) -> Result<RowSpaceProjector> {
        if self.use_bias {
            let aug = augment_ones(source);
            RowSpaceProjector::new(&aug, self.rcond_for(&aug))
        } else {
            RowSpaceProjector::new(source, self.rcond_for(source))
        }
    }
}

/// `target * pinv(source)`: the weight matrix minimizing
/// `||target - A * source||_F`.
pub fn least_squares_map(target: &Matrix, source: &Matrix, rcond: f64) -> Result<Matrix> {
    if target.cols() != source.cols() {
        return Err(Error::DimensionMismatch { op: "least_squares_map", left: target.shape(), right: source.shape() });
    }
    target.matmul(&pinv(source, rcond)?)
}

/// Bound evaluator for a fixed dataset. Caches the projector of `X`, which
/// every chain uses for its first step.
#[derive(Debug, Clone)]
pub struct BoundEngine {
    x: Matrix,
    y: Matrix,
    config: BoundConfig,
    x_projector: RowSpaceProjector,
}

type ChainCache = BTreeMap<Vec<usize>, Matrix>;

impl BoundEngine {
    pub fn new(x: Matrix, y: Matrix, config: BoundConfig) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::DimensionMismatch { op: "bounds", left: x.shape(), right: y.shape() });
        }
        let Some(&last) = config.activations.last() else {
            return Err(Error::Config("bounds need at least one layer".into()));
        };
        check_feasible(&y, last)?;
        if let Some(r) = config.rcond {
            if !(r > 0.0) {
                return Err(Error::Config(format!("rcond must be positive, got {r}")));
            }
        }
        let x_projector = config.projector(&x)?;
        Ok(Self { x, y, config, x_projector })
    }

    pub fn depth(&self) -> usize {
        self.config.depth()
    }

    pub fn config(&self) -> &BoundConfig {
        &self.config
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    fn error(&self, out: &Matrix) -> Result<f64> {
        Ok(frob_norm_sq(&self.y.sub(out)?) / self.y.cols() as f64)
    }

    /// One projection step for layer `j` (1-based) from `current`.
    fn step(&self, layer: usize, current: Option<&Matrix>, target: &Matrix) -> Result<Matrix> {
        let mut next = match current {
            None => self.x_projector.apply(target)?,
            Some(src) => self.config.projector(src)?.apply(target)?,
        };
        self.config.activations[layer - 1].apply_matrix(&mut next);
        Ok(next)
    }

    pub fn yes0_trace(&self) -> Result<Yes0Trace> {
        let mut per_layer_error = Vec::with_capacity(self.depth());
        let mut current: Option<Matrix> = None;
        for layer in 1..=self.depth() {
            let next = self.step(layer, current.as_ref(), &self.y)?;
            per_layer_error.push(self.error(&next)?);
            current = Some(next);
        }
        let bound = *per_layer_error.last().expect("depth >= 1");
        Ok(Yes0Trace { per_layer_error, bound })
    }

    fn check_outputs(&self, outputs: &[Matrix]) -> Result<()> {
        if outputs.len() != self.depth() {
            return Err(Error::Config(format!("expected {} layer outputs, got {}", self.depth(), outputs.len())));
        }
        for (i, o) in outputs.iter().enumerate() {
            if o.cols() != self.x.cols() {
                return Err(Error::LayerShape {
                    layer: i,
                    detail: format!("output has {} columns, data has {}", o.cols(), self.x.cols()),
                });
            }
        }
        Ok(())
    }

    /// Final chain error for one checkpoint set, reusing cached prefixes.
    fn chain_error(&self, outputs: &[Matrix], set: &CheckpointSet, cache: &mut ChainCache) -> Result<f64> {
        let depth = self.depth();
        let schedule = set.target_schedule(depth);
        let start = (1..depth).rev().find(|&len| cache.contains_key(&schedule[..len])).unwrap_or(0);
        let mut current: Option<Matrix> = (start > 0).then(|| cache[&schedule[..start]].clone());
        for layer in start + 1..=depth {
            let t = schedule[layer - 1];
            let target = if t == depth + 1 { &self.y } else { &outputs[t - 2] };
            let next = self.step(layer, current.as_ref(), target)?;
            if layer < depth {
                cache.insert(schedule[..layer].to_vec(), next.clone());
            }
            current = Some(next);
        }
        self.error(current.as_ref().expect("depth >= 1"))
    }

    fn best_of_degree(&self, outputs: &[Matrix], degree: usize, cache: &mut ChainCache) -> Result<YesKResult> {
        let mut best: Option<YesKResult> = None;
        for set in combinations(self.depth(), degree) {
            let e = self.chain_error(outputs, &set, cache)?;
            // lexicographic order + strict comparison: smallest set wins ties
            if best.as_ref().is_none_or(|b| e < b.bound) {
                best = Some(YesKResult { bound: e, best: set });
            }
        }
        best.ok_or_else(|| Error::Config(format!("no checkpoint sets of size {degree}")))
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        let depth = self.depth();
        if degree == 0 || degree + 1 > depth {
            return Err(Error::Config(format!("degree {degree} outside 1..={}", depth.saturating_sub(1))));
        }
        Ok(())
    }

    /// Degree-`degree` bound: the best chain over every checkpoint set of
    /// that size. `outputs[j - 1]` is the live model's output after layer `j`.
    pub fn yes_k_bound(&self, outputs: &[Matrix], degree: usize) -> Result<YesKResult> {
        self.check_degree(degree)?;
        self.check_outputs(outputs)?;
        self.best_of_degree(outputs, degree, &mut ChainCache::new())
    }

    /// YES-0 plus every degree up to `max_degree`. With `monotone`, the
    /// degree-`k` value is the running minimum over degrees `<= k`.
    pub fn bound_set(&self, outputs: &[Matrix], max_degree: usize, monotone: bool) -> Result<YesBoundSet> {
        self.check_degree(max_degree)?;
        self.check_outputs(outputs)?;
        let yes0 = self.yes0_trace()?.bound;
        let mut cache = ChainCache::new();
        let mut cloud_bottom = yes0;
        let mut best_checkpoints = CheckpointSet::empty();
        let mut yes_k = Vec::with_capacity(max_degree);
        for degree in 1..=max_degree {
            let r = self.best_of_degree(outputs, degree, &mut cache)?;
            if r.bound < cloud_bottom {
                cloud_bottom = r.bound;
                best_checkpoints = r.best.clone();
            }
            yes_k.push(r.bound);
        }
        if monotone {
            for i in 1..yes_k.len() {
                if yes_k[i - 1] < yes_k[i] {
                    yes_k[i] = yes_k[i - 1];
                }
            }
        }
        Ok(YesBoundSet { yes0, yes_k, cloud_top: yes0, cloud_bottom, best_checkpoints })
    }
}

fn check_feasible(y: &Matrix, last: Activation) -> Result<()> {
    let mut first = None;
    let mut count = 0;
    for i in 0..y.rows() {
        for (j, &v) in y.row(i).iter().enumerate() {
            if !last.contains(v) {
                count += 1;
                first.get_or_insert((i, j, v));
            }
        }
    }
    match first {
        None => Ok(()),
        Some((row, col, value)) => Err(Error::InfeasibleTarget { count, row, col, value }),
    }
}

/// YES-0 chain: every layer projects straight at `Y`.
pub fn yes0_trace(x: &Matrix, y: &Matrix, config: &BoundConfig) -> Result<Yes0Trace> {
    BoundEngine::new(x.clone(), y.clone(), config.clone())?.yes0_trace()
}

/// YES-k bound over all checkpoint sets of size `degree`.
pub fn yes_k_bound(
    model_layer_outputs: &[Matrix],
    x: &Matrix,
    y: &Matrix,
    degree: usize,
    config: &BoundConfig,
) -> Result<YesKResult> {
    BoundEngine::new(x.clone(), y.clone(), config.clone())?.yes_k_bound(model_layer_outputs, degree)
}

pub fn yes_bound_set(
    model_layer_outputs: &[Matrix],
    x: &Matrix,
    y: &Matrix,
    max_degree: usize,
    config: &BoundConfig,
    monotone: bool,
) -> Result<YesBoundSet> {
    BoundEngine::new(x.clone(), y.clone(), config.clone())?.bound_set(model_layer_outputs, max_degree, monotone)
}

/// Red above the top, green at or below the bottom, yellow in between.
/// Boundary values go to the better region.
pub fn classify_region(loss: f64, bounds: &YesBoundSet) -> CloudRegion {
    if loss.is_nan() || loss > bounds.cloud_top {
        CloudRegion::Red
    } else if loss > bounds.cloud_bottom {
        CloudRegion::Yellow
    } else {
        CloudRegion::Green
    }
}

/// `max(loss - cloud_bottom, 0)`: the only certification quantity the
/// training side may see.
pub fn guidance_distance(loss: f64, bounds: &YesBoundSet) -> f64 {
    let d = loss - bounds.cloud_bottom;
    if d > 0.0 {
        d
    } else {
        0.0
    }
}
