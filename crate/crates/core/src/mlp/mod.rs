//! Fully connected network with hand-written backpropagation.
//!
//! Layer `k` computes `Y_{k+1} = act_k(A_k Y_k + b_k 1^T)` on column-sample
//! matrices. The loss is the squared Frobenius error divided by the number
//! of samples, the same normalization the bound engine uses.

mod optim;
mod trainer;

pub use optim::{optimizer_step, LrSchedule, OptimizerKind, OptimizerState};
pub use trainer::Trainer;

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::matrix::{frob_norm_sq, Matrix};

/// Elementwise activation. Both variants are 1-Lipschitz and fix every
/// point of their own range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }

    /// Derivative, with the ReLU derivative at exactly 0 taken as 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Whether `v` lies in the range of the activation.
    #[inline]
    pub fn contains(self, v: f64) -> bool {
        match self {
            Activation::Relu => v >= 0.0,
            Activation::Identity => true,
        }
    }

    pub fn apply_matrix(self, m: &mut Matrix) {
        if self == Activation::Relu {
            m.map_in_place(|v| self.apply(v));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl LayerParams {
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

/// Network parameters, first layer first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<LayerParams>,
}

impl MlpParams {
    /// Validates that layer shapes chain and every entry is finite.
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if let Some(b) = &layer.bias {
                if b.len() != layer.output_dim() {
                    return Err(Error::LayerShape {
                        layer: k,
                        detail: format!("bias length {} != output dim {}", b.len(), layer.output_dim()),
                    });
                }
            }
            if k > 0 && layers[k - 1].output_dim() != layer.input_dim() {
                return Err(Error::LayerShape {
                    layer: k,
                    detail: format!(
                        "input dim {} does not chain with previous output dim {}",
                        layer.input_dim(),
                        layers[k - 1].output_dim()
                    ),
                });
            }
            let bias_ok = layer.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()));
            if !layer.weight.is_finite() || !bias_ok {
                return Err(Error::LayerShape { layer: k, detail: "non-finite parameter".into() });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Number of layers `K`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn uses_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    /// All parameters in a fixed order: per layer, weights row-major then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter().flatten()))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut().flatten()))
    }

    fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.shape() == b.weight.shape() && a.bias.as_ref().map(Vec::len) == b.bias.as_ref().map(Vec::len)
            })
    }
}

/// Gradient of the loss, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
    /// Loss at the point where the gradient was taken.
    pub loss: f64,
}

impl Gradients {
    /// Same order as [`MlpParams::iter`].
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.as_slice().iter().chain(b.iter().flatten()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Draws weights from `N(0, 1/fan_in)` with zero biases. `layer_dims` lists
/// the input width followed by each layer's output width.
pub fn init_params(layer_dims: &[usize], use_bias: bool, activations: &[Activation], seed: u64) -> Result<MlpParams> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!("layer_dims needs at least 2 entries, got {}", layer_dims.len())));
    }
    if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("layer_dims[{pos}] is zero")));
    }
    let depth = layer_dims.len() - 1;
    if activations.len() != depth {
        return Err(Error::Config(format!("{} activations given for {depth} layers", activations.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(depth);
    for k in 0..depth {
        let (fan_in, fan_out) = (layer_dims[k], layer_dims[k + 1]);
        let normal = Normal::new(0.0, 1.0 / sqrt(fan_in as f64)).expect("positive std");
        let data = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
        layers.push(LayerParams {
            weight: Matrix::new(fan_out, fan_in, data)?,
            bias: use_bias.then(|| alloc::vec![0.0; fan_out]),
            activation: activations[k],
        });
    }
    MlpParams::new(layers)
}

/// Per-layer outputs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// `K + 1` matrices: the input followed by each layer's output.
    pub layer_outputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.layer_outputs.last().expect("forward pass stores the input")
    }

    /// The outputs after layers `1..=K`, excluding the input.
    pub fn hidden_and_output(&self) -> &[Matrix] {
        &self.layer_outputs[1..]
    }
}

pub fn forward(params: &MlpParams, x: &Matrix) -> Result<ForwardPass> {
    let mut outputs = Vec::with_capacity(params.depth() + 1);
    let mut pre = Vec::with_capacity(params.depth());
    outputs.push(x.clone());
    for (k, layer) in params.layers.iter().enumerate() {
        let input = &outputs[k];
        if input.rows() != layer.input_dim() {
            return Err(Error::LayerShape {
                layer: k,
                detail: format!("expects {} input rows, got {}", layer.input_dim(), input.rows()),
            });
        }
        let mut z = layer.weight.matmul(input)?;
        if let Some(b) = &layer.bias {
            z.add_column_broadcast(b);
        }
        let mut out = z.clone();
        layer.activation.apply_matrix(&mut out);
        pre.push(z);
        outputs.push(out);
    }
    Ok(ForwardPass { layer_outputs: outputs, pre_activations: pre })
}

/// `||output - y||_F^2 / d` with `d` the number of columns.
pub fn loss_mse(output: &Matrix, y: &Matrix) -> Result<f64> {
    if output.shape() != y.shape() {
        return Err(Error::DimensionMismatch { op: "loss_mse", left: output.shape(), right: y.shape() });
    }
    Ok(frob_norm_sq(&output.sub(y)?) / y.cols() as f64)
}

/// Exact gradient of [`loss_mse`] with respect to every weight and bias.
pub fn backward(params: &MlpParams, x: &Matrix, y: &Matrix) -> Result<Gradients> {
    if x.cols() != y.cols() || y.rows() != params.output_dim() {
        return Err(Error::DimensionMismatch { op: "backward", left: x.shape(), right: y.shape() });
    }
    let pass = forward(params, x)?;
    let d = x.cols() as f64;
    let residual = pass.output().sub(y)?;
    let loss = frob_norm_sq(&residual) / d;

    let depth = params.depth();
    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    // dL/d(output)
    let mut upstream = residual.scale(2.0 / d);
    for k in (0..depth).rev() {
        let layer = &params.layers[k];
        let z = &pass.pre_activations[k];
        let mut delta = upstream;
        if layer.activation != Activation::Identity {
            for (g, &zi) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *g *= layer.activation.derivative(zi);
            }
        }
        weights.push(delta.matmul_t(&pass.layer_outputs[k])?);
        biases.push(layer.bias.as_ref().map(|_| (0..delta.rows()).map(|i| delta.row(i).iter().sum()).collect()));
        if k > 0 {
            upstream = layer.weight.t_matmul(&delta)?;
        } else {
            upstream = delta;
        }
    }
    weights.reverse();
    biases.reverse();
    Ok(Gradients { weights, biases, loss })
}

/// Root-mean-square parameter change between two snapshots.
pub fn weight_change_norm(prev: &MlpParams, next: &MlpParams) -> Result<f64> {
    if !prev.same_shape(next) {
        return Err(Error::Config("weight_change_norm: parameter shapes differ".into()));
    }
    let sum: f64 = prev.iter().zip(next.iter()).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(sqrt(sum) / sqrt(prev.param_count() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single_layer(weight: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> MlpParams {
        MlpParams::new(vec![LayerParams { weight, bias, activation }]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let acts = [Activation::Relu];
        let a = init_params(&[2, 2], true, &acts, 7).unwrap();
        let b = init_params(&[2, 2], true, &acts, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&[2, 2], true, &acts, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn five_layer_network_from_six_widths() {
        let acts = [Activation::Relu; 5];
        let p = init_params(&[20; 6], false, &acts, 1).unwrap();
        assert_eq!(p.depth(), 5);
        assert!(!p.uses_bias());
        assert_eq!(p.param_count(), 5 * 400);
    }

    #[test]
    fn init_variance_scales_with_fan_in() {
        let n = 1000;
        let p = init_params(&[n, 20], false, &[Activation::Identity], 3).unwrap();
        let w = p.layers()[0].weight.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() - 1) as f64;
        let expected = 1.0 / n as f64;
        assert!((var - expected).abs() < 0.2 * expected, "var {var}");
    }

    #[test]
    fn init_rejects_bad_configs() {
        assert!(init_params(&[3], false, &[], 0).is_err());
        assert!(init_params(&[3, 0], false, &[Activation::Relu], 0).is_err());
        assert!(init_params(&[3, 2], false, &[], 0).is_err());
    }

    #[test]
    fn identity_network_passes_input_through() {
        let layer = LayerParams { weight: Matrix::identity(3), bias: None, activation: Activation::Identity };
        let p = MlpParams::new(vec![layer.clone(), layer]).unwrap();
        let x = Matrix::from_fn(3, 4, |i, j| i as f64 - j as f64);
        let pass = forward(&p, &x).unwrap();
        assert_eq!(pass.output(), &x);
        assert_eq!(pass.layer_outputs.len(), 3);
    }

    #[test]
    fn relu_kills_negated_nonnegative_input() {
        let p = single_layer(Matrix::identity(2).scale(-1.0), None, Activation::Relu);
        let x = Matrix::from_rows(&[[1.0, 0.0, 3.0], [2.0, 5.0, 0.5]]);
        assert_eq!(forward(&p, &x).unwrap().output(), &Matrix::zeros(2, 3));
    }

    #[test]
    fn two_layer_relu_matches_straight_line_evaluation() {
        let w1 = Matrix::from_rows(&[[1.0, -1.0, 0.5], [0.0, 2.0, -1.0]]);
        let b1 = vec![0.5, -1.0];
        let w2 = Matrix::from_rows(&[[1.0, 1.0], [-2.0, 0.5]]);
        let p = MlpParams::new(vec![
            LayerParams { weight: w1, bias: Some(b1), activation: Activation::Relu },
            LayerParams { weight: w2, bias: None, activation: Activation::Relu },
        ])
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0], [2.0, -2.0]]);
        // column 0: h = relu([1+1+0.5, 0-2-1]) = [2.5, 0]; out = relu([2.5, -5]) = [2.5, 0]
        // column 1: h = relu([2-1-1+0.5, 2+2-1]) = [0.5, 3]; out = relu([3.5, 0.5]) = [3.5, 0.5]
        let expected = Matrix::from_rows(&[[2.5, 3.5], [0.0, 0.5]]);
        assert_eq!(forward(&p, &x).unwrap().output(), &expected);
    }

    #[test]
    fn forward_names_the_failing_layer() {
        let p = single_layer(Matrix::identity(2), None, Activation::Relu);
        let err = forward(&p, &Matrix::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::LayerShape { layer: 0, .. }));
    }

    #[test]
    fn loss_values() {
        let y = Matrix::from_fn(2, 3, |i, j| (i + j) as f64);
        assert_eq!(loss_mse(&y, &y).unwrap(), 0.0);
        let ones = y.add(&Matrix::filled(2, 3, 1.0)).unwrap();
        assert_eq!(loss_mse(&ones, &y).unwrap(), 2.0);
        let r = y.add(&Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])).unwrap();
        assert!((loss_mse(&r, &y).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(loss_mse(&y, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let p = init_params(&[3, 4, 2], true, &[Activation::Relu, Activation::Identity], 5).unwrap();
        let x = Matrix::from_fn(3, 5, |i, j| (i as f64 * 0.3 - j as f64 * 0.2).sin());
        let y = forward(&p, &x).unwrap().output().clone();
        let g = backward(&p, &x, &y).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert_eq!(g.loss, 0.0);
    }

    #[test]
    fn single_linear_layer_gradient_is_closed_form() {
        let a = Matrix::from_rows(&[[1.0, -0.5, 2.0], [0.25, 1.5, -1.0]]);
        let p = single_layer(a.clone(), None, Activation::Identity);
        let x = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.5);
        let y = Matrix::from_fn(2, 4, |i, j| (i as f64) - (j as f64) * 0.3);
        let g = backward(&p, &x, &y).unwrap();
        let expected = a.matmul(&x).unwrap().sub(&y).unwrap().matmul_t(&x).unwrap().scale(2.0 / 4.0);
        let diff = frob_norm_sq(&g.weights[0].sub(&expected).unwrap());
        assert!(diff < 1e-24, "{diff}");
    }

    #[test]
    fn weight_change_examples() {
        let p = init_params(&[2, 3, 1], true, &[Activation::Relu, Activation::Identity], 9).unwrap();
        assert_eq!(weight_change_norm(&p, &p).unwrap(), 0.0);

        let one = single_layer(Matrix::from_rows(&[[1.0]]), None, Activation::Identity);
        let moved = single_layer(Matrix::from_rows(&[[1.5]]), None, Activation::Identity);
        assert_eq!(weight_change_norm(&one, &moved).unwrap(), 0.5);

        let mut shifted = p.clone();
        for v in shifted.iter_mut() {
            *v += 1.0;
        }
        // flattened-vector oracle: every entry moved by 1
        let flat_prev: Vec<f64> = p.iter().copied().collect();
        let flat_next: Vec<f64> = shifted.iter().copied().collect();
        let oracle = sqrt(flat_prev.iter().zip(&flat_next).map(|(a, b)| (b - a) * (b - a)).sum::<f64>())
            / sqrt(flat_prev.len() as f64);
        assert!((weight_change_norm(&p, &shifted).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 1.0).abs() < 1e-15);

        let other = init_params(&[2, 2, 1], true, &[Activation::Relu, Activation::Identity], 9).unwrap();
        assert!(weight_change_norm(&p, &other).is_err());
    }
}
