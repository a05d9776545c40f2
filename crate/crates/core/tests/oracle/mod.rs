//! Independent reference implementations and the randomized suites built on
//! them. Everything here recomputes from definitions with nalgebra, so a bug
//! in the crate's own linear algebra cannot hide in both sides of a check.
//!
//! Shared with the `acceptance` target of the std crate.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use yescert_core::{
    backward, default_rcond, init_params, pinv, Activation, BoundConfig, BoundEngine, LayerParams, Matrix, MlpParams,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// nalgebra pseudoinverse with the crate's cutoff rule: singular values at or
/// below `rcond * s_max` are dropped.
pub fn na_pinv(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.pseudo_inverse(rcond * smax).expect("u and v were requested")
}

fn relu(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn act(a: Activation, m: &mut DMatrix<f64>) {
    if a == Activation::Relu {
        relu(m);
    }
}

fn with_ones(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().insert_row(m.nrows(), 1.0)
}

/// Per-layer errors `||Y - Y_{j+1}||_F^2 / d` of the projection chain whose layer
/// `j` targets `outputs[t - 2]` for the smallest checkpoint `t > j`, or `Y`
/// when no checkpoint lies above `j`. The empty set is YES-0.
pub fn brute_chain(
    x: &Matrix,
    y: &Matrix,
    outputs: &[Matrix],
    checkpoints: &[usize],
    acts: &[Activation],
    bias: bool,
) -> Vec<f64> {
    let yn = to_na(y);
    let d = y.cols() as f64;
    let mut current = to_na(x);
    let mut errors = Vec::new();
    for j in 1..=acts.len() {
        let target = match checkpoints.iter().copied().filter(|&t| t > j).min() {
            Some(t) => to_na(&outputs[t - 2]),
            None => yn.clone(),
        };
        let source = if bias { with_ones(&current) } else { current.clone() };
        let rcond = default_rcond(source.nrows(), source.ncols());
        let a = &target * na_pinv(&source, rcond);
        let mut next = a * &source;
        act(acts[j - 1], &mut next);
        // intermediate layers aimed at a checkpoint may not have Y's shape
        errors.push(if next.shape() == yn.shape() { (&yn - &next).norm_squared() / d } else { f64::NAN });
        current = next;
    }
    errors
}

/// Minimum over every checkpoint subset of `{2..K}` of size `k`, with the
/// lexicographically smallest minimizer.
pub fn brute_yes_k(
    x: &Matrix,
    y: &Matrix,
    outputs: &[Matrix],
    k: usize,
    acts: &[Activation],
    bias: bool,
) -> (f64, Vec<usize>) {
    let depth = acts.len();
    let mut sets: Vec<Vec<usize>> = (0u32..1 << (depth - 1))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..depth - 1).filter(|b| m >> b & 1 == 1).map(|b| b + 2).collect())
        .collect();
    sets.sort();
    let mut best = (f64::INFINITY, Vec::new());
    for s in sets {
        let e = *brute_chain(x, y, outputs, &s, acts, bias).last().unwrap();
        if e < best.0 {
            best = (e, s);
        }
    }
    best
}

/// Result of a randomized suite.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub cases: usize,
    /// Largest normalized discrepancy seen; a case fails above 1.
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ratio: f64, what: impl FnOnce() -> String) {
        if ratio.is_nan() || ratio > 1.0 {
            self.failures.push(what());
        }
        if ratio.is_nan() || ratio > self.worst {
            self.worst = ratio;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A random shape up to 64 x 64. Every third matrix is built as a product
/// through a narrow inner dimension so it is rank deficient.
fn penrose_case(rng: &mut ChaCha8Rng) -> Matrix {
    let m = rng.random_range(1..=64);
    let n = rng.random_range(1..=64);
    match rng.random_range(0..3) {
        0 => {
            let r = rng.random_range(1..=m.min(n));
            randn(rng, m, r).matmul(&randn(rng, r, n)).unwrap()
        }
        1 => {
            // zero columns and a duplicated row
            let mut a = randn(rng, m, n);
            let zero = rng.random_range(0..n);
            for i in 0..m {
                a[(i, zero)] = 0.0;
            }
            if m > 1 {
                let r0 = a.row(0).to_vec();
                a.row_mut(m - 1).copy_from_slice(&r0);
            }
            a
        }
        _ => randn(rng, m, n).scale(10f64.powi(rng.random_range(-3..=3))),
    }
}

/// The four Moore-Penrose conditions on `count` random matrices, each within
/// `tol` relative to the norm of the matrix it compares against.
pub fn penrose_suite(count: usize, seed: u64, tol: f64) -> Outcome {
    let mut rng = rng(seed);
    let mut out = Outcome::default();
    for case in 0..count {
        let a = penrose_case(&mut rng);
        let p = pinv(&a, default_rcond(a.rows(), a.cols())).unwrap();
        let (an, pn) = (to_na(&a), to_na(&p));
        let ap = &an * &pn;
        let pa = &pn * &an;
        let rel = |diff: DMatrix<f64>, scale: f64| diff.norm() / scale.max(f64::MIN_POSITIVE);
        let conds = [
            rel(&ap * &an - &an, an.norm()),
            rel(&pa * &pn - &pn, pn.norm()),
            rel(ap.transpose() - &ap, ap.norm().max(1.0)),
            rel(pa.transpose() - &pa, pa.norm().max(1.0)),
        ];
        for (i, c) in conds.iter().enumerate() {
            out.check(c / tol, || format!("case {case} {:?}: condition {} off by {c:e}", a.shape(), i + 1));
        }
        out.cases += 1;
    }
    out
}

/// The pseudoinverse map never loses to a random one by more than `tol`.
/// Half the competitors are small perturbations of the optimum.
pub fn ls_dominance_suite(count: usize, seed: u64, tol: f64) -> Outcome {
    let mut rng = rng(seed);
    let mut out = Outcome::default();
    for case in 0..count {
        let (n, m, d) = (rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=30));
        let mut x = randn(&mut rng, n, d);
        if rng.random_bool(0.3) && n > 1 {
            // rank deficient source
            let r0 = x.row(0).to_vec();
            x.row_mut(1).copy_from_slice(&r0);
        }
        let y = randn(&mut rng, m, d);
        let a_opt = yescert_core::least_squares_map(&y, &x, default_rcond(n, d)).unwrap();
        let a_rand = if rng.random_bool(0.5) {
            a_opt.add(&randn(&mut rng, m, n).scale(1e-4)).unwrap()
        } else {
            randn(&mut rng, m, n)
        };
        let resid = |a: &Matrix| to_na(&y.sub(&a.matmul(&x).unwrap()).unwrap()).norm_squared();
        let (best, other) = (resid(&a_opt), resid(&a_rand));
        let excess = best - other;
        out.check(excess / tol, || format!("case {case}: optimum {best:e} exceeds competitor {other:e}"));
        out.cases += 1;
    }
    out
}

/// Loss with an independent nalgebra forward pass.
fn na_loss(layers: &[LayerParams], x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut h = x.clone();
    for l in layers {
        let mut z = to_na(&l.weight) * &h;
        if let Some(b) = &l.bias {
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
        }
        act(l.activation, &mut z);
        h = z;
    }
    (&h - y).norm_squared() / y.ncols() as f64
}

fn pre_activation_signs(layers: &[LayerParams], x: &DMatrix<f64>) -> Vec<bool> {
    let mut h = x.clone();
    let mut signs = Vec::new();
    for l in layers {
        let mut z = to_na(&l.weight) * &h;
        if let Some(b) = &l.bias {
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
        }
        if l.activation == Activation::Relu {
            signs.extend(z.iter().map(|v| *v > 0.0));
        }
        act(l.activation, &mut z);
        h = z;
    }
    signs
}

/// Statistics of a finite-difference sweep.
#[derive(Debug, Clone, Default)]
pub struct GradientOutcome {
    pub outcome: Outcome,
    pub parameters: usize,
    /// Parameters whose +-h probe flipped a ReLU; the difference quotient
    /// there straddles a kink and says nothing about the derivative.
    pub kinks: usize,
}

/// Every parameter of `count` random nets against central differences with
/// step `h`: `|g - fd| <= rel * max(|g|, |fd|)` or `<= floor`.
pub fn gradient_suite(count: usize, seed: u64, rel: f64, floor: f64, h: f64) -> GradientOutcome {
    let mut rng = rng(seed);
    let mut res = GradientOutcome::default();
    for case in 0..count {
        let depth = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        let bias = rng.random_bool(0.5);
        let acts: Vec<Activation> = (0..depth)
            .map(|k| if k + 1 == depth && rng.random_bool(0.5) { Activation::Identity } else { Activation::Relu })
            .collect();
        let d = rng.random_range(1..=8);
        let mut layers = init_params(&dims, bias, &acts, rng.random()).unwrap().layers().to_vec();
        // biases start at zero; a dead upstream layer would then park every
        // pre-activation exactly on the ReLU kink
        for l in &mut layers {
            if let Some(b) = l.bias.as_mut() {
                b.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal) * 0.5);
            }
        }
        let params = MlpParams::new(layers).unwrap();
        let x = randn(&mut rng, dims[0], d);
        let y = randn(&mut rng, dims[depth], d);
        let grads = backward(&params, &x, &y).unwrap();
        let analytic: Vec<f64> = grads.iter().copied().collect();
        let (xn, yn) = (to_na(&x), to_na(&y));
        let base: Vec<LayerParams> = params.layers().to_vec();
        let base_signs = pre_activation_signs(&base, &xn);
        let mut idx = 0;
        for li in 0..base.len() {
            let nw = base[li].weight.as_slice().len();
            let nb = base[li].bias.as_ref().map_or(0, Vec::len);
            for pi in 0..nw + nb {
                let probe = |delta: f64| {
                    let mut layers = base.clone();
                    if pi < nw {
                        layers[li].weight.as_mut_slice()[pi] += delta;
                    } else {
                        layers[li].bias.as_mut().unwrap()[pi - nw] += delta;
                    }
                    MlpParams::new(layers.clone()).unwrap();
                    layers
                };
                let (plus, minus) = (probe(h), probe(-h));
                res.parameters += 1;
                if pre_activation_signs(&plus, &xn) != base_signs || pre_activation_signs(&minus, &xn) != base_signs {
                    res.kinks += 1;
                    idx += 1;
                    continue;
                }
                let fd = (na_loss(&plus, &xn, &yn) - na_loss(&minus, &xn, &yn)) / (2.0 * h);
                let g = analytic[idx];
                let err = (g - fd).abs();
                let ratio = if err <= floor { 0.0 } else { err / (rel * g.abs().max(fd.abs())) };
                res.outcome.check(ratio, || format!("net {case} layer {li} param {pi}: analytic {g:e} vs fd {fd:e}"));
                idx += 1;
            }
        }
        res.outcome.cases += 1;
    }
    res
}

/// YES-0 per-layer errors on random all-ReLU instances with `Y >= 0`; each
/// step may exceed its predecessor by at most `tol`.
pub fn depth_monotone_suite(count: usize, seed: u64, tol: f64) -> Outcome {
    let mut rng = rng(seed);
    let mut out = Outcome::default();
    for case in 0..count {
        let depth = rng.random_range(2..=8);
        let (n, m, d) = (rng.random_range(1..=10), rng.random_range(1..=10), rng.random_range(2..=30));
        let x = randn(&mut rng, n, d);
        let y = randn(&mut rng, m, d).map(|v| v.max(0.0));
        let bias = rng.random_bool(0.5);
        let cfg = BoundConfig::new(vec![Activation::Relu; depth], bias);
        let trace = BoundEngine::new(x, y, cfg).unwrap().yes0_trace().unwrap();
        for (k, w) in trace.per_layer_error.windows(2).enumerate() {
            let rise = w[1] - w[0];
            out.check(rise / tol, || {
                format!("case {case}: layer {} error {:e} > layer {} error {:e}", k + 2, w[1], k + 1, w[0])
            });
        }
        out.cases += 1;
    }
    out
}

/// A fixed ten-layer ReLU instance: few inputs, a wider non-negative target.
/// The activation adds directions to the row space at every step, so the
/// YES-0 error keeps falling with depth.
pub fn deep_yes0_trace() -> Vec<f64> {
    let mut rng = rng(10);
    let x = randn(&mut rng, 4, 60);
    let y = randn(&mut rng, 24, 60).map(|v| v.max(0.0));
    let cfg = BoundConfig::new(vec![Activation::Relu; 10], false);
    BoundEngine::new(x, y, cfg).unwrap().yes0_trace().unwrap().per_layer_error
}

/// Random small instance for checkpoint enumeration: depth `K <= 4`, widths
/// `<= 5`, `d <= 8`, and layer outputs of a random network.
pub struct SmallInstance {
    pub x: Matrix,
    pub y: Matrix,
    pub outputs: Vec<Matrix>,
    pub acts: Vec<Activation>,
    pub bias: bool,
}

pub fn small_instance(rng: &mut ChaCha8Rng) -> SmallInstance {
    let depth = rng.random_range(2..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=5)).collect();
    let d = rng.random_range(2..=8);
    let bias = rng.random_bool(0.5);
    let mut acts = vec![Activation::Relu; depth];
    if rng.random_bool(0.5) {
        acts[depth - 1] = Activation::Identity;
    }
    let x = randn(rng, dims[0], d);
    let mut y = randn(rng, dims[depth], d);
    if acts[depth - 1] == Activation::Relu {
        y = y.map(|v| v.max(0.0));
    }
    let params = init_params(&dims, bias, &acts, rng.random()).unwrap();
    let outputs = yescert_core::forward(&params, &x).unwrap().hidden_and_output().to_vec();
    SmallInstance { x, y, outputs, acts, bias }
}

/// Every degree of every instance against exhaustive enumeration. Values
/// must agree within `tol * max(1, |value|)` and the winning sets must match.
pub fn checkpoint_search_suite(count: usize, seed: u64, tol: f64) -> Outcome {
    let mut rng = rng(seed);
    let mut out = Outcome::default();
    for case in 0..count {
        let inst = small_instance(&mut rng);
        let depth = inst.acts.len();
        let cfg = BoundConfig::new(inst.acts.clone(), inst.bias);
        let engine = BoundEngine::new(inst.x.clone(), inst.y.clone(), cfg).unwrap();
        let yes0 = engine.yes0_trace().unwrap().bound;
        let want0 = *brute_chain(&inst.x, &inst.y, &inst.outputs, &[], &inst.acts, inst.bias).last().unwrap();
        out.check((yes0 - want0).abs() / (tol * want0.abs().max(1.0)), || {
            format!("case {case}: yes0 {yes0:e} vs {want0:e}")
        });
        for k in 1..depth {
            let got = engine.yes_k_bound(&inst.outputs, k).unwrap();
            let (want, set) = brute_yes_k(&inst.x, &inst.y, &inst.outputs, k, &inst.acts, inst.bias);
            out.check((got.bound - want).abs() / (tol * want.abs().max(1.0)), || {
                format!("case {case} k={k}: {:e} vs brute force {want:e}", got.bound)
            });
            // a different minimizer is fine only on an exact tie
            if got.best.indices() != set.as_slice() {
                let alt = *brute_chain(&inst.x, &inst.y, &inst.outputs, got.best.indices(), &inst.acts, inst.bias)
                    .last()
                    .unwrap();
                out.check((alt - want).abs() / (tol * want.abs().max(1.0)), || {
                    format!("case {case} k={k}: picked {:?}, brute force picked {set:?}", got.best.indices())
                });
            }
        }
        out.cases += 1;
    }
    out
}
