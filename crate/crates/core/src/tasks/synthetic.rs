use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{meta, Dataset};
use crate::error::{Error, Result};
use crate::math::{abs, sqrt};
use crate::matrix::Matrix;

/// How the second parameter of `N(0, s)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    Variance,
    StdDev,
}

impl NoiseScale {
    pub fn std_dev(self, param: f64) -> f64 {
        match self {
            NoiseScale::Variance => sqrt(param),
            NoiseScale::StdDev => param,
        }
    }
}

/// The denoising noise parameter (0.2) is a variance by default.
pub const DENOISING_NOISE_SCALE: NoiseScale = NoiseScale::Variance;

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Phase retrieval: `b_i = |A x_i|` with `A` (`n x n`) drawn once from
/// `N(0, 1/n)` and `x_i ~ N(0, I)`. Inputs are `b`, targets are `x`.
pub fn gen_phase_retrieval(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("phase retrieval needs n >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensing = Normal::new(0.0, 1.0 / sqrt(n as f64)).expect("positive std");
    let a = Matrix::new(n, n, (0..n * n).map(|_| sensing.sample(&mut rng)).collect())?;
    let signals = Matrix::new(n, d, (0..n * d).map(|_| std_normal(&mut rng)).collect())?;
    let b = a.matmul(&signals)?.map(abs);
    Dataset::new(b, signals, meta("phase_retrieval", seed, &[("n", n as f64), ("d", d as f64)]))
}

/// Returns the sensing matrix drawn by [`gen_phase_retrieval`] for `seed`.
pub fn phase_retrieval_sensing(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensing = Normal::new(0.0, 1.0 / sqrt(n as f64)).expect("positive std");
    Matrix::from_fn(n, n, |_, _| sensing.sample(&mut rng))
}

/// Denoising: `num_signals` fixed signals `x ~ N(0, I)`, each repeated with
/// `noise_per_signal` independent noise draws. Columns are grouped by
/// signal. Inputs are `x + noise`, targets are `x`.
pub fn gen_denoising(
    n: usize,
    num_signals: usize,
    noise_per_signal: usize,
    noise_param: f64,
    scale: NoiseScale,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || num_signals == 0 || noise_per_signal == 0 {
        return Err(Error::Config("denoising needs positive n, num_signals, noise_per_signal".into()));
    }
    if !(noise_param >= 0.0) {
        return Err(Error::Config("noise parameter must be >= 0".into()));
    }
    let sigma = scale.std_dev(noise_param);
    let d = num_signals * noise_per_signal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signals: Vec<Vec<f64>> = (0..num_signals).map(|_| (0..n).map(|_| std_normal(&mut rng)).collect()).collect();
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    for (s, signal) in signals.iter().enumerate() {
        for r in 0..noise_per_signal {
            let col = s * noise_per_signal + r;
            for (i, &v) in signal.iter().enumerate() {
                y[(i, col)] = v;
                x[(i, col)] = v + sigma * std_normal(&mut rng);
            }
        }
    }
    let params = [
        ("n", n as f64),
        ("num_signals", num_signals as f64),
        ("noise_per_signal", noise_per_signal as f64),
        ("noise_param", noise_param),
        ("noise_std", sigma),
    ];
    Dataset::new(x, y, meta("denoising", seed, &params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_retrieval_shapes_and_nonnegativity() {
        let ds = gen_phase_retrieval(20, 1000, 3).unwrap();
        assert_eq!(ds.x.shape(), (20, 1000));
        assert_eq!(ds.y.shape(), (20, 1000));
        assert!(ds.x.as_slice().iter().all(|&v| v >= 0.0));
        assert!(ds.y.as_slice().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn phase_retrieval_sensing_variance() {
        let a = phase_retrieval_sensing(20, 11);
        let s = a.as_slice();
        let mean = s.iter().sum::<f64>() / 400.0;
        let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 399.0;
        assert!((var - 0.05).abs() < 0.15 * 0.05, "{var}");
        // the generator uses exactly this matrix
        let ds = gen_phase_retrieval(20, 5, 11).unwrap();
        assert_eq!(a.matmul(&ds.y).unwrap().map(abs), ds.x);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_phase_retrieval(5, 7, 1).unwrap(), gen_phase_retrieval(5, 7, 1).unwrap());
        let a = gen_denoising(20, 50, 20, 0.2, NoiseScale::Variance, 4).unwrap();
        assert_eq!(a, gen_denoising(20, 50, 20, 0.2, NoiseScale::Variance, 4).unwrap());
    }

    #[test]
    fn denoising_blocks_repeat_targets() {
        let ds = gen_denoising(20, 50, 20, 0.2, DENOISING_NOISE_SCALE, 9).unwrap();
        assert_eq!(ds.len(), 1000);
        for block in 0..50 {
            let first = ds.y.column(block * 20);
            for r in 1..20 {
                assert_eq!(ds.y.column(block * 20 + r), first);
            }
        }
        assert_ne!(ds.y.column(0), ds.y.column(20));
    }

    #[test]
    fn denoising_without_noise_copies_targets() {
        let ds = gen_denoising(8, 3, 4, 0.0, NoiseScale::Variance, 1).unwrap();
        assert_eq!(ds.x, ds.y);
    }

    #[test]
    fn denoising_noise_second_moment() {
        for (scale, expected) in [(NoiseScale::Variance, 0.2), (NoiseScale::StdDev, 0.04)] {
            let ds = gen_denoising(20, 50, 20, 0.2, scale, 5).unwrap();
            let noise = ds.x.sub(&ds.y).unwrap();
            let m2 = noise.as_slice().iter().map(|v| v * v).sum::<f64>() / noise.as_slice().len() as f64;
            assert!((m2 - expected).abs() < 0.1 * expected, "{scale:?}: {m2}");
        }
    }
}
