use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{meta, Dataset};
use crate::error::{Error, Result};
use crate::math::{exp, sqrt};
use crate::matrix::Matrix;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Config(format!(
                "image {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Quantizes to bytes, clamping to `[0, 1]` first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| {
                let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                libm::round(c * 255.0) as u8
            })
            .collect()
    }

    /// Smooth deterministic test card, for runs without an image file.
    pub fn test_pattern(width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let u = c as f64 / width as f64;
                let v = r as f64 / height as f64;
                let disc = if (u - 0.5) * (u - 0.5) + (v - 0.45) * (v - 0.45) < 0.06 { 0.35 } else { 0.0 };
                let ramp = 0.5 * u + 0.15 * libm::sin(9.0 * v);
                pixels.push((0.2 + ramp + disc).clamp(0.0, 1.0));
            }
        }
        Self { width, height, pixels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensingKind {
    /// Entries drawn from `N(0, 1/p^2)` for `p x p` patches.
    Gaussian,
    /// Row-normalized Gaussian blur over the patch grid.
    Blur { sigma: f64 },
}

/// How an image is cut into patches and degraded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePatchPlan {
    pub patch_size: usize,
    pub sensing: SensingKind,
    pub sensing_seed: u64,
    /// Standard deviation of the additive measurement noise.
    pub noise_std: f64,
}

impl Default for ImagePatchPlan {
    fn default() -> Self {
        Self { patch_size: 8, sensing: SensingKind::Gaussian, sensing_seed: 0, noise_std: 0.0 }
    }
}

impl ImagePatchPlan {
    /// The `p^2 x p^2` operator applied to each flattened patch.
    pub fn sensing_matrix(&self) -> Matrix {
        let p = self.patch_size;
        let len = p * p;
        match self.sensing {
            SensingKind::Gaussian => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.sensing_seed);
                let dist = Normal::new(0.0, 1.0 / sqrt(len as f64)).expect("positive std");
                Matrix::from_fn(len, len, |_, _| dist.sample(&mut rng))
            }
            SensingKind::Blur { sigma } => {
                let mut m = Matrix::from_fn(len, len, |a, b| {
                    let (ra, ca) = ((a / p) as f64, (a % p) as f64);
                    let (rb, cb) = ((b / p) as f64, (b % p) as f64);
                    let dist2 = (ra - rb) * (ra - rb) + (ca - cb) * (ca - cb);
                    exp(-dist2 / (2.0 * sigma * sigma))
                });
                for i in 0..len {
                    let s: f64 = m.row(i).iter().sum();
                    for v in m.row_mut(i) {
                        *v /= s;
                    }
                }
                m
            }
        }
    }
}

fn check_divisible(width: usize, height: usize, p: usize) -> Result<()> {
    if p == 0 || !width.is_multiple_of(p) || !height.is_multiple_of(p) {
        return Err(Error::Config(format!("image {width}x{height} is not divisible into {p}x{p} patches")));
    }
    Ok(())
}

/// Non-overlapping `p x p` patches in row-major patch order, each flattened
/// row-major into one column.
pub fn patchify(image: &GrayImage, p: usize) -> Result<Matrix> {
    check_divisible(image.width, image.height, p)?;
    let (pw, ph) = (image.width / p, image.height / p);
    let mut out = Matrix::zeros(p * p, pw * ph);
    for pr in 0..ph {
        for pc in 0..pw {
            let col = pr * pw + pc;
            for r in 0..p {
                for c in 0..p {
                    out[(r * p + c, col)] = image.pixels[(pr * p + r) * image.width + pc * p + c];
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn depatchify(patches: &Matrix, width: usize, height: usize, p: usize) -> Result<GrayImage> {
    check_divisible(width, height, p)?;
    let (pw, ph) = (width / p, height / p);
    if patches.shape() != (p * p, pw * ph) {
        return Err(Error::DimensionMismatch { op: "depatchify", left: patches.shape(), right: (p * p, pw * ph) });
    }
    let mut pixels = alloc::vec![0.0; width * height];
    for pr in 0..ph {
        for pc in 0..pw {
            let col = pr * pw + pc;
            for r in 0..p {
                for c in 0..p {
                    pixels[(pr * p + r) * width + pc * p + c] = patches[(r * p + c, col)];
                }
            }
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Quadratic degradation `b_i = (A x_i)^2 + n_i` of every patch `x_i`.
/// Inputs are `b`, targets are the clean patches.
pub fn gen_quadratic_image(image: &GrayImage, plan: &ImagePatchPlan) -> Result<Dataset> {
    let patches = patchify(image, plan.patch_size)?;
    if !(plan.noise_std >= 0.0) {
        return Err(Error::Config("noise_std must be >= 0".into()));
    }
    let a = plan.sensing_matrix();
    let mut b = a.matmul(&patches)?.map(|v| v * v);
    if plan.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.sensing_seed);
        rng.set_stream(1);
        let dist = Normal::new(0.0, plan.noise_std).expect("valid std");
        for v in b.as_mut_slice() {
            *v += dist.sample(&mut rng);
        }
    }
    let params = [
        ("width", image.width as f64),
        ("height", image.height as f64),
        ("patch_size", plan.patch_size as f64),
        ("noise_std", plan.noise_std),
    ];
    Dataset::new(b, patches, meta("quadratic_image", plan.sensing_seed, &params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_without_noise_is_all_zero() {
        let img = GrayImage::new(16, 16, alloc::vec![0.0; 256]).unwrap();
        let ds = gen_quadratic_image(&img, &ImagePatchPlan::default()).unwrap();
        assert!(ds.x.as_slice().iter().all(|&v| v == 0.0));
        assert!(ds.y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cameraman_sized_image_gives_256_patches() {
        let img = GrayImage::test_pattern(128, 128);
        let ds = gen_quadratic_image(&img, &ImagePatchPlan::default()).unwrap();
        assert_eq!(ds.x.shape(), (64, 256));
        assert_eq!(ds.y.shape(), (64, 256));
        assert!(ds.x.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn patch_round_trip() {
        let img = GrayImage::test_pattern(24, 16);
        let p = patchify(&img, 8).unwrap();
        assert_eq!(p.shape(), (64, 6));
        assert_eq!(depatchify(&p, 24, 16, 8).unwrap(), img);
        // second patch starts at column 8 of row 0
        assert_eq!(p[(0, 1)], img.pixels[8]);
    }

    #[test]
    fn indivisible_dims_rejected() {
        let img = GrayImage::test_pattern(20, 16);
        assert!(matches!(patchify(&img, 8), Err(Error::Config(_))));
        assert!(gen_quadratic_image(&img, &ImagePatchPlan::default()).is_err());
    }

    #[test]
    fn blur_rows_sum_to_one() {
        let plan = ImagePatchPlan { sensing: SensingKind::Blur { sigma: 1.0 }, ..Default::default() };
        let a = plan.sensing_matrix();
        for i in 0..64 {
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn byte_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = GrayImage::from_bytes(16, 16, &bytes).unwrap();
        assert_eq!(img.to_bytes(), bytes);
    }
}
