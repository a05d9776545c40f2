//! MNIST ingestion (IDX format) and the diagonal label encoding.
//!
//! Digit `i` is encoded as a 28x28 zero image with a single 1 on the
//! diagonal at row/column `i`, flattened row-major.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{meta, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const MNIST_PIXELS: usize = MNIST_SIDE * MNIST_SIDE;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes.get(offset..offset + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or_else(|| {
        Error::Ingestion { offset: bytes.len(), detail: format!("truncated header, need byte {}", offset + 4) }
    })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Ingestion {
            offset: 0,
            detail: format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Raw IDX image payload.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::Ingestion {
            offset: bytes.len(),
            detail: format!("truncated image data: {count} images of {rows}x{cols} need {need} bytes"),
        });
    }
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..need].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(Error::Ingestion {
            offset: bytes.len(),
            detail: format!("truncated label data: {count} labels need {need} bytes"),
        });
    }
    let labels = &bytes[8..need];
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Ingestion { offset: 8 + pos, detail: format!("label {} > 9", labels[pos]) });
    }
    Ok(labels.to_vec())
}

/// Zero vector of length 784 with a 1 at flat index `digit * 28 + digit`.
pub fn encode_label(digit: u8) -> Result<Vec<f64>> {
    if digit > 9 {
        return Err(Error::Config(format!("digit {digit} out of range 0..=9")));
    }
    let mut v = vec![0.0; MNIST_PIXELS];
    v[diagonal_index(digit as usize)] = 1.0;
    Ok(v)
}

#[inline]
fn diagonal_index(digit: usize) -> usize {
    digit * MNIST_SIDE + digit
}

/// Argmax over the ten diagonal positions; ties go to the smaller digit.
pub fn decode_label(output: &[f64]) -> u8 {
    let mut best = 0usize;
    for digit in 1..10 {
        if output[diagonal_index(digit)] > output[diagonal_index(best)] {
            best = digit;
        }
    }
    best as u8
}

/// Fraction of columns of `outputs` that decode to the matching label.
pub fn success_rate(outputs: &Matrix, labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels.iter().enumerate().filter(|&(j, &l)| decode_label(&outputs.column(j)) == l).count();
    hits as f64 / labels.len() as f64
}

/// Dataset plus the digit labels it encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub dataset: Dataset,
    pub labels: Vec<u8>,
}

fn labeled(images: &[Vec<f64>], labels: Vec<u8>, task: &str, seed: u64) -> Result<LabeledDataset> {
    let targets = labels.iter().map(|&l| encode_label(l)).collect::<Result<Vec<_>>>()?;
    let x = Matrix::from_columns(images)?;
    let y = Matrix::from_columns(&targets)?;
    let dataset = Dataset::new(x, y, meta(task, seed, &[("count", labels.len() as f64)]))?;
    Ok(LabeledDataset { dataset, labels })
}

/// First `count` samples of an IDX image/label pair, pixels scaled to `[0, 1]`.
pub fn mnist_dataset(image_bytes: &[u8], label_bytes: &[u8], count: usize) -> Result<LabeledDataset> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if images.rows * images.cols != MNIST_PIXELS {
        return Err(Error::Ingestion {
            offset: 8,
            detail: format!("images are {}x{}, expected 28x28", images.rows, images.cols),
        });
    }
    let available = images.count.min(labels.len());
    if count == 0 || count > available {
        return Err(Error::Config(format!("requested {count} samples, {available} available")));
    }
    let columns: Vec<Vec<f64>> = (0..count)
        .map(|i| images.pixels[i * MNIST_PIXELS..(i + 1) * MNIST_PIXELS].iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    labeled(&columns, labels[..count].to_vec(), "mnist", 0)
}

/// Block size of the coarse grid used by [`synthetic_digits`].
const SYNTH_BLOCK: usize = 7;
const SYNTH_GRID: usize = MNIST_SIDE / SYNTH_BLOCK;

/// Offline stand-in for MNIST: 28x28 images built from a 4x4 grid of 7x7
/// blocks. Each digit has a random block prototype; samples add Gaussian
/// jitter to the prototype and clip to `[0, 1]`. Labels cycle through 0..9.
///
/// Images live in a 16-dimensional subspace of pixel space, so the data
/// matrix is rank-deficient whenever there are more than 16 samples.
pub fn synthetic_digits(samples: usize, jitter: f64, seed: u64) -> Result<LabeledDataset> {
    if samples == 0 {
        return Err(Error::Config("synthetic_digits needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let prototypes: Vec<Vec<f64>> =
        (0..10).map(|_| (0..SYNTH_GRID * SYNTH_GRID).map(|_| unit.sample(&mut rng)).collect()).collect();
    let noise = Normal::new(0.0, jitter.max(0.0)).map_err(|_| Error::Config("invalid jitter".into()))?;
    let mut images = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for s in 0..samples {
        let digit = (s % 10) as u8;
        let coarse: Vec<f64> =
            prototypes[digit as usize].iter().map(|&p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        let mut img = vec![0.0; MNIST_PIXELS];
        for r in 0..MNIST_SIDE {
            for c in 0..MNIST_SIDE {
                img[r * MNIST_SIDE + c] = coarse[(r / SYNTH_BLOCK) * SYNTH_GRID + c / SYNTH_BLOCK];
            }
        }
        images.push(img);
        labels.push(digit);
    }
    labeled(&images, labels, "mnist_synthetic", seed)
}
