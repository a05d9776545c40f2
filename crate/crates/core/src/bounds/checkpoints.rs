use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer indices whose live outputs serve as intermediate projection
/// targets.
///
/// Index `t` (from `2..=K`) names the target `Y*_t`, the network's output
/// after layer `t - 1`. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointSet(Vec<usize>);

impl CheckpointSet {
    pub fn new(indices: Vec<usize>, depth: usize) -> Result<Self> {
        if indices.len() > depth.saturating_sub(1) {
            return Err(Error::Config(format!(
                "{} checkpoints for a {depth}-layer network (max {})",
                indices.len(),
                depth.saturating_sub(1)
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(format!("checkpoints must be strictly increasing: {indices:?}")));
            }
        }
        if let Some(&bad) = indices.iter().find(|&&t| t < 2 || t > depth) {
            return Err(Error::Config(format!("checkpoint {bad} outside 2..={depth}")));
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Target index for layer `j` (1-based): the smallest checkpoint
    /// strictly after `j`, or `depth + 1` meaning the final target `Y`.
    pub fn target_for_layer(&self, layer: usize, depth: usize) -> usize {
        self.0.iter().copied().find(|&t| t > layer).unwrap_or(depth + 1)
    }

    /// Target index for every layer `1..=depth`.
    pub fn target_schedule(&self, depth: usize) -> Vec<usize> {
        (1..=depth).map(|j| self.target_for_layer(j, depth)).collect()
    }
}

impl fmt::Display for CheckpointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

/// All `k`-element subsets of `2..=depth` in lexicographic order.
pub fn combinations(depth: usize, k: usize) -> Vec<CheckpointSet> {
    let pool: Vec<usize> = (2..=depth).collect();
    let n = pool.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        out.push(CheckpointSet::empty());
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(CheckpointSet(idx.iter().map(|&i| pool[i]).collect()));
        // advance to the next combination
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}
