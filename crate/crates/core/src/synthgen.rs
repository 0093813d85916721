//! Synthetic sparse tensors: uniform random values, or samples of a planted
//! low-rank model plus Gaussian noise.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::model::Model;
use crate::tensor_store::{SparseTensor, MIN_ORDER};

#[derive(Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Values uniform on `[min, max]`.
    Uniform { min: f32, max: f32 },
    /// Values of a random ground-truth model with `ranks`/`rank`, plus noise
    /// of standard deviation `noise`.
    Planted { ranks: Vec<usize>, rank: usize, noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    pub nnz: usize,
    pub kind: SynthKind,
    pub seed: u64,
}

impl SynthSpec {
    /// An `order`-way cube of side `dim` with values uniform on `[1, 5]`.
    pub fn uniform(order: usize, dim: usize, nnz: usize, seed: u64) -> Self {
        Self {
            dims: vec![dim; order],
            nnz,
            kind: SynthKind::Uniform { min: 1.0, max: 5.0 },
            seed,
        }
    }

    /// An `order`-way cube of side `dim` sampled from a planted model with
    /// uniform ranks `j` and Kruskal rank `r`.
    pub fn planted(order: usize, dim: usize, nnz: usize, j: usize, r: usize, noise: f64, seed: u64) -> Self {
        Self {
            dims: vec![dim; order],
            nnz,
            kind: SynthKind::Planted {
                ranks: vec![j; order],
                rank: r,
                noise,
            },
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.len() < MIN_ORDER {
            return Err(invalid(format!(
                "synthetic tensors need order at least {MIN_ORDER}, got {}",
                self.dims.len()
            )));
        }
        if self.dims.contains(&0) || self.dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(invalid("dimensions must be positive and fit in 32 bits"));
        }
        if self.nnz == 0 {
            return Err(invalid("nnz must be positive"));
        }
        if let Some(cells) = cell_count(&self.dims) {
            if self.nnz as u128 > cells {
                return Err(invalid(format!("nnz {} exceeds the {cells} cells of the tensor", self.nnz)));
            }
        }
        match &self.kind {
            SynthKind::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return Err(invalid(format!("bad value range [{min}, {max}]")));
                }
            }
            SynthKind::Planted { ranks, rank, noise } => {
                if ranks.len() != self.dims.len() {
                    return Err(invalid("one rank per mode is needed"));
                }
                if ranks.contains(&0) || *rank == 0 {
                    return Err(invalid("ranks must be positive"));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return Err(invalid(format!("noise must be non-negative, got {noise}")));
                }
            }
        }
        Ok(())
    }
}

fn cell_count(dims: &[usize]) -> Option<u128> {
    dims.iter().try_fold(1u128, |acc, &d| acc.checked_mul(d as u128))
}

fn tuple_hash(idx: &[u32]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &i in idx {
        h = (h ^ i as u64).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
        h ^= h >> 32;
    }
    h
}

/// `nnz` distinct index tuples, flattened entry-major.
fn sample_indices(dims: &[usize], nnz: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let order = dims.len();
    let mut out = Vec::with_capacity(nnz * order);
    let cells = cell_count(dims);
    // Enumerate when a large share of the cells is wanted; rejection would
    // spin on collisions there.
    if let Some(cells) = cells.filter(|&c| c <= 4 * nnz as u128) {
        for cell in index::sample(rng, cells as usize, nnz) {
            let mut rest = cell;
            let start = out.len();
            out.resize(start + order, 0);
            for n in (0..order).rev() {
                out[start + n] = (rest % dims[n]) as u32;
                rest /= dims[n];
            }
        }
        return out;
    }
    // Hash collisions between distinct tuples only cause a harmless redraw.
    let mut seen = HashSet::with_capacity(nnz);
    let mut idx = vec![0u32; order];
    while out.len() < nnz * order {
        for (i, &d) in idx.iter_mut().zip(dims) {
            *i = rng.random_range(0..d as u32);
        }
        if seen.insert(tuple_hash(&idx)) {
            out.extend_from_slice(&idx);
        }
    }
    out
}

/// Uniform values on distinct random cells.
pub fn generate_uniform(spec: &SynthSpec) -> Result<SparseTensor> {
    spec.validate()?;
    let SynthKind::Uniform { min, max } = spec.kind else {
        return Err(invalid("generate_uniform needs a uniform spec"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let indices = sample_indices(&spec.dims, spec.nnz, &mut rng);
    let values = (0..spec.nnz)
        .map(|_| if min == max { min } else { rng.random_range(min..=max) })
        .collect();
    SparseTensor::new(spec.dims.clone(), indices, values)
}

/// Entry scale of a planted model whose predictions average about one.
pub fn planted_scale(ranks: &[usize], rank: usize) -> f64 {
    let spread: f64 = ranks.iter().map(|&j| j as f64 / 4.0).product::<f64>() * rank as f64;
    (1.0 / spread).powf(1.0 / (2.0 * ranks.len() as f64))
}

/// Samples of a random ground-truth model, returned along with it.
pub fn generate_planted(spec: &SynthSpec) -> Result<(SparseTensor, Model)> {
    spec.validate()?;
    let SynthKind::Planted { ref ranks, rank, noise } = spec.kind else {
        return Err(invalid("generate_planted needs a planted spec"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = Model::init(&spec.dims, ranks, rank, rng.random(), planted_scale(ranks, rank))?;
    let indices = sample_indices(&spec.dims, spec.nnz, &mut rng);
    let normal = Normal::new(0.0, noise).map_err(|e| invalid(e.to_string()))?;
    let values = indices
        .chunks_exact(spec.dims.len())
        .map(|idx| {
            let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (truth.predict_unchecked(idx) + eps) as f32
        })
        .collect();
    Ok((SparseTensor::new(spec.dims.clone(), indices, values)?, truth))
}
