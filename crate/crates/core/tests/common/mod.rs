#![allow(dead_code)]

use fasttucker::decomposition::rules;
use fasttucker::synthgen::{generate_uniform, SynthKind, SynthSpec};
use fasttucker::{Hyperparams, Model, SparseTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A model copied to `f64`, for the scalar reference rules.
pub struct Wide {
    pub rank: usize,
    pub ranks: Vec<usize>,
    pub factors: Vec<Vec<f64>>,
    pub cores: Vec<Vec<f64>>,
}

impl Wide {
    pub fn of(model: &Model) -> Self {
        let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        Self {
            rank: model.rank(),
            ranks: model.ranks().to_vec(),
            factors: (0..model.order()).map(|n| widen(model.factor(n))).collect(),
            cores: (0..model.order()).map(|n| widen(model.core(n))).collect(),
        }
    }

    pub fn row(&self, n: usize, i: usize) -> &[f64] {
        let j = self.ranks[n];
        &self.factors[n][i * j..(i + 1) * j]
    }

    pub fn rows(&self, idx: &[u32]) -> Vec<&[f64]> {
        idx.iter().enumerate().map(|(n, &i)| self.row(n, i as usize)).collect()
    }

    pub fn cores(&self) -> Vec<&[f64]> {
        self.cores.iter().map(Vec::as_slice).collect()
    }
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

pub fn uniform_tensor(dims: &[usize], nnz: usize, seed: u64) -> SparseTensor {
    generate_uniform(&SynthSpec {
        dims: dims.to_vec(),
        nnz,
        kind: SynthKind::Uniform { min: 1.0, max: 5.0 },
        seed,
    })
    .unwrap()
}

/// Entries on full axis lines through a few random base points, so that
/// every mode has both large index buckets and complete fibers.
pub fn crosses(dims: &[usize], bases: usize, seed: u64) -> SparseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = std::collections::BTreeSet::new();
    for _ in 0..bases {
        let base: Vec<u32> = dims.iter().map(|&d| rng.random_range(0..d as u32)).collect();
        for (n, &d) in dims.iter().enumerate() {
            for i in 0..d as u32 {
                let mut idx = base.clone();
                idx[n] = i;
                cells.insert(idx);
            }
        }
    }
    let entries: Vec<(Vec<u32>, f32)> = cells
        .into_iter()
        .map(|idx| (idx, rng.random_range(1.0..5.0)))
        .collect();
    SparseTensor::from_entries(dims.to_vec(), entries).unwrap()
}

/// A model whose predictions are of order one.
pub fn unit_model(dims: &[usize], ranks: &[usize], rank: usize, seed: u64) -> Model {
    let scale = fasttucker::synthgen::planted_scale(ranks, rank) * 1.2;
    Model::init(dims, ranks, rank, seed, scale).unwrap()
}

/// Per-mode factor matrices after adding each sample's scalar step.
pub fn scalar_factor_steps(
    t: &SparseTensor,
    batch: &[u32],
    w: &Wide,
    h: &Hyperparams,
    modes: &[usize],
    scale: f64,
) -> Vec<Vec<f64>> {
    let mut out = w.factors.clone();
    for &p in batch {
        let idx = t.index(p as usize);
        let rows = w.rows(idx);
        let next = rules::factor_update_all(&rows, &w.cores(), w.rank, t.value(p as usize) as f64, h.lr_a as f64, h.reg_a as f64);
        for &n in modes {
            let j = w.ranks[n];
            let i = idx[n] as usize;
            for jj in 0..j {
                out[n][i * j + jj] += (next[n][jj] - rows[n][jj]) * scale;
            }
        }
    }
    out
}

/// Per-mode core matrices after the mean of each sample's scalar step.
pub fn scalar_core_mean(t: &SparseTensor, batch: &[u32], w: &Wide, h: &Hyperparams) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = w.cores.iter().map(|c| vec![0.0; c.len()]).collect();
    for &p in batch {
        let idx = t.index(p as usize);
        let next = rules::core_update_all(&w.rows(idx), &w.cores(), w.rank, t.value(p as usize) as f64, h.lr_b as f64, h.reg_b as f64);
        for (o, nx) in out.iter_mut().zip(next) {
            for (a, b) in o.iter_mut().zip(nx) {
                *a += b / batch.len() as f64;
            }
        }
    }
    out
}
