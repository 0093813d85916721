//! Stored `C(n) = A(n) B(n)` for every mode.

use crate::model::Model;

use super::shared::SharedModel;

/// Full `I_n x R` products with per-mode freshness flags.
///
/// A mode goes stale while its factor or core is being updated and must be
/// refreshed before its rows are read again.
#[derive(Debug, Clone)]
pub struct CCache {
    rank: usize,
    c: Vec<Vec<f32>>,
    fresh: Vec<bool>,
}

fn product_rows(a: &[f32], b: &[f32], j: usize, rank: usize, out: &mut [f32]) {
    // Same accumulation order as the tile kernel, so cached rows match
    // freshly tiled ones bit for bit.
    for (crow, arow) in out.chunks_exact_mut(rank).zip(a.chunks_exact(j)) {
        crow.fill(0.0);
        for (jj, &av) in arow.iter().enumerate() {
            let brow = &b[jj * rank..(jj + 1) * rank];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}

impl CCache {
    pub fn from_model(model: &Model) -> Self {
        let rank = model.rank();
        let c = (0..model.order())
            .map(|n| {
                let mut out = vec![0.0; model.dims()[n] * rank];
                product_rows(model.factor(n), model.core(n), model.ranks()[n], rank, &mut out);
                out
            })
            .collect();
        Self {
            rank,
            c,
            fresh: vec![true; model.order()],
        }
    }

    /// Multiplications a full rebuild costs: `sum_n I_n J_n R`.
    pub fn build_mults(dims: &[usize], ranks: &[usize], rank: usize) -> u64 {
        dims.iter().zip(ranks).map(|(&i, &j)| (i * j * rank) as u64).sum()
    }

    /// Recomputes mode `n` from the shared model; returns the multiplications.
    pub fn refresh(&mut self, s: &SharedModel, n: usize) -> u64 {
        let (i, j, rank) = (s.dims()[n], s.ranks()[n], self.rank);
        let mut a = vec![0.0; i * j];
        for row in 0..i {
            s.read_factor_row(n, row, &mut a[row * j..(row + 1) * j]);
        }
        let mut b = vec![0.0; j * rank];
        s.read_core(n, &mut b);
        product_rows(&a, &b, j, rank, &mut self.c[n]);
        self.fresh[n] = true;
        (i * j * rank) as u64
    }

    pub fn mark_stale(&mut self, n: usize) {
        self.fresh[n] = false;
    }

    pub fn is_fresh(&self, n: usize) -> bool {
        self.fresh[n]
    }

    /// `C(n)[i,:]`. Reading a stale mode is a logic error.
    #[inline]
    pub fn row(&self, n: usize, i: usize) -> &[f32] {
        debug_assert!(self.fresh[n], "read of stale C cache for mode {n}");
        &self.c[n][i * self.rank..(i + 1) * self.rank]
    }
}
