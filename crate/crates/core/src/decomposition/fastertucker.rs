//! FasterTucker: block-convex updates over fibers. Every entry of a batch
//! shares all indices but the mode-`n` one, so the whole batch uses a single
//! `d(n)` row built from cached `C(k)` rows.

use crate::evaluation::{CostCounters, PhaseTally};
use crate::model::Hyperparams;
use crate::tensor_store::{sample_batches_mode, ModeIndex, SparseTensor};

use super::cache::CCache;
use super::shared::SharedModel;
use super::{phase_seed, run_workers};

/// Scratch space for one worker.
pub struct FiberScratch {
    d: Vec<f32>,
    g: Vec<f32>,
    a: Vec<f32>,
    b: Vec<f32>,
    w: Vec<f32>,
    delta: Vec<f32>,
}

impl FiberScratch {
    pub fn new(ranks: &[usize], rank: usize) -> Self {
        let jmax = ranks.iter().copied().max().unwrap_or(0);
        Self {
            d: vec![0.0; rank],
            g: vec![0.0; jmax],
            a: vec![0.0; jmax],
            b: vec![0.0; jmax * rank],
            w: vec![0.0; jmax],
            delta: vec![0.0; jmax * rank],
        }
    }
}

/// Builds `d = prod_{k != n} C(k)[i_k,:]` and `g = B(n) d^T`; charges the
/// cache and core reads.
fn fiber_context(
    s: &SharedModel,
    cache: &CCache,
    t: &SparseTensor,
    n: usize,
    first: usize,
    sc: &mut FiberScratch,
    cost: &mut CostCounters,
) {
    let (rank, j) = (s.rank(), s.ranks()[n]);
    let idx = t.index(first);
    let mut started = false;
    for k in (0..s.order()).filter(|&k| k != n) {
        let c = cache.row(k, idx[k] as usize);
        if started {
            for (d, &cv) in sc.d.iter_mut().zip(c) {
                *d *= cv;
            }
            cost.d_stage_mults += rank as u64;
        } else {
            sc.d.copy_from_slice(c);
            started = true;
        }
        cost.reads += rank as u64;
    }
    s.read_core(n, &mut sc.b[..j * rank]);
    cost.reads += (j * rank) as u64;
    for jj in 0..j {
        let brow = &sc.b[jj * rank..(jj + 1) * rank];
        sc.g[jj] = brow.iter().zip(&sc.d).map(|(b, d)| b * d).sum();
    }
    cost.bdt_mults += (j * rank) as u64;
}

/// `a_m += lr_a / m ((x_m - a_m g) g - reg_a a_m)` for every row of the
/// fiber batch, `g = B(n) d^T`.
pub fn factor_step(
    s: &SharedModel,
    cache: &CCache,
    t: &SparseTensor,
    n: usize,
    batch: &[u32],
    hyper: &Hyperparams,
    sc: &mut FiberScratch,
) -> CostCounters {
    let mut cost = CostCounters::default();
    fiber_context(s, cache, t, n, batch[0] as usize, sc, &mut cost);
    let j = s.ranks()[n];
    let step = hyper.lr_a / batch.len() as f32;
    for &p in batch {
        let i = t.index(p as usize)[n] as usize;
        let a = &mut sc.a[..j];
        s.read_factor_row(n, i, a);
        let xhat: f32 = a.iter().zip(&sc.g).map(|(a, g)| a * g).sum();
        let r = t.value(p as usize) - xhat;
        for jj in 0..j {
            sc.delta[jj] = step * (r * sc.g[jj] - hyper.reg_a * a[jj]);
        }
        s.add_factor_row(n, i, &sc.delta[..j]);
        cost.reads += j as u64;
        cost.update_writes += j as u64;
    }
    cost
}

/// `B(n) += lr_b ((A^T (x - A g)) d / m - reg_b B(n))` over the fiber batch,
/// applied at once.
pub fn core_step(
    s: &SharedModel,
    cache: &CCache,
    t: &SparseTensor,
    n: usize,
    batch: &[u32],
    hyper: &Hyperparams,
    sc: &mut FiberScratch,
) -> CostCounters {
    let mut cost = CostCounters::default();
    fiber_context(s, cache, t, n, batch[0] as usize, sc, &mut cost);
    let (j, rank) = (s.ranks()[n], s.rank());
    sc.w[..j].fill(0.0);
    for &p in batch {
        let i = t.index(p as usize)[n] as usize;
        let a = &mut sc.a[..j];
        s.read_factor_row(n, i, a);
        let xhat: f32 = a.iter().zip(&sc.g).map(|(a, g)| a * g).sum();
        let r = t.value(p as usize) - xhat;
        for (w, &av) in sc.w.iter_mut().zip(a.iter()) {
            *w += r * av;
        }
        cost.reads += j as u64;
    }
    let inv_m = 1.0 / batch.len() as f32;
    for jj in 0..j {
        for r in 0..rank {
            let b = sc.b[jj * rank + r];
            sc.delta[jj * rank + r] = hyper.lr_b * (sc.w[jj] * sc.d[r] * inv_m - hyper.reg_b * b);
        }
    }
    cost.bdt_mults += (j * rank) as u64;
    s.add_core(n, &sc.delta[..j * rank]);
    cost.update_writes += (j * rank) as u64;
    cost
}

/// One phase: for each mode, all fiber batches against a cache in which only
/// mode `n` is stale, then a refresh of mode `n`. Returns the tally and the
/// refresh multiplications.
#[allow(clippy::too_many_arguments)]
pub(crate) fn phase(
    s: &SharedModel,
    cache: &mut CCache,
    t: &SparseTensor,
    indices: &[ModeIndex],
    hyper: &Hyperparams,
    workers: usize,
    seed: u64,
    core: bool,
) -> crate::Result<(PhaseTally, u64)> {
    let mut tally = PhaseTally::new(s.order());
    let mut refresh_mults = 0;
    for n in 0..s.order() {
        let plan = sample_batches_mode(t, &indices[n], hyper.batch_size, phase_seed(seed, n))?;
        cache.mark_stale(n);
        let cache_ref = &*cache;
        let states = run_workers(
            workers,
            plan.num_batches(),
            || (FiberScratch::new(s.ranks(), s.rank()), PhaseTally::new(s.order())),
            |(sc, tally), b| {
                let batch = plan.batch(b);
                let cost = if core {
                    core_step(s, cache_ref, t, n, batch, hyper, sc)
                } else {
                    factor_step(s, cache_ref, t, n, batch, hyper, sc)
                };
                tally.slots[n].record(batch.len(), batch.len() == hyper.batch_size, cost);
            },
        );
        for (_, t) in &states {
            tally.merge(t);
        }
        refresh_mults += cache.refresh(s, n);
    }
    Ok((tally, refresh_mults))
}
