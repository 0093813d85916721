//! FastTucker: block-convex updates, one mode at a time, over batches that
//! share the mode-`n` index.

use crate::evaluation::{CostCounters, PhaseTally};
use crate::model::Hyperparams;
use crate::tensor_store::{sample_batches_mode, ModeIndex, SparseTensor};
use crate::tile::matmul_transposed_acc;

use super::shared::SharedModel;
use super::workspace::Workspace;
use super::{phase_seed, run_workers};

/// Stages the shared row `a(n)[i_n,:]`, the other modes' rows and cores, and
/// forms `D(n)`. Returns `i_n`.
fn stage_block(s: &SharedModel, ws: &mut Workspace, t: &SparseTensor, n: usize, batch: &[u32]) -> usize {
    ws.load_batch(t, batch);
    let i = ws.row_indices(n)[0] as usize;
    debug_assert!(ws.row_indices(n).iter().all(|&r| r as usize == i), "batch mixes mode-{n} indices");
    ws.stage_broadcast_row(s, n, i);
    for k in (0..s.order()).filter(|&k| k != n) {
        // B(k), k != n, is constant over the block and treated as resident.
        ws.stage_core(s, k);
        ws.stage_rows(s, k);
        ws.compute_c(k);
    }
    ws.stage_core(s, n);
    ws.cost.reads += (s.ranks()[n] * s.rank()) as u64;
    ws.compute_d_for(n);
    i
}

/// `a += lr_a (mean_m (x_m - a G_m) G_m - reg_a a)` with `G = D(n) B(n)^T`,
/// for the single row `a = a(n)[i_n,:]` every batch entry shares.
pub fn factor_step(
    s: &SharedModel,
    ws: &mut Workspace,
    t: &SparseTensor,
    n: usize,
    batch: &[u32],
    hyper: &Hyperparams,
) -> CostCounters {
    let i = stage_block(s, ws, t, n, batch);
    ws.compute_g(n);
    ws.predict_from_factors(n);

    let (m, j) = (ws.len(), s.ranks()[n]);
    let inv_m = 1.0 / m as f32;
    let mut delta = vec![0.0f32; j];
    for (jj, d) in delta.iter_mut().enumerate() {
        let mut sum = 0.0f32;
        for slot in 0..m {
            sum += ws.residuals()[slot] * ws.g[n].get(slot, jj);
        }
        *d = hyper.lr_a * (sum * inv_m - hyper.reg_a * ws.a[n].get(0, jj));
    }
    s.add_factor_row(n, i, &delta);
    ws.cost.update_writes += j as u64;
    ws.cost
}

/// `B(n) += lr_b (a^T (x - c D(n)^T) D(n) / m - reg_b B(n))` with
/// `c = a B(n)`, applied at once.
pub fn core_step(
    s: &SharedModel,
    ws: &mut Workspace,
    t: &SparseTensor,
    n: usize,
    batch: &[u32],
    hyper: &Hyperparams,
) -> CostCounters {
    stage_block(s, ws, t, n, batch);
    let (m, j, rank) = (ws.len(), s.ranks()[n], s.rank());

    let mut c = vec![0.0f32; rank];
    for jj in 0..j {
        let a = ws.a[n].get(0, jj);
        for (r, cv) in c.iter_mut().enumerate() {
            *cv += a * ws.b[n].get(jj, r);
        }
    }
    ws.cost.bdt_mults += (rank * j) as u64;
    ws.predict_from_row(n, &c);

    ws.compute_e(n);
    ws.core_scratch[n].fill_zero();
    matmul_transposed_acc(&ws.e[n], &ws.d[n], &mut ws.core_scratch[n]);
    ws.cost.bdt_mults += (m * rank * j) as u64;

    let inv_m = 1.0 / m as f32;
    let mut delta = vec![0.0f32; j * rank];
    for jj in 0..j {
        for r in 0..rank {
            delta[jj * rank + r] = hyper.lr_b
                * (ws.core_scratch[n].get(jj, r) * inv_m - hyper.reg_b * ws.b[n].get(jj, r));
        }
    }
    s.add_core(n, &delta);
    ws.cost.update_writes += (j * rank) as u64;
    ws.cost
}

/// One phase: modes in order, each a full pass over its shuffled buckets.
pub(crate) fn phase(
    s: &SharedModel,
    t: &SparseTensor,
    indices: &[ModeIndex],
    hyper: &Hyperparams,
    workers: usize,
    seed: u64,
    core: bool,
) -> crate::Result<PhaseTally> {
    let mut tally = PhaseTally::new(s.order());
    for n in 0..s.order() {
        let plan = sample_batches_mode(t, &indices[n], hyper.batch_size, phase_seed(seed, n))?;
        let states = run_workers(
            workers,
            plan.num_batches(),
            || (Workspace::new(s.ranks(), s.rank(), hyper.batch_size), PhaseTally::new(s.order())),
            |(ws, tally), b| {
                let batch = plan.batch(b);
                let cost = if core {
                    core_step(s, ws, t, n, batch, hyper)
                } else {
                    factor_step(s, ws, t, n, batch, hyper)
                };
                tally.slots[n].record(batch.len(), batch.len() == hyper.batch_size, cost);
            },
        );
        for (_, t) in &states {
            tally.merge(t);
        }
    }
    Ok(tally)
}
