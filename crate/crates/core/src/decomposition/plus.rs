//! FastTuckerPlus: every mode updated at once from batches drawn anywhere in
//! the tensor.
//!
//! The factor phase writes each batch's rows back immediately. The core phase
//! only accumulates `E(n)^T D(n)` and applies one averaged step per epoch.

use crate::error::{invalid, Result};
use crate::evaluation::{CostCounters, PhaseTally};
use crate::model::{Hyperparams, Model};
use crate::tensor_store::{EpochPlan, SparseTensor};
use crate::tile::{matmul_transposed_acc, TiledMatrix};

use super::cache::CCache;
use super::run_workers;
use super::shared::SharedModel;
use super::workspace::Workspace;

/// Per-mode core gradient sums over one epoch.
#[derive(Debug, Clone)]
pub struct CoreGradAccumulator {
    grads: Vec<TiledMatrix>,
    count: u64,
}

impl CoreGradAccumulator {
    pub fn new(ranks: &[usize], rank: usize) -> Self {
        Self {
            grads: ranks.iter().map(|&j| TiledMatrix::zeros(j, rank)).collect(),
            count: 0,
        }
    }

    pub fn reset(&mut self) {
        for g in &mut self.grads {
            g.fill_zero();
        }
        self.count = 0;
    }

    /// Entries that contributed.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// `Grad(B(n))`, row-major `J_n x R`.
    pub fn grad(&self, n: usize) -> Vec<f32> {
        self.grads[n].to_row_major()
    }

    pub fn merge(&mut self, other: &CoreGradAccumulator) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    a.set(i, j, a.get(i, j) + b.get(i, j));
                }
            }
        }
        self.count += other.count;
    }
}

fn stage_batch(s: &SharedModel, ws: &mut Workspace, t: &SparseTensor, batch: &[u32]) {
    ws.load_batch(t, batch);
    for n in 0..s.order() {
        ws.stage_core(s, n);
        ws.cost.reads += (s.ranks()[n] * s.rank()) as u64;
        ws.stage_rows(s, n);
    }
}

/// One factor step on `batch`; see [`update_factors_in_order`].
pub fn update_factors(
    s: &SharedModel,
    ws: &mut Workspace,
    t: &SparseTensor,
    batch: &[u32],
    hyper: &Hyperparams,
) -> CostCounters {
    let order: Vec<usize> = (0..s.order()).collect();
    update_factors_in_order(s, ws, t, batch, hyper, &order)
}

/// `A(n) += lr_a ((X - X_hat) (*) (D(n) B(n)^T) - reg_a A(n))` for every
/// mode, with every gradient taken before any row is written. `write_order`
/// only decides which mode is written back first.
///
/// Rows are written back as increments, so a row that occurs twice in the
/// batch receives both steps.
pub fn update_factors_in_order(
    s: &SharedModel,
    ws: &mut Workspace,
    t: &SparseTensor,
    batch: &[u32],
    hyper: &Hyperparams,
    write_order: &[usize],
) -> CostCounters {
    stage_batch(s, ws, t, batch);
    ws.compute_c_and_d(false);
    for n in 0..s.order() {
        ws.compute_g(n);
    }
    ws.predict_from_factors(0);

    let m = ws.len();
    let (lr, reg) = (hyper.lr_a, hyper.reg_a);
    for &n in write_order {
        let j = s.ranks()[n];
        let mut delta = vec![0.0f32; j];
        for slot in 0..m {
            let r = ws.residuals()[slot];
            for (jj, d) in delta.iter_mut().enumerate() {
                *d = lr * (r * ws.g[n].get(slot, jj) - reg * ws.a[n].get(slot, jj));
            }
            s.add_factor_row(n, ws.row_indices(n)[slot] as usize, &delta);
        }
        ws.cost.update_writes += (m * j) as u64;
    }
    ws.cost
}

/// `Grad(B(n)) += ((X - X_hat) (*) A(n))^T D(n)` for every mode. With a
/// cache, `C(n)` rows are read from it instead of being formed.
pub fn accumulate_core_grads(
    s: &SharedModel,
    ws: &mut Workspace,
    t: &SparseTensor,
    batch: &[u32],
    cache: Option<&CCache>,
    acc: &mut CoreGradAccumulator,
) -> CostCounters {
    match cache {
        None => {
            stage_batch(s, ws, t, batch);
            ws.compute_c_and_d(false);
        }
        Some(cache) => {
            ws.load_batch(t, batch);
            for n in 0..s.order() {
                ws.stage_rows(s, n);
                ws.stage_c_rows(cache, n);
            }
            ws.compute_c_and_d(true);
        }
    }
    ws.predict_from_c(0);
    for n in 0..s.order() {
        ws.compute_e(n);
        matmul_transposed_acc(&ws.e[n], &ws.d[n], &mut acc.grads[n]);
        ws.cost.bdt_mults += (ws.len() * s.rank() * s.ranks()[n]) as u64;
    }
    acc.count += ws.len() as u64;
    ws.cost
}

/// `B(n) += lr_b (Grad(B(n)) / omega - reg_b B(n))` for every mode.
pub fn apply_core_update(
    model: &mut Model,
    acc: &CoreGradAccumulator,
    omega: usize,
    hyper: &Hyperparams,
) -> Result<()> {
    if omega == 0 {
        return Err(invalid("core update over an empty sample set"));
    }
    let scale = 1.0 / omega as f32;
    for n in 0..model.order() {
        let grad = acc.grad(n);
        for (b, g) in model.core_mut(n).iter_mut().zip(grad) {
            *b += hyper.lr_b * (g * scale - hyper.reg_b * *b);
        }
    }
    Ok(())
}

/// All factor batches of one epoch, Hogwild over `workers` threads.
pub(crate) fn factor_phase(
    s: &SharedModel,
    t: &SparseTensor,
    plan: &EpochPlan,
    hyper: &Hyperparams,
    workers: usize,
) -> PhaseTally {
    let states = run_workers(
        workers,
        plan.num_batches(),
        || (Workspace::new(s.ranks(), s.rank(), hyper.batch_size), PhaseTally::new(1)),
        |(ws, tally), b| {
            let batch = plan.batch(b);
            let cost = update_factors(s, ws, t, batch, hyper);
            tally.slots[0].record(batch.len(), batch.len() == hyper.batch_size, cost);
        },
    );
    let mut tally = PhaseTally::new(1);
    for (_, t) in &states {
        tally.merge(t);
    }
    tally
}

/// All core batches of one epoch into per-worker accumulators, reduced in
/// worker order.
pub(crate) fn core_phase(
    s: &SharedModel,
    t: &SparseTensor,
    plan: &EpochPlan,
    cache: Option<&CCache>,
    hyper: &Hyperparams,
    workers: usize,
) -> (CoreGradAccumulator, PhaseTally) {
    let states = run_workers(
        workers,
        plan.num_batches(),
        || {
            (
                Workspace::new(s.ranks(), s.rank(), hyper.batch_size),
                CoreGradAccumulator::new(s.ranks(), s.rank()),
                PhaseTally::new(1),
            )
        },
        |(ws, acc, tally), b| {
            let batch = plan.batch(b);
            let cost = accumulate_core_grads(s, ws, t, batch, cache, acc);
            tally.slots[0].record(batch.len(), batch.len() == hyper.batch_size, cost);
        },
    );
    let mut acc = CoreGradAccumulator::new(s.ranks(), s.rank());
    let mut tally = PhaseTally::new(1);
    for (_, a, t) in &states {
        acc.merge(a);
        tally.merge(t);
    }
    (acc, tally)
}
