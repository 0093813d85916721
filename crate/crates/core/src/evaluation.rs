//! Loss, error metrics and the logical cost model.

use std::ops::{Add, AddAssign};

use serde::Serialize;

use crate::decomposition::Variant;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor_store::SparseTensor;

/// Entries per evaluation chunk. Chunk sums are combined in chunk order, so
/// results do not depend on the number of threads.
const CHUNK: usize = 4096;

/// Prediction error over a set of entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

/// Dense `C(n) = A(n) B(n)` in double precision, for fast repeated prediction.
pub struct Predictor {
    rank: usize,
    c: Vec<Vec<f64>>,
}

impl Predictor {
    pub fn new(model: &Model) -> Self {
        let rank = model.rank();
        let c = (0..model.order())
            .map(|n| {
                let j = model.ranks()[n];
                let b = model.core(n);
                let mut out = vec![0.0f64; model.dims()[n] * rank];
                for (row, a) in out.chunks_exact_mut(rank).zip(model.factor(n).chunks_exact(j)) {
                    for (jj, &av) in a.iter().enumerate() {
                        let brow = &b[jj * rank..(jj + 1) * rank];
                        for (o, &bv) in row.iter_mut().zip(brow) {
                            *o += av as f64 * bv as f64;
                        }
                    }
                }
                out
            })
            .collect();
        Self { rank, c }
    }

    #[inline]
    pub fn predict(&self, idx: &[u32]) -> f64 {
        let r = self.rank;
        let mut sum = 0.0;
        for k in 0..r {
            let mut p = 1.0;
            for (n, &i) in idx.iter().enumerate() {
                p *= self.c[n][i as usize * r + k];
            }
            sum += p;
        }
        sum
    }
}

fn check_compatible(model: &Model, t: &SparseTensor) -> Result<()> {
    if model.order() != t.order() {
        return Err(Error::ShapeMismatch(format!(
            "model of order {} cannot score a tensor of order {}",
            model.order(),
            t.order()
        )));
    }
    for (n, (&d, &m)) in t.dims().iter().zip(model.dims()).enumerate() {
        if d > m {
            return Err(Error::ShapeMismatch(format!(
                "tensor dimension {d} in mode {n} exceeds the model's {m}"
            )));
        }
    }
    Ok(())
}

/// Sums `f(residual)` over all entries, chunked and reduced in a fixed order.
fn residual_sums<const K: usize>(
    model: &Model,
    t: &SparseTensor,
    f: impl Fn(f64) -> [f64; K] + Sync,
) -> [f64; K] {
    let pred = Predictor::new(model);
    let chunks = t.nnz().div_ceil(CHUNK);
    let chunk_sum = |c: usize| {
        let mut acc = [0.0; K];
        for e in c * CHUNK..((c + 1) * CHUNK).min(t.nnz()) {
            let r = t.value(e) as f64 - pred.predict(t.index(e));
            for (a, v) in acc.iter_mut().zip(f(r)) {
                *a += v;
            }
        }
        acc
    };
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(chunks.max(1));
    let mut partial = vec![[0.0; K]; chunks];
    if threads <= 1 {
        for (c, p) in partial.iter_mut().enumerate() {
            *p = chunk_sum(c);
        }
    } else {
        std::thread::scope(|s| {
            for (w, part) in partial.chunks_mut(chunks.div_ceil(threads)).enumerate() {
                let base = w * chunks.div_ceil(threads);
                let chunk_sum = &chunk_sum;
                s.spawn(move || {
                    for (k, p) in part.iter_mut().enumerate() {
                        *p = chunk_sum(base + k);
                    }
                });
            }
        });
    }
    let mut total = [0.0; K];
    for p in &partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// `sum (x - x_hat)^2 + reg_a sum_n ||A(n)||^2 + reg_b sum_n ||B(n)||^2`.
pub fn loss(model: &Model, t: &SparseTensor, reg_a: f64, reg_b: f64) -> Result<f64> {
    check_compatible(model, t)?;
    let [sq] = residual_sums(model, t, |r| [r * r]);
    let (na, nb) = model.squared_norms();
    Ok(sq + reg_a * na + reg_b * nb)
}

/// RMSE and MAE of `model` on `t`.
pub fn evaluate(model: &Model, t: &SparseTensor) -> Result<Metrics> {
    if t.is_empty() {
        return Err(Error::EmptyTensor);
    }
    check_compatible(model, t)?;
    let [sq, abs] = residual_sums(model, t, |r| [r * r, r.abs()]);
    let n = t.nnz() as f64;
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        count: t.nnz(),
    })
}

pub fn rmse(model: &Model, t: &SparseTensor) -> Result<f64> {
    evaluate(model, t).map(|m| m.rmse)
}

pub fn mae(model: &Model, t: &SparseTensor) -> Result<f64> {
    evaluate(model, t).map(|m| m.mae)
}

/// Logical parameter loads and multiplications, by pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CostCounters {
    /// Parameters read from the model or the `C` cache.
    pub reads: u64,
    /// Multiplications spent forming `C` rows and the `D` products.
    pub d_stage_mults: u64,
    /// Multiplications of `B D^T` (factor phase) or of the core gradient
    /// contraction (core phase).
    pub bdt_mults: u64,
    /// Parameters written back.
    pub update_writes: u64,
}

impl CostCounters {
    pub fn mults(&self) -> u64 {
        self.d_stage_mults + self.bdt_mults
    }

    fn scaled(self, k: u64) -> Self {
        Self {
            reads: self.reads * k,
            d_stage_mults: self.d_stage_mults * k,
            bdt_mults: self.bdt_mults * k,
            update_writes: self.update_writes * k,
        }
    }

    fn sub(self, o: Self) -> Self {
        Self {
            reads: self.reads - o.reads,
            d_stage_mults: self.d_stage_mults - o.d_stage_mults,
            bdt_mults: self.bdt_mults - o.bdt_mults,
            update_writes: self.update_writes - o.update_writes,
        }
    }

    fn div_exact(self, k: u64) -> Option<Self> {
        let d = |v: u64| (v % k == 0).then_some(v / k);
        Some(Self {
            reads: d(self.reads)?,
            d_stage_mults: d(self.d_stage_mults)?,
            bdt_mults: d(self.bdt_mults)?,
            update_writes: d(self.update_writes)?,
        })
    }
}

impl Add for CostCounters {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.reads += o.reads;
        self.d_stage_mults += o.d_stage_mults;
        self.bdt_mults += o.bdt_mults;
        self.update_writes += o.update_writes;
    }
}

/// The two halves of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Factor,
    Core,
}

/// Counters of one batch slot: a mode for the block-convex variants, the
/// whole tensor for the simultaneous one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SlotTally {
    pub batches: u64,
    pub full_batches: u64,
    pub rows: u64,
    pub all: CostCounters,
    /// Counters of full batches only.
    pub full: CostCounters,
}

impl SlotTally {
    pub(crate) fn record(&mut self, rows: usize, full: bool, c: CostCounters) {
        self.batches += 1;
        self.rows += rows as u64;
        self.all += c;
        if full {
            self.full_batches += 1;
            self.full += c;
        }
    }

    fn merge(&mut self, o: &SlotTally) {
        self.batches += o.batches;
        self.full_batches += o.full_batches;
        self.rows += o.rows;
        self.all += o.all;
        self.full += o.full;
    }
}

/// Per-slot counters of one phase of one epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhaseTally {
    pub slots: Vec<SlotTally>,
}

impl PhaseTally {
    pub fn new(slots: usize) -> Self {
        Self {
            slots: vec![SlotTally::default(); slots],
        }
    }

    pub fn merge(&mut self, o: &PhaseTally) {
        if self.slots.len() < o.slots.len() {
            self.slots.resize(o.slots.len(), SlotTally::default());
        }
        for (a, b) in self.slots.iter_mut().zip(&o.slots) {
            a.merge(b);
        }
    }

    pub fn totals(&self) -> CostCounters {
        self.slots.iter().fold(CostCounters::default(), |acc, s| acc + s.all)
    }

    /// Sum over slots of the average full-batch cost. `None` if some slot
    /// saw no full batch or a slot's average is not integral.
    pub fn per_full_batch(&self) -> Option<CostCounters> {
        let mut out = CostCounters::default();
        for s in &self.slots {
            if s.full_batches == 0 {
                return None;
            }
            out += s.full.div_exact(s.full_batches)?;
        }
        Some(out)
    }
}

/// Cost of one batch of `m` rows in slot `mode` (ignored by [`Variant::Plus`]).
///
/// `store_c` only affects the core phase of [`Variant::Plus`], where `C` rows
/// are read from a precomputed table instead of being formed from `A` and `B`.
pub fn batch_costs(
    variant: Variant,
    phase: Phase,
    store_c: bool,
    mode: usize,
    m: usize,
    rank: usize,
    ranks: &[usize],
) -> CostCounters {
    let (m, r) = (m as u64, rank as u64);
    let n_modes = ranks.len() as u64;
    let sum_j: u64 = ranks.iter().map(|&j| j as u64).sum();
    let jn = ranks.get(mode).copied().unwrap_or(0) as u64;
    let others = sum_j - jn;
    let hadamards = n_modes.saturating_sub(2);
    match (variant, phase) {
        (Variant::Plus, Phase::Factor) => CostCounters {
            reads: (m + r) * sum_j,
            d_stage_mults: m * r * (sum_j + n_modes * hadamards),
            bdt_mults: m * r * sum_j,
            update_writes: m * sum_j,
        },
        (Variant::Plus, Phase::Core) if store_c => CostCounters {
            reads: m * (sum_j + n_modes * r),
            d_stage_mults: m * r * n_modes * hadamards,
            bdt_mults: m * r * sum_j,
            update_writes: 0,
        },
        (Variant::Plus, Phase::Core) => CostCounters {
            reads: (m + r) * sum_j,
            d_stage_mults: m * r * (sum_j + n_modes * hadamards),
            bdt_mults: m * r * sum_j,
            update_writes: 0,
        },
        (Variant::FastTucker, phase) => CostCounters {
            reads: jn + m * others + r * jn,
            d_stage_mults: m * r * (others + hadamards),
            bdt_mults: match phase {
                Phase::Factor => m * r * jn,
                Phase::Core => r * jn + m * r * jn,
            },
            update_writes: match phase {
                Phase::Factor => jn,
                Phase::Core => r * jn,
            },
        },
        (Variant::FasterTucker, phase) => CostCounters {
            reads: m * jn + (n_modes - 1) * r + r * jn,
            d_stage_mults: hadamards * r,
            bdt_mults: match phase {
                Phase::Factor => r * jn,
                Phase::Core => 2 * r * jn,
            },
            update_writes: match phase {
                Phase::Factor => m * jn,
                Phase::Core => r * jn,
            },
        },
    }
}

/// Number of batch slots per phase: one per mode, or one for [`Variant::Plus`].
pub fn num_slots(variant: Variant, order: usize) -> usize {
    match variant {
        Variant::Plus => 1,
        _ => order,
    }
}

/// Predicted cost of one full batch of `batch` rows in every slot, summed
/// over slots ("total for all n").
pub fn predicted_costs(
    variant: Variant,
    phase: Phase,
    store_c: bool,
    batch: usize,
    rank: usize,
    ranks: &[usize],
) -> CostCounters {
    (0..num_slots(variant, ranks.len()))
        .map(|n| batch_costs(variant, phase, store_c, n, batch, rank, ranks))
        .fold(CostCounters::default(), Add::add)
}

/// Predicted totals for exactly the batches recorded in `tally`. Costs are
/// affine in the row count, so only the batch and row counts matter.
pub fn expected_totals(
    tally: &PhaseTally,
    variant: Variant,
    phase: Phase,
    store_c: bool,
    rank: usize,
    ranks: &[usize],
) -> CostCounters {
    let mut out = CostCounters::default();
    for (n, s) in tally.slots.iter().enumerate() {
        let base = batch_costs(variant, phase, store_c, n, 0, rank, ranks);
        let per_row = batch_costs(variant, phase, store_c, n, 1, rank, ranks).sub(base);
        out += base.scaled(s.batches) + per_row.scaled(s.rows);
    }
    out
}

/// Measured per-full-batch counters of one phase, summed over slots.
pub fn measured_costs(stats: &crate::decomposition::EpochStats, phase: Phase) -> Option<CostCounters> {
    match phase {
        Phase::Factor => stats.factor_costs.per_full_batch(),
        Phase::Core => stats.core_costs.per_full_batch(),
    }
}
