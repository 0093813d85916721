//! Training: the three SGD schemes, their epoch drivers and [`train`].

pub mod cache;
pub mod fastertucker;
pub mod fasttucker;
pub mod plus;
pub mod rules;
pub mod shared;
pub mod workspace;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evaluation::{self, PhaseTally};
use crate::model::{Hyperparams, Model};
use crate::tensor_store::{sample_batches_global, Keying, ModeIndex, SparseTensor, MIN_ORDER};

pub use cache::CCache;
pub use plus::CoreGradAccumulator;
pub use shared::SharedModel;
pub use workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    FastTucker,
    FasterTucker,
    Plus,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::FastTucker, Variant::FasterTucker, Variant::Plus];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FastTucker => "fasttucker",
            Variant::FasterTucker => "fastertucker",
            Variant::Plus => "plus",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown variant {s:?} (expected fasttucker, fastertucker or plus)")))
    }
}

/// Everything about a run that is not a learning hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub variant: Variant,
    /// Precompute `C(n)` for the core phase instead of forming it per batch.
    /// Only meaningful for [`Variant::Plus`].
    pub store_c: bool,
    pub workers: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Plus,
            store_c: false,
            workers: 1,
            seed: 1,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(invalid("at least one worker is needed"));
        }
        if self.store_c && self.variant != Variant::Plus {
            return Err(invalid("storing C only applies to the plus variant"));
        }
        Ok(())
    }
}

/// Statistics of one epoch.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_rmse: Option<f64>,
    pub test_mae: Option<f64>,
    /// Wall time of both phases, evaluation excluded.
    pub seconds: f64,
    pub factor_seconds: f64,
    pub core_seconds: f64,
    pub factor_costs: PhaseTally,
    pub core_costs: PhaseTally,
    /// Multiplications spent building or refreshing stored `C` matrices.
    pub precompute_mults: u64,
}

impl EpochStats {
    pub fn reads(&self) -> u64 {
        self.factor_costs.totals().reads + self.core_costs.totals().reads
    }

    pub fn mults(&self) -> u64 {
        self.factor_costs.totals().mults() + self.core_costs.totals().mults() + self.precompute_mults
    }

    pub fn record(&self) -> HistoryRecord {
        HistoryRecord {
            epoch: self.epoch,
            train_loss: self.train_loss,
            test_rmse: self.test_rmse,
            test_mae: self.test_mae,
            seconds: self.seconds,
            reads: self.reads(),
            mults: self.mults(),
        }
    }
}

/// The serialized form of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_rmse: Option<f64>,
    pub test_mae: Option<f64>,
    pub seconds: f64,
    pub reads: u64,
    pub mults: u64,
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut out, &e.record()).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,test_rmse,test_mae,seconds,reads,mults")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            let r = e.record();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.test_rmse),
                opt(r.test_mae),
                r.seconds,
                r.reads,
                r.mults
            )?;
        }
        Ok(())
    }
}

/// splitmix64 finalizer over a combined word.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn phase_seed(seed: u64, part: usize) -> u64 {
    mix(seed, part as u64)
}

/// Runs `jobs` jobs on `workers` scoped threads, worker `w` taking jobs
/// `w, w + workers, ..`. Returns each worker's state in worker order.
pub(crate) fn run_workers<S: Send>(
    workers: usize,
    jobs: usize,
    init: impl Fn() -> S + Sync,
    body: impl Fn(&mut S, usize) + Sync,
) -> Vec<S> {
    let workers = workers.clamp(1, jobs.max(1));
    if workers == 1 {
        let mut s = init();
        for j in 0..jobs {
            body(&mut s, j);
        }
        return vec![s];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (init, body) = (&init, &body);
                scope.spawn(move || {
                    let mut s = init();
                    for j in (w..jobs).step_by(workers) {
                        body(&mut s, j);
                    }
                    s
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect()
    })
}

/// Runs epochs of one variant over a fixed training tensor.
pub struct Trainer<'t> {
    tensor: &'t SparseTensor,
    hyper: Hyperparams,
    opts: TrainOptions,
    indices: Vec<ModeIndex>,
}

impl<'t> Trainer<'t> {
    pub fn new(tensor: &'t SparseTensor, hyper: &Hyperparams, opts: &TrainOptions) -> Result<Self> {
        hyper.validate()?;
        opts.validate()?;
        if tensor.is_empty() {
            return Err(Error::EmptyTensor);
        }
        if tensor.order() < MIN_ORDER {
            return Err(invalid(format!(
                "training needs a tensor of order at least {MIN_ORDER}, got {}",
                tensor.order()
            )));
        }
        let keying = match opts.variant {
            Variant::FastTucker => Some(Keying::FixedMode),
            Variant::FasterTucker => Some(Keying::FixedComplement),
            Variant::Plus => None,
        };
        let indices = match keying {
            Some(k) => (0..tensor.order())
                .map(|n| ModeIndex::build(tensor, n, k))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            tensor,
            hyper: hyper.clone(),
            opts: opts.clone(),
            indices,
        })
    }

    fn check_model(&self, model: &Model) -> Result<()> {
        if model.order() != self.tensor.order() {
            return Err(Error::ShapeMismatch(format!(
                "model of order {} for a tensor of order {}",
                model.order(),
                self.tensor.order()
            )));
        }
        for (n, (&d, &m)) in self.tensor.dims().iter().zip(model.dims()).enumerate() {
            if d > m {
                return Err(Error::ShapeMismatch(format!(
                    "tensor dimension {d} in mode {n} exceeds the model's {m}"
                )));
            }
        }
        Ok(())
    }

    /// One epoch (factor phase, then core phase). Loss and test metrics are
    /// left at zero / `None`; [`train`] fills them in.
    pub fn epoch(&self, model: &mut Model, epoch: usize) -> Result<EpochStats> {
        self.check_model(model)?;
        let t = self.tensor;
        let (hyper, workers) = (&self.hyper, self.opts.workers);
        let epoch_seed = mix(self.opts.seed, epoch as u64);
        let (factor_seed, core_seed) = (mix(epoch_seed, 1), mix(epoch_seed, 2));
        let mut precompute_mults = 0;

        let start = Instant::now();
        let (factor_costs, core_costs, factor_seconds);
        match self.opts.variant {
            Variant::Plus => {
                let plan = sample_batches_global(t, hyper.batch_size, factor_seed)?;
                factor_costs = plus::factor_phase(&SharedModel::new(model), t, &plan, hyper, workers);
                factor_seconds = start.elapsed().as_secs_f64();

                let plan = sample_batches_global(t, hyper.batch_size, core_seed)?;
                let cache = self.opts.store_c.then(|| {
                    precompute_mults += CCache::build_mults(model.dims(), model.ranks(), model.rank());
                    CCache::from_model(model)
                });
                let (acc, tally) =
                    plus::core_phase(&SharedModel::new(model), t, &plan, cache.as_ref(), hyper, workers);
                plus::apply_core_update(model, &acc, t.nnz(), hyper)?;
                core_costs = tally;
            }
            Variant::FastTucker => {
                factor_costs = fasttucker::phase(
                    &SharedModel::new(model),
                    t,
                    &self.indices,
                    hyper,
                    workers,
                    factor_seed,
                    false,
                )?;
                factor_seconds = start.elapsed().as_secs_f64();
                core_costs =
                    fasttucker::phase(&SharedModel::new(model), t, &self.indices, hyper, workers, core_seed, true)?;
            }
            Variant::FasterTucker => {
                let mut cache = CCache::from_model(model);
                precompute_mults += CCache::build_mults(model.dims(), model.ranks(), model.rank());
                let shared = SharedModel::new(model);
                let (tally, refresh) = fastertucker::phase(
                    &shared,
                    &mut cache,
                    t,
                    &self.indices,
                    hyper,
                    workers,
                    factor_seed,
                    false,
                )?;
                factor_costs = tally;
                precompute_mults += refresh;
                factor_seconds = start.elapsed().as_secs_f64();
                let (tally, refresh) =
                    fastertucker::phase(&shared, &mut cache, t, &self.indices, hyper, workers, core_seed, true)?;
                core_costs = tally;
                precompute_mults += refresh;
            }
        }
        let seconds = start.elapsed().as_secs_f64();
        Ok(EpochStats {
            epoch,
            train_loss: 0.0,
            test_rmse: None,
            test_mae: None,
            seconds,
            factor_seconds,
            core_seconds: seconds - factor_seconds,
            factor_costs,
            core_costs,
            precompute_mults,
        })
    }
}

/// Trains `model` for `hyper.epochs` epochs, scoring after each one.
///
/// Fails with [`Error::Diverged`] as soon as the loss or a parameter stops
/// being finite.
pub fn train(
    train: &SparseTensor,
    test: Option<&SparseTensor>,
    model: &mut Model,
    hyper: &Hyperparams,
    opts: &TrainOptions,
) -> Result<History> {
    train_with(train, test, model, hyper, opts, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    train: &SparseTensor,
    test: Option<&SparseTensor>,
    model: &mut Model,
    hyper: &Hyperparams,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    let trainer = Trainer::new(train, hyper, opts)?;
    trainer.check_model(model)?;
    if let Some(test) = test {
        evaluation::evaluate(model, test)?;
    }
    let mut history = History::default();
    for epoch in 1..=hyper.epochs {
        let mut stats = trainer.epoch(model, epoch)?;
        if !model.is_finite() {
            return Err(Error::Diverged { epoch, what: "a model parameter" });
        }
        stats.train_loss = evaluation::loss(model, train, hyper.reg_a as f64, hyper.reg_b as f64)?;
        if !stats.train_loss.is_finite() {
            return Err(Error::Diverged { epoch, what: "the training loss" });
        }
        if let Some(test) = test {
            let m = evaluation::evaluate(model, test)?;
            stats.test_rmse = Some(m.rmse);
            stats.test_mae = Some(m.mae);
        }
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(history)
}
