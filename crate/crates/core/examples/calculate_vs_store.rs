//! Rebuilding the products of factor rows and core matrices per batch versus
//! reading them from a cache computed once per core epoch.

use anyhow::Result;
use fasttucker::model::default_init_scale;
use fasttucker::synthgen::{generate_planted, SynthSpec};
use fasttucker::tensor_store::split_train_test;
use fasttucker::{train, Hyperparams, Model, TrainOptions};

fn main() -> Result<()> {
    let (t, _) = generate_planted(&SynthSpec::planted(3, 500, 50_000, 16, 16, 0.01, 3))?;
    let (train_t, test_t) = split_train_test(&t, 0.1, 8)?;
    let ranks = [16; 3];
    let hyper = Hyperparams { epochs: 20, ..Hyperparams::default() };

    for store_c in [false, true] {
        let mut model = Model::init(train_t.dims(), &ranks, 16, 1, default_init_scale(&train_t, &ranks, 16))?;
        let opts = TrainOptions { store_c, ..TrainOptions::default() };
        let h = train(&train_t, Some(&test_t), &mut model, &hyper, &opts)?;
        let last = h.last().unwrap();
        let core = last.core_costs.per_full_batch().unwrap_or_default();
        let core_s: f64 = h.epochs.iter().map(|e| e.core_seconds).sum();
        println!(
            "{:<9} rmse {:.5}  core phase {core_s:.2}s  per batch: {} reads, {} D-stage mults  precompute {}",
            if store_c { "store" } else { "calculate" },
            last.test_rmse.unwrap(),
            core.reads,
            core.d_stage_mults,
            last.precompute_mults
        );
    }
    Ok(())
}
