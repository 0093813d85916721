//! Lock-free parallel training: the same problem with 1, 2, 4 and 8 workers.
//! One worker is bit-reproducible; more workers race on shared rows.

use anyhow::Result;
use fasttucker::model::default_init_scale;
use fasttucker::synthgen::{generate_planted, SynthSpec};
use fasttucker::tensor_store::split_train_test;
use fasttucker::{train, Hyperparams, Model, TrainOptions};

fn main() -> Result<()> {
    let (t, _) = generate_planted(&SynthSpec::planted(3, 400, 40_000, 16, 16, 0.01, 9))?;
    let (train_t, test_t) = split_train_test(&t, 0.1, 4)?;
    let ranks = [16; 3];
    let hyper = Hyperparams { epochs: 30, ..Hyperparams::default() };
    println!("available cores: {}", std::thread::available_parallelism().map_or(1, usize::from));

    for workers in [1, 2, 4, 8] {
        let mut model = Model::init(train_t.dims(), &ranks, 16, 1, default_init_scale(&train_t, &ranks, 16))?;
        let opts = TrainOptions { workers, ..TrainOptions::default() };
        let h = train(&train_t, Some(&test_t), &mut model, &hyper, &opts)?;
        let secs: f64 = h.epochs.iter().map(|e| e.seconds).sum();
        println!("{workers} workers: test rmse {:.5}, {secs:.2}s", h.last().unwrap().test_rmse.unwrap());
    }
    Ok(())
}
