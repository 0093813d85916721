//! Fits a tensor generated from a known low-rank model, then saves the result
//! and reloads it.
//!
//!     cargo run --release --example planted_recovery

use anyhow::Result;
use fasttucker::evaluation::evaluate;
use fasttucker::model::default_init_scale;
use fasttucker::synthgen::{generate_planted, SynthSpec};
use fasttucker::tensor_store::split_train_test;
use fasttucker::{train, Hyperparams, Model, TrainOptions};

fn main() -> Result<()> {
    let noise = 0.01;
    let (t, truth) = generate_planted(&SynthSpec::planted(3, 300, 30_000, 16, 16, noise, 7))?;
    let (train_t, test_t) = split_train_test(&t, 0.1, 1)?;
    println!("ground truth scores {:.4} on the test set (noise {noise})", evaluate(&truth, &test_t)?.rmse);

    let ranks = [16; 3];
    let mut model = Model::init(train_t.dims(), &ranks, 16, 3, default_init_scale(&train_t, &ranks, 16))?;
    let hyper = Hyperparams { epochs: 40, ..Hyperparams::default() };
    let history = train(&train_t, Some(&test_t), &mut model, &hyper, &TrainOptions::default())?;
    for e in history.epochs.iter().step_by(5) {
        println!("epoch {:>3}  loss {:>10.4}  test rmse {:.4}", e.epoch, e.train_loss, e.test_rmse.unwrap());
    }

    let path = std::env::temp_dir().join("ftk_planted.ftkp");
    model.save(&path)?;
    let back = Model::load(&path)?;
    println!("reloaded {} parameters, test rmse {:.4}", back.num_parameters(), evaluate(&back, &test_t)?.rmse);
    Ok(())
}
