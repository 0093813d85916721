//! Trains the three algorithms on the same data and prints their test error
//! and time per epoch.
//!
//!     cargo run --release --example compare_variants -- [epochs]

use anyhow::Result;
use fasttucker::model::default_init_scale;
use fasttucker::synthgen::{generate_planted, SynthSpec};
use fasttucker::tensor_store::split_train_test;
use fasttucker::{train, Hyperparams, Model, TrainOptions, Variant};

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let (t, _) = generate_planted(&SynthSpec::planted(3, 500, 50_000, 16, 16, 0.01, 11))?;
    let (train_t, test_t) = split_train_test(&t, 0.1, 2)?;
    let ranks = [16; 3];
    let hyper = Hyperparams { epochs, ..Hyperparams::default() };

    println!("{:<13} {:>10} {:>10} {:>12}", "variant", "rmse", "mae", "s/epoch");
    for variant in Variant::ALL {
        let mut model = Model::init(train_t.dims(), &ranks, 16, 5, default_init_scale(&train_t, &ranks, 16))?;
        let opts = TrainOptions { variant, ..TrainOptions::default() };
        let h = train(&train_t, Some(&test_t), &mut model, &hyper, &opts)?;
        let last = h.last().expect("at least one epoch");
        let secs: f64 = h.epochs.iter().map(|e| e.seconds).sum::<f64>() / h.len() as f64;
        println!(
            "{:<13} {:>10.4} {:>10.4} {:>12.4}",
            variant.name(),
            last.test_rmse.unwrap(),
            last.test_mae.unwrap(),
            secs
        );
    }
    Ok(())
}
