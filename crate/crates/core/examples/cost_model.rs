//! Predicted memory reads and multiplications per full batch for each
//! algorithm as the tensor order grows, next to what one epoch measures.

use anyhow::Result;
use fasttucker::decomposition::Trainer;
use fasttucker::evaluation::{expected_totals, predicted_costs, Phase};
use fasttucker::model::default_init_scale;
use fasttucker::synthgen::{generate_uniform, SynthSpec};
use fasttucker::{Hyperparams, Model, TrainOptions, Variant};

fn main() -> Result<()> {
    let (m, r) = (16, 16);
    println!("{:>5} {:<13} {:>8} {:>10} {:>10} {:>8}", "order", "variant", "reads", "D-stage", "BD^T", "writes");
    for order in 3..=6 {
        let ranks = vec![16; order];
        for v in Variant::ALL {
            let c = predicted_costs(v, Phase::Factor, false, m, r, &ranks);
            println!(
                "{order:>5} {:<13} {:>8} {:>10} {:>10} {:>8}",
                v.name(),
                c.reads,
                c.d_stage_mults,
                c.bdt_mults,
                c.update_writes
            );
        }
    }

    // Counters are exact: one epoch's totals match the formulas for the
    // batches it actually ran, including the short ones.
    let t = generate_uniform(&SynthSpec::uniform(4, 60, 40_000, 3))?;
    let ranks = [16; 4];
    for v in Variant::ALL {
        let mut model = Model::init(t.dims(), &ranks, r, 1, default_init_scale(&t, &ranks, r))?;
        let opts = TrainOptions { variant: v, ..TrainOptions::default() };
        let stats = Trainer::new(&t, &Hyperparams::default(), &opts)?.epoch(&mut model, 1)?;
        let measured = stats.factor_costs.totals();
        let predicted = expected_totals(&stats.factor_costs, v, Phase::Factor, false, r, &ranks);
        println!("{:<13} epoch reads {} (predicted {})", v.name(), measured.reads, predicted.reads);
    }
    Ok(())
}
