//! Reads a COO text file (or writes a small synthetic one first), prints its
//! shape and splits it into train and test sets.
//!
//!     cargo run --example load_and_split -- [path.tns]

use anyhow::Result;
use fasttucker::synthgen::{generate_uniform, SynthSpec};
use fasttucker::tensor_store::{load_coo, sniff_order, split_train_test, write_coo};
use fasttucker::{Keying, ModeIndex};

fn main() -> Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = std::env::temp_dir().join("ftk_example.tns");
            write_coo(&p, &generate_uniform(&SynthSpec::uniform(3, 200, 20_000, 1))?)?;
            p
        }
    };
    let order = sniff_order(&path)?;
    let t = load_coo(&path, order)?;
    println!("{}: order {order}, dims {:?}, {} entries, mean {:.3}", path.display(), t.dims(), t.nnz(), t.mean());

    let (train, test) = split_train_test(&t, 0.1, 42)?;
    println!("train {} / test {}", train.nnz(), test.nnz());

    for n in 0..order {
        let rows = ModeIndex::build(&train, n, Keying::FixedMode)?;
        let fibers = ModeIndex::build(&train, n, Keying::FixedComplement)?;
        println!(
            "mode {n}: {} index buckets (largest {}), {} fibers (largest {})",
            rows.num_buckets(),
            rows.largest_bucket(),
            fibers.num_buckets(),
            fibers.largest_bucket()
        );
    }
    Ok(())
}
