//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL line
//! each, and exits non-zero if any failed.
//!
//! The optional real-data check runs only when `FTK_NETFLIX` names a
//! three-order COO file (`FTK_NETFLIX_TEST` may name a separate test file).
//! Pass criterion numbers as arguments to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use clap::Parser;
use common::{crosses, max_abs_diff, scalar_core_mean, scalar_factor_steps, unit_model, Wide};
use fasttucker::cli::{run as run_cli, Cli};
use fasttucker::decomposition::fastertucker::{self, FiberScratch};
use fasttucker::decomposition::{fasttucker as ft, plus, rules, CCache, CoreGradAccumulator, SharedModel, Trainer};
use fasttucker::decomposition::Workspace;
use fasttucker::evaluation::{Phase, PhaseTally};
use fasttucker::model::{default_init_scale, DenseTensor};
use fasttucker::synthgen::{generate_planted, generate_uniform, SynthSpec};
use fasttucker::tensor_store::{load_coo, sample_batches_global, sample_batches_mode, split_train_test, write_coo};
use fasttucker::{train, CostCounters, Hyperparams, Keying, Model, ModeIndex, SparseTensor, TrainOptions, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(u32, &str, u64, Check); 9] = [
        (1, "gradient oracle", 5, gradient_oracle),
        (2, "reconstruction oracle", 1, reconstruction_oracle),
        (3, "matrixized equals scalar", 5, matrixized_equals_scalar),
        (4, "counter conformance", 10, counter_conformance),
        (5, "convergence at desk scale", 120, desk_convergence),
        (6, "real-data reference", 3600, real_data),
        (7, "hogwild robustness", 180, hogwild_robustness),
        (8, "calculate vs store", 120, calculate_vs_store),
        (9, "order scaling", 120, order_scaling),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        if id == 6 && std::env::var_os("FTK_NETFLIX").is_none() {
            println!("SKIP criterion {id} ({name}): set FTK_NETFLIX to a three-order COO file to run it");
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed < Duration::from_secs(limit) {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {:.1}s, limit {limit}s", elapsed.as_secs_f64()))
            }
        });
        match result {
            Ok(detail) => println!("PASS criterion {id} ({name}, {:.2}s): {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}, {:.2}s): {detail}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1

/// Central-difference gradient of `f` over `params[range]`.
fn central_diff(params: &mut [f64], range: std::ops::Range<usize>, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    const H: f64 = 1e-6;
    range
        .map(|k| {
            let orig = params[k];
            params[k] = orig + H;
            let up = f(params);
            params[k] = orig - H;
            let down = f(params);
            params[k] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn rel_err(half: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = half.iter().zip(numeric).map(|(a, n)| (2.0 * a - n).powi(2)).sum::<f64>().sqrt();
    let scale = numeric.iter().map(|n| n * n).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn gradient_oracle() -> Result<String, String> {
    const ORDER: usize = 3;
    const J: usize = 2;
    const R: usize = 3;
    let row_off = |n: usize| n * J;
    let core_off = |n: usize| ORDER * J + n * J * R;
    let split = |p: &[f64]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            (0..ORDER).map(|n| p[row_off(n)..row_off(n) + J].to_vec()).collect(),
            (0..ORDER).map(|n| p[core_off(n)..core_off(n) + J * R].to_vec()).collect(),
        )
    };
    let with = |p: &[f64], g: &dyn Fn(&[&[f64]], &[&[f64]]) -> f64| {
        let (rows, cores) = split(p);
        let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let cores: Vec<&[f64]> = cores.iter().map(Vec::as_slice).collect();
        g(&rows, &cores)
    };
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p: Vec<f64> = (0..ORDER * J + ORDER * J * R).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: f64 = rng.random_range(-2.0..2.0);
        let (reg, lr) = (rng.random_range(0.0..0.5), 0.1);
        let (rows, cores) = split(&p);
        let rows_ref: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let cores_ref: Vec<&[f64]> = cores.iter().map(Vec::as_slice).collect();
        let next_a = rules::factor_update_all(&rows_ref, &cores_ref, R, x, lr, reg);
        let next_b = rules::core_update_all(&rows_ref, &cores_ref, R, x, lr, reg);
        for n in 0..ORDER {
            let checks: [(Vec<f64>, std::ops::Range<usize>, Box<dyn Fn(&[f64]) -> f64>); 4] = [
                (
                    rules::factor_gradient(&rows_ref, &cores_ref, R, x, n, reg),
                    row_off(n)..row_off(n) + J,
                    Box::new(move |q| with(q, &|r, c| rules::factor_objective(r, c, R, x, n, reg))),
                ),
                (
                    rules::core_gradient(&rows_ref, &cores_ref, R, x, n, reg),
                    core_off(n)..core_off(n) + J * R,
                    Box::new(move |q| with(q, &|r, c| rules::core_objective(r, c, R, x, n, reg))),
                ),
                (
                    rows[n].iter().zip(&next_a[n]).map(|(a, b)| (a - b) / lr).collect(),
                    row_off(n)..row_off(n) + J,
                    Box::new(move |q| with(q, &|r, c| rules::joint_factor_objective(r, c, R, x, reg))),
                ),
                (
                    cores[n].iter().zip(&next_b[n]).map(|(a, b)| (a - b) / lr).collect(),
                    core_off(n)..core_off(n) + J * R,
                    Box::new(move |q| with(q, &|r, c| rules::joint_core_objective(r, c, R, x, reg))),
                ),
            ];
            for (k, (analytic, range, f)) in checks.iter().enumerate() {
                let fd = central_diff(&mut p, range.clone(), f.as_ref());
                let e = rel_err(analytic, &fd);
                worst = worst.max(e);
                ensure(e <= 1e-5, || format!("instance {seed}, mode {n}, check {k}: relative error {e:e}"))?;
            }
        }
    }
    Ok(format!("50 instances x 3 modes x 4 rules, worst relative error {worst:.2e} (limit 1e-5)"))
}

// ---------------------------------------------------------------------------
// 2

fn reconstruction_oracle() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let model = Model::init(&[4, 4, 4], &[3, 2, 4], 5, seed, 0.9).map_err(|e| e.to_string())?;
        let mut full: DenseTensor = model.materialize_core().map_err(|e| e.to_string())?;
        for n in 0..3 {
            let a: Vec<f64> = model.factor(n).iter().map(|&v| v as f64).collect();
            full = full.mode_product(n, &a, 4).map_err(|e| e.to_string())?;
        }
        for i in 0..4u32 {
            for j in 0..4u32 {
                for k in 0..4u32 {
                    let want = full.get(&[i as usize, j as usize, k as usize]);
                    let got = model.predict(&[i, j, k]).map_err(|e| e.to_string())?;
                    let e = (got - want).abs();
                    worst = worst.max(e);
                    ensure(e <= 1e-10, || format!("model {seed}, cell ({i},{j},{k}): {got} vs {want}"))?;
                }
            }
        }
    }
    Ok(format!("10 models x 64 cells, worst abs error {worst:.2e} (limit 1e-10)"))
}

// ---------------------------------------------------------------------------
// 3

fn matrixized_equals_scalar() -> Result<String, String> {
    const DIMS: [usize; 3] = [9, 11, 7];
    const RANKS: [usize; 3] = [5, 17, 3];
    const RANK: usize = 18;
    let h = Hyperparams {
        lr_a: 0.05,
        lr_b: 0.05,
        reg_a: 0.01,
        reg_b: 0.02,
        epochs: 1,
        batch_size: 16,
    };
    let setup = |seed: u64| (crosses(&DIMS, 12, seed), unit_model(&DIMS, &RANKS, RANK, seed + 100));
    let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let mut worst = [0.0f64; 6];
    for seed in 0..20u64 {
        let (t, model) = setup(seed);
        let w = Wide::of(&model);
        let n = seed as usize % 3;

        // Simultaneous factor step.
        let batch = sample_batches_global(&t, 16, seed).unwrap().batch(0).to_vec();
        let want = scalar_factor_steps(&t, &batch, &w, &h, &[0, 1, 2], 1.0);
        let mut m = model.clone();
        let mut ws = Workspace::new(&RANKS, RANK, 16);
        plus::update_factors(&SharedModel::new(&mut m), &mut ws, &t, &batch, &h);
        worst[0] = (0..3).map(|k| max_abs_diff(m.factor(k), &want[k])).fold(worst[0], f64::max);

        // Simultaneous core step, one batch standing in for the epoch.
        let want = scalar_core_mean(&t, &batch, &w, &h);
        let mut m = model.clone();
        let mut acc = CoreGradAccumulator::new(&RANKS, RANK);
        plus::accumulate_core_grads(&SharedModel::new(&mut m), &mut ws, &t, &batch, None, &mut acc);
        plus::apply_core_update(&mut m, &acc, batch.len(), &h).map_err(|e| e.to_string())?;
        worst[1] = (0..3).map(|k| max_abs_diff(m.core(k), &want[k])).fold(worst[1], f64::max);

        // Row-block steps.
        let idx = ModeIndex::build(&t, n, Keying::FixedMode).unwrap();
        let plan = sample_batches_mode(&t, &idx, 16, seed).unwrap();
        let row_batch = plan.batches().find(|b| b.len() > 1).unwrap().to_vec();
        let batch = row_batch.clone();
        let want = scalar_factor_steps(&t, &batch, &w, &h, &[n], 1.0 / batch.len() as f64);
        let mut m = model.clone();
        ft::factor_step(&SharedModel::new(&mut m), &mut ws, &t, n, &batch, &h);
        worst[2] = worst[2].max(max_abs_diff(m.factor(n), &want[n]));
        let want = scalar_core_mean(&t, &batch, &w, &h);
        let mut m = model.clone();
        ft::core_step(&SharedModel::new(&mut m), &mut ws, &t, n, &batch, &h);
        worst[3] = worst[3].max(max_abs_diff(m.core(n), &want[n]));

        // Fiber steps.
        let idx = ModeIndex::build(&t, n, Keying::FixedComplement).unwrap();
        let plan = sample_batches_mode(&t, &idx, 16, seed).unwrap();
        let batch = plan.batches().find(|b| b.len() > 1).unwrap().to_vec();
        let cache = CCache::from_model(&model);
        let mut sc = FiberScratch::new(&RANKS, RANK);
        let want = scalar_factor_steps(&t, &batch, &w, &h, &[n], 1.0 / batch.len() as f64);
        let mut m = model.clone();
        fastertucker::factor_step(&SharedModel::new(&mut m), &cache, &t, n, &batch, &h, &mut sc);
        worst[4] = worst[4].max(max_abs_diff(m.factor(n), &want[n]));
        let want = scalar_core_mean(&t, &batch, &w, &h);
        let mut m = model.clone();
        fastertucker::core_step(&SharedModel::new(&mut m), &cache, &t, n, &batch, &h, &mut sc);
        worst[5] = worst[5].max(max_abs_diff(m.core(n), &want[n]));

        // Nothing outside the updated block moves.
        let mut m = model.clone();
        ft::factor_step(&SharedModel::new(&mut m), &mut ws, &t, n, &row_batch, &h);
        for k in (0..3).filter(|&k| k != n) {
            ensure(max_abs_diff(m.factor(k), &widen(model.factor(k))) == 0.0, || format!("mode {k} moved"))?;
        }
    }
    let names = ["plus factor", "plus core", "fasttucker factor", "fasttucker core", "fastertucker factor", "fastertucker core"];
    for (name, &e) in names.iter().zip(&worst) {
        ensure(e <= 1e-6, || format!("{name}: max abs error {e:e}"))?;
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Ok(format!("6 rules x 20 batches, worst abs error {max:.2e} (limit 1e-6)"))
}

// ---------------------------------------------------------------------------
// 4

/// Per-full-batch totals over all modes at `M = R = J = 16`, as tabulated.
fn table(variant: Variant, n: u64) -> CostCounters {
    let (m, r, j) = (16u64, 16u64, 16u64);
    let sum_j = n * j;
    match variant {
        Variant::FastTucker => CostCounters {
            reads: (m * n - m + r + 1) * sum_j,
            d_stage_mults: m * r * ((n - 1) * sum_j + n * (n - 2)),
            bdt_mults: m * r * sum_j,
            update_writes: sum_j,
        },
        Variant::FasterTucker => CostCounters {
            reads: (m + r) * sum_j + n * (n - 1) * r,
            d_stage_mults: n * (n - 2) * r,
            bdt_mults: r * sum_j,
            update_writes: m * sum_j,
        },
        Variant::Plus => CostCounters {
            reads: (m + r) * sum_j,
            d_stage_mults: m * r * (sum_j + n * (n - 2)),
            bdt_mults: m * r * sum_j,
            update_writes: m * sum_j,
        },
    }
}

fn counter_conformance() -> Result<String, String> {
    let mut n3 = Vec::new();
    for order in 3..=5usize {
        let dims = vec![16; order];
        let t = crosses(&dims, 3, order as u64);
        for v in Variant::ALL {
            let mut model = unit_model(&dims, &vec![16; order], 16, 5);
            let opts = TrainOptions {
                variant: v,
                ..TrainOptions::default()
            };
            let stats = Trainer::new(&t, &Hyperparams::default(), &opts)
                .and_then(|tr| tr.epoch(&mut model, 1))
                .map_err(|e| e.to_string())?;
            let want = table(v, order as u64);
            let factor = stats.factor_costs.per_full_batch().ok_or("no full factor batch")?;
            ensure(factor == want, || format!("{v} order {order} factor phase: {factor:?} vs {want:?}"))?;
            let core = stats.core_costs.per_full_batch().ok_or("no full core batch")?;
            ensure(core.reads == want.reads && core.d_stage_mults == want.d_stage_mults, || {
                format!("{v} order {order} core phase: {core:?} vs {want:?}")
            })?;
            if order == 3 {
                n3.push(format!("{v} {}", factor.reads));
            }
        }
    }
    let want = ["fasttucker 2352", "fastertucker 1632", "plus 1536"];
    ensure(n3 == want, || format!("order-3 reads {n3:?}, expected {want:?}"))?;
    Ok(format!("orders 3-5 exact; reads per batch at order 3: {}", n3.join(", ")))
}

// ---------------------------------------------------------------------------
// 5, 7, 8: shared planted problem

struct Planted {
    train: SparseTensor,
    test: SparseTensor,
}

fn planted() -> &'static Planted {
    static DATA: OnceLock<Planted> = OnceLock::new();
    DATA.get_or_init(|| {
        let (t, _) = generate_planted(&SynthSpec::planted(3, 1000, 100_000, 16, 16, 0.01, 2024)).unwrap();
        let (train, test) = split_train_test(&t, 0.1, 7).unwrap();
        Planted { train, test }
    })
}

const NOISE: f64 = 0.01;

fn fit(variant: Variant, store_c: bool, workers: usize, epochs: usize) -> Result<(Vec<f64>, Model), String> {
    let p = planted();
    let ranks = [16; 3];
    let mut model = Model::init(p.train.dims(), &ranks, 16, 1, default_init_scale(&p.train, &ranks, 16))
        .map_err(|e| e.to_string())?;
    let hyper = Hyperparams {
        epochs,
        ..Hyperparams::default()
    };
    let opts = TrainOptions {
        variant,
        store_c,
        workers,
        seed: 1,
    };
    let hist = train(&p.train, Some(&p.test), &mut model, &hyper, &opts).map_err(|e| e.to_string())?;
    Ok((hist.epochs.iter().map(|e| e.test_rmse.unwrap()).collect(), model))
}

fn desk_convergence() -> Result<String, String> {
    let (plus_rmse, _) = fit(Variant::Plus, false, 1, 50)?;
    let reached = plus_rmse.iter().position(|&r| r <= 2.0 * NOISE);
    let plus_final = *plus_rmse.last().unwrap();
    let (ft_rmse, _) = fit(Variant::FastTucker, false, 1, 50)?;
    let ft_final = *ft_rmse.last().unwrap();
    let epoch = reached.ok_or_else(|| format!("plus never reached {}; final {plus_final:.4}", 2.0 * NOISE))? + 1;
    ensure(plus_final <= ft_final * 1.05, || {
        format!("plus final {plus_final:.4} exceeds fasttucker final {ft_final:.4} + 5%")
    })?;
    Ok(format!(
        "plus reached test RMSE <= {} at epoch {epoch}, final {plus_final:.4}; fasttucker final {ft_final:.4}",
        2.0 * NOISE
    ))
}

fn hogwild_robustness() -> Result<String, String> {
    let (a, model_a) = fit(Variant::Plus, false, 1, 50)?;
    let (_, model_b) = fit(Variant::Plus, false, 1, 50)?;
    ensure(model_a.to_bytes() == model_b.to_bytes(), || "workers=1 runs differ".into())?;
    let mut finals = vec![*a.last().unwrap()];
    for workers in [4, 8] {
        finals.push(*fit(Variant::Plus, false, workers, 50)?.0.last().unwrap());
    }
    let (lo, hi) = finals.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let spread = hi / lo - 1.0;
    ensure(spread <= 0.02, || format!("final RMSE {finals:?} spread {:.2}%", spread * 100.0))?;
    Ok(format!(
        "final RMSE with 1/4/8 workers {:.5}/{:.5}/{:.5} (spread {:.3}%), workers=1 bit-identical",
        finals[0],
        finals[1],
        finals[2],
        spread * 100.0
    ))
}

fn calculate_vs_store() -> Result<String, String> {
    let (live, _) = fit(Variant::Plus, false, 1, 50)?;
    let (stored, _) = fit(Variant::Plus, true, 1, 50)?;
    let (l, s) = (*live.last().unwrap(), *stored.last().unwrap());
    let diff = (l - s).abs() / l;
    ensure(diff < 0.01, || format!("final RMSE {l:.5} vs {s:.5}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("train.tns");
    let report = dir.path().join("bench.json");
    write_coo(&input, &planted().train).map_err(|e| e.to_string())?;
    let cli = Cli::try_parse_from([
        "ftk",
        "bench",
        "-i",
        input.to_str().unwrap(),
        "--variant",
        "plus",
        "--store-c",
        "-T",
        "1",
        "--warmup",
        "0",
        "-o",
        report.to_str().unwrap(),
    ])
    .map_err(|e| e.to_string())?;
    run_cli(cli).map_err(|e| format!("{e:#}"))?;
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let runs = report["runs"].as_array().ok_or("no runs")?;
    let core = |store: bool| -> Result<serde_json::Value, String> {
        let run = runs.iter().find(|r| r["store_c"] == store).ok_or("missing run")?;
        let ph = &run["core"];
        ensure(ph["measured_per_full_batch"] == ph["predicted_per_full_batch"], || {
            format!("store_c={store}: measured {} vs predicted {}", ph["measured_per_full_batch"], ph["predicted_per_full_batch"])
        })?;
        Ok(ph["measured_per_full_batch"].clone())
    };
    let (calc, storage) = (core(false)?, core(true)?);
    let mults = |v: &serde_json::Value| v["d_stage_mults"].as_u64().unwrap_or(0);
    ensure(mults(&storage) < mults(&calc), || format!("core profiles {calc} vs {storage}"))?;
    ensure(report["calculate_vs_store"]["storage"].is_object(), || "no calculation/storage columns".into())?;
    Ok(format!(
        "final RMSE {l:.5} (calculate) vs {s:.5} (store), diff {:.3}%; core batch reads {} vs {}, D-stage multiplies {} vs {}",
        diff * 100.0,
        calc["reads"],
        storage["reads"],
        calc["d_stage_mults"],
        storage["d_stage_mults"]
    ))
}

// ---------------------------------------------------------------------------
// 6

fn real_data() -> Result<String, String> {
    let path = std::env::var("FTK_NETFLIX").map_err(|e| e.to_string())?;
    let data = load_coo(&path, 3).map_err(|e| e.to_string())?;
    let (train_t, test_t) = match std::env::var("FTK_NETFLIX_TEST") {
        Ok(p) => (data, load_coo(p, 3).map_err(|e| e.to_string())?),
        Err(_) => split_train_test(&data, 0.1, 1).map_err(|e| e.to_string())?,
    };
    let dims: Vec<usize> = train_t.dims().iter().zip(test_t.dims()).map(|(&a, &b)| a.max(b)).collect();
    let ranks = [16; 3];
    let mut model = Model::init(&dims, &ranks, 16, 1, default_init_scale(&train_t, &ranks, 16)).map_err(|e| e.to_string())?;
    let hyper = Hyperparams::default();
    let hist = train(&train_t, Some(&test_t), &mut model, &hyper, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let best = hist
        .epochs
        .iter()
        .find(|e| e.test_rmse.unwrap() <= 0.95 && e.test_mae.unwrap() <= 0.75)
        .map(|e| e.epoch);
    let last = hist.last().unwrap();
    match best {
        Some(epoch) => Ok(format!(
            "RMSE <= 0.95 and MAE <= 0.75 at epoch {epoch}; final {:.4}/{:.4}",
            last.test_rmse.unwrap(),
            last.test_mae.unwrap()
        )),
        None => Err(format!(
            "final RMSE {:.4}, MAE {:.4}",
            last.test_rmse.unwrap(),
            last.test_mae.unwrap()
        )),
    }
}

// ---------------------------------------------------------------------------
// 9

/// Reads the tabulated per-mode components predict for exactly the batches
/// in `tally`: a fixed part per batch and a part per batch row.
fn tabulated_reads(variant: Variant, order: u64, tally: &PhaseTally) -> u64 {
    let (r, j) = (16u64, 16u64);
    let sum_j = order * j;
    tally
        .slots
        .iter()
        .map(|s| {
            let (per_batch, per_row) = match variant {
                // a(n) row and B(n) per batch; the other modes' rows per entry.
                Variant::FastTucker => (j + r * j, sum_j - j),
                // (N - 1) cached C rows and B(n) per batch; the A(n) row per entry.
                Variant::FasterTucker => ((order - 1) * r + r * j, j),
                // Every B(n) per batch; every mode's row per entry.
                Variant::Plus => (r * sum_j, sum_j),
            };
            s.batches * per_batch + s.rows * per_row
        })
        .sum()
}

fn order_scaling() -> Result<String, String> {
    let mut plus_reads = Vec::new();
    for order in 3..=6usize {
        let t = generate_uniform(&SynthSpec::uniform(order, 100, 100_000, order as u64)).map_err(|e| e.to_string())?;
        for v in Variant::ALL {
            let ranks = vec![16; order];
            let mut model =
                Model::init(t.dims(), &ranks, 16, 3, default_init_scale(&t, &ranks, 16)).map_err(|e| e.to_string())?;
            let opts = TrainOptions {
                variant: v,
                ..TrainOptions::default()
            };
            let stats = Trainer::new(&t, &Hyperparams::default(), &opts)
                .and_then(|tr| tr.epoch(&mut model, 1))
                .map_err(|e| format!("{v} order {order}: {e}"))?;
            ensure(model.is_finite(), || format!("{v} order {order}: non-finite model"))?;
            for (phase, tally) in [(Phase::Factor, &stats.factor_costs), (Phase::Core, &stats.core_costs)] {
                let got = tally.totals().reads;
                let want = tabulated_reads(v, order as u64, tally);
                ensure(got == want, || format!("{v} order {order} {phase:?}: {got} reads, formulas give {want}"))?;
            }
            if v == Variant::Plus {
                let per = stats.factor_costs.per_full_batch().ok_or("no full plus batch")?.reads;
                ensure(per == table(v, order as u64).reads, || format!("plus order {order}: {per} reads per batch"))?;
                plus_reads.push(per);
            }
        }
    }
    let steps: Vec<u64> = plus_reads.windows(2).map(|w| w[1] - w[0]).collect();
    ensure(steps.iter().all(|&s| s == 32 * 16), || format!("plus reads {plus_reads:?} do not grow by (M + R) J"))?;
    Ok(format!(
        "orders 3-6, nnz 1e5, every variant one epoch; measured reads equal the formulas; plus reads per batch {plus_reads:?}"
    ))
}
