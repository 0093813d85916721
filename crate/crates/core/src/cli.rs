//! The `ftk` command line: `gen`, `train`, `eval` and `bench`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::decomposition::{train_with, Trainer, TrainOptions, Variant};
use crate::evaluation::{self, expected_totals, predicted_costs, Phase};
use crate::model::{default_init_scale, Hyperparams, Model};
use crate::synthgen::{generate_planted, generate_uniform, SynthSpec};
use crate::tensor_store::{load_coo, sniff_order, split_train_test, write_coo, SparseTensor};
use crate::tile::TILE;

/// A flag combination clap cannot reject by itself. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "ftk", version, about = "Sparse FastTucker decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sparse tensor.
    Gen(GenArgs),
    /// Train a model and write its per-epoch history.
    Train(TrainArgs),
    /// Score a saved model on a tensor.
    Eval(EvalArgs),
    /// Time the variants and compare measured against predicted costs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Fasttucker,
    Fastertucker,
    Plus,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Fasttucker => Variant::FastTucker,
            VariantArg::Fastertucker => Variant::FasterTucker,
            VariantArg::Plus => Variant::Plus,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output COO file; a planted ground truth goes next to it as `<stem>.truth.ftkp`.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Size of every mode.
    #[arg(long, default_value_t = 10_000)]
    pub dim: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub nnz: usize,
    /// Sample a random low-rank model plus noise.
    #[arg(long, conflicts_with = "uniform")]
    pub planted: bool,
    /// Values uniform on [--min, --max] (the default).
    #[arg(long)]
    pub uniform: bool,
    /// Planted per-mode rank.
    #[arg(short = 'J', default_value_t = 16)]
    pub j: usize,
    /// Planted Kruskal rank.
    #[arg(short = 'R', default_value_t = 16)]
    pub r: usize,
    /// Planted noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub min: f32,
    #[arg(long, default_value_t = 5.0)]
    pub max: f32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must lie in [0, 1)".into())
    }
}

/// Shape, schedule and learning flags shared by `train` and `bench`.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Uniform per-mode rank J_n.
    #[arg(short = 'J', default_value_t = 16, conflicts_with = "ranks", value_parser = positive)]
    pub j: usize,
    /// Per-mode ranks, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub ranks: Option<Vec<usize>>,
    /// Kruskal rank R.
    #[arg(short = 'R', default_value_t = 16, value_parser = positive)]
    pub r: usize,
    /// Batch size.
    #[arg(short = 'M', default_value_t = 16, value_parser = positive)]
    pub m: usize,
    #[arg(long = "lr-a", default_value_t = 1e-3)]
    pub lr_a: f32,
    #[arg(long = "lr-b", default_value_t = 1e-3)]
    pub lr_b: f32,
    #[arg(long = "reg-a", default_value_t = 1e-4)]
    pub reg_a: f32,
    #[arg(long = "reg-b", default_value_t = 1e-4)]
    pub reg_b: f32,
    #[arg(long, env = "FTK_THREADS", default_value_t = 1, value_parser = positive)]
    pub workers: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Precompute C for the core phase (plus only).
    #[arg(long = "store-c")]
    pub store_c: bool,
    /// Share of entries held out for testing when no --test file is given.
    #[arg(long = "test-fraction", default_value_t = 0.1, value_parser = fraction)]
    pub test_fraction: f64,
    /// Order of the input tensor; read from the file when omitted.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Where to save the trained model.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Explicit test tensor; disables the random split.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// History file (JSON lines, or CSV with --csv). Defaults to stdout.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::Plus)]
    pub variant: VariantArg,
    /// Epochs.
    #[arg(short = 'T', default_value_t = 50)]
    pub t: usize,
    /// Write the history as CSV.
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Variants to run; all three when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub variant: Vec<VariantArg>,
    /// Measured epochs per variant.
    #[arg(short = 'T', default_value_t = 1)]
    pub t: usize,
    /// Unmeasured epochs before timing.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn truth_path(output: &Path) -> PathBuf {
    output.with_extension("truth.ftkp")
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let summary = if a.planted {
        let spec = SynthSpec::planted(a.order, a.dim, a.nnz, a.j, a.r, a.noise, a.seed);
        let (t, truth) = generate_planted(&spec)?;
        write_coo(&a.output, &t).with_context(|| format!("writing {}", a.output.display()))?;
        let truth_file = truth_path(&a.output);
        truth
            .save(&truth_file)
            .with_context(|| format!("writing {}", truth_file.display()))?;
        json!({"output": a.output, "truth": truth_file, "order": a.order, "nnz": t.nnz(), "mean": t.mean()})
    } else {
        let spec = SynthSpec {
            kind: crate::synthgen::SynthKind::Uniform { min: a.min, max: a.max },
            ..SynthSpec::uniform(a.order, a.dim, a.nnz, a.seed)
        };
        let t = generate_uniform(&spec)?;
        write_coo(&a.output, &t).with_context(|| format!("writing {}", a.output.display()))?;
        json!({"output": a.output, "order": a.order, "nnz": t.nnz(), "mean": t.mean()})
    };
    println!("{summary}");
    Ok(())
}

fn load_tensor(path: &Path, order: Option<usize>) -> anyhow::Result<SparseTensor> {
    let order = match order {
        Some(o) => o,
        None => sniff_order(path).with_context(|| format!("reading {}", path.display()))?,
    };
    load_coo(path, order).with_context(|| format!("reading {}", path.display()))
}

impl FitArgs {
    fn ranks(&self, order: usize) -> anyhow::Result<Vec<usize>> {
        match &self.ranks {
            Some(r) if r.len() != order => Err(UsageError(format!(
                "--ranks lists {} values for a tensor of order {order}",
                r.len()
            ))
            .into()),
            Some(r) => Ok(r.clone()),
            None => Ok(vec![self.j; order]),
        }
    }

    fn hyper(&self, epochs: usize) -> Hyperparams {
        Hyperparams {
            lr_a: self.lr_a,
            lr_b: self.lr_b,
            reg_a: self.reg_a,
            reg_b: self.reg_b,
            epochs,
            batch_size: self.m,
        }
    }

    fn options(&self, variant: Variant, store_c: bool) -> TrainOptions {
        TrainOptions {
            variant,
            store_c,
            workers: self.workers,
            seed: self.seed,
        }
    }

    fn warn_padding(&self, ranks: &[usize]) {
        if ranks.iter().chain([&self.r]).any(|v| v % TILE != 0) {
            eprintln!("warning: rank not a multiple of 16; tiles padded");
        }
    }

    fn init_model(&self, train: &SparseTensor, ranks: &[usize]) -> anyhow::Result<Model> {
        let scale = default_init_scale(train, ranks, self.r);
        Ok(Model::init(train.dims(), ranks, self.r, self.seed, scale)?)
    }
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let variant = Variant::from(a.variant);
    if a.fit.store_c && variant != Variant::Plus {
        return Err(UsageError("--store-c only applies to --variant plus".into()).into());
    }
    let tensor = load_tensor(&a.input, a.fit.order)?;
    let (train, test) = match &a.test {
        Some(p) => (tensor, Some(load_tensor(p, Some(tensor_order(&a.input, a.fit.order)?))?)),
        None if a.fit.test_fraction > 0.0 => {
            let (tr, te) = split_train_test(&tensor, a.fit.test_fraction, a.fit.seed)?;
            (tr, Some(te))
        }
        None => (tensor, None),
    };
    let ranks = a.fit.ranks(train.order())?;
    a.fit.warn_padding(&ranks);

    let mut dims = train.dims().to_vec();
    if let Some(te) = &test {
        for (d, &e) in dims.iter_mut().zip(te.dims()) {
            *d = (*d).max(e);
        }
    }
    let scale = default_init_scale(&train, &ranks, a.fit.r);
    let mut model = Model::init(&dims, &ranks, a.fit.r, a.fit.seed, scale)?;
    let hyper = a.fit.hyper(a.t);
    let opts = a.fit.options(variant, a.fit.store_c);

    let mut sink: Box<dyn Write> = match &a.history {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    if a.csv {
        writeln!(sink, "epoch,train_loss,test_rmse,test_mae,seconds,reads,mults")?;
    }
    let mut write_err = None;
    let history = train_with(&train, test.as_ref(), &mut model, &hyper, &opts, |e| {
        let r = e.record();
        let res = if a.csv {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                sink,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.test_rmse),
                opt(r.test_mae),
                r.seconds,
                r.reads,
                r.mults
            )
        } else {
            serde_json::to_writer(&mut sink, &r)
                .map_err(io::Error::from)
                .and_then(|_| writeln!(sink))
        };
        if let Err(e) = res {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing history");
    }
    sink.flush()?;
    drop(sink);

    if let Some(out) = &a.output {
        model
            .save(out)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    if let Some(last) = history.last() {
        eprintln!(
            "{}",
            json!({"variant": variant, "epochs": history.len(), "train_loss": last.train_loss,
                   "test_rmse": last.test_rmse, "test_mae": last.test_mae})
        );
    }
    Ok(())
}

fn tensor_order(path: &Path, order: Option<usize>) -> anyhow::Result<usize> {
    match order {
        Some(o) => Ok(o),
        None => Ok(sniff_order(path)?),
    }
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let model = Model::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let tensor = load_tensor(&a.input, None)?;
    let m = evaluation::evaluate(&model, &tensor)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    let tensor = load_tensor(&a.input, a.fit.order)?;
    let ranks = a.fit.ranks(tensor.order())?;
    a.fit.warn_padding(&ranks);
    if a.t == 0 {
        bail!(UsageError("-T must be at least 1 for a benchmark".into()));
    }
    let variants: Vec<Variant> = if a.variant.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variant.iter().map(|&v| v.into()).collect()
    };
    if a.fit.store_c && !variants.contains(&Variant::Plus) {
        return Err(UsageError("--store-c only applies to --variant plus".into()).into());
    }
    let mut runs = Vec::new();
    for &v in &variants {
        let store_modes: &[bool] = if v == Variant::Plus && a.fit.store_c { &[false, true] } else { &[false] };
        for &store_c in store_modes {
            runs.push(bench_one(&tensor, &ranks, &a, v, store_c)?);
        }
    }

    let seconds = |v: Variant, store: bool, key: &str| {
        runs.iter()
            .find(|r| r["variant"] == v.name() && r["store_c"] == store)
            .and_then(|r| r[key].as_f64())
    };
    let mut speedups = serde_json::Map::new();
    for base in [Variant::FastTucker, Variant::FasterTucker] {
        if let (Some(pf), Some(bf), Some(pc), Some(bc)) = (
            seconds(Variant::Plus, false, "factor_seconds"),
            seconds(base, false, "factor_seconds"),
            seconds(Variant::Plus, false, "core_seconds"),
            seconds(base, false, "core_seconds"),
        ) {
            speedups.insert(
                format!("plus_vs_{}", base.name()),
                json!({"factor": bf / pf, "core": bc / pc}),
            );
        }
    }
    let mut report = json!({"input": a.input, "nnz": tensor.nnz(), "order": tensor.order(),
                            "runs": runs, "speedups": speedups});
    if a.fit.store_c {
        let col = |store: bool| {
            json!({"core_seconds": seconds(Variant::Plus, store, "core_seconds"),
                   "test_rmse": runs.iter().find(|r| r["variant"] == "plus" && r["store_c"] == store)
                        .map(|r| r["test_rmse"].clone())})
        };
        report["calculate_vs_store"] = json!({"calculation": col(false), "storage": col(true)});
    }
    let text = serde_json::to_string_pretty(&report)?;
    match &a.output {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn bench_one(
    tensor: &SparseTensor,
    ranks: &[usize],
    a: &BenchArgs,
    variant: Variant,
    store_c: bool,
) -> anyhow::Result<serde_json::Value> {
    let (train, test) = split_train_test(tensor, a.fit.test_fraction.clamp(1e-6, 0.5), a.fit.seed)?;
    let mut model = a.fit.init_model(&train, ranks)?;
    let hyper = a.fit.hyper(1);
    let opts = a.fit.options(variant, store_c);
    let trainer = Trainer::new(&train, &hyper, &opts)?;
    for e in 0..a.warmup {
        trainer.epoch(&mut model, e + 1)?;
    }
    let (mut factor_s, mut core_s, mut total_s) = (0.0, 0.0, 0.0);
    let mut last = None;
    for e in 0..a.t {
        let stats = trainer.epoch(&mut model, a.warmup + e + 1)?;
        factor_s += stats.factor_seconds;
        core_s += stats.core_seconds;
        total_s += stats.seconds;
        last = Some(stats);
    }
    let stats = last.expect("at least one measured epoch");
    let t = a.t as f64;
    let metrics = evaluation::evaluate(&model, &test)?;
    let phase_report = |phase: Phase| {
        let tally = match phase {
            Phase::Factor => &stats.factor_costs,
            Phase::Core => &stats.core_costs,
        };
        json!({
            "measured_per_full_batch": tally.per_full_batch(),
            "predicted_per_full_batch": predicted_costs(variant, phase, store_c, a.fit.m, a.fit.r, ranks),
            "measured_totals": tally.totals(),
            "predicted_totals": expected_totals(tally, variant, phase, store_c, a.fit.r, ranks),
        })
    };
    Ok(json!({
        "variant": variant.name(),
        "store_c": store_c,
        "seconds": total_s / t,
        "factor_seconds": factor_s / t,
        "core_seconds": core_s / t,
        "test_rmse": metrics.rmse,
        "factor": phase_report(Phase::Factor),
        "core": phase_report(Phase::Core),
        "precompute_mults": stats.precompute_mults,
    }))
}
