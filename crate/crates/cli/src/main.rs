//! `nodespec` command-line interface.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nodespec_core::data::{find_named, load_dataset_dir, Dataset, Split, SplitMode};
use nodespec_core::eval::{coefficient_distance_report, homophily_binned_accuracy, run_experiment, RunSummary};
use nodespec_core::homophily::{entropy_report, homophily_report, proposition_closed_forms, proposition_monte_carlo};
use nodespec_core::model::{
    node_coefficients, predict, read_checkpoint, train, write_checkpoint, Checkpoint, Filter, HSource, Mode, Prepared,
    TrainConfig,
};
use nodespec_core::oracle::oracle_suite;
use nodespec_core::poly::{frequency_response_with, lambda_grid, Basis};
use nodespec_core::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "nodespec", version, about = "Node-oriented spectral filtering for graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Homophily and label-entropy reports with histogram CSVs.
    Analyze(AnalyzeArgs),
    /// Closed forms of the two-step label-chain propositions plus a Monte-Carlo check.
    PropSim(PropSimArgs),
    /// Train a model and write checkpoint, history CSV and split.
    Train(TrainArgs),
    /// Evaluate a checkpoint: accuracy, homophily-bin report, coefficient-distance report.
    Eval(EvalArgs),
    /// Frequency responses of the learned base filters and of per-node filters.
    FilterResponse(FilterResponseArgs),
    /// Randomized equivalence of polynomial filtering against the dense eigenbasis, plus localization.
    OracleCheck(OracleCheckArgs),
    /// Accuracy over a grid of polynomial orders and ranks.
    Sweep(SweepArgs),
    /// Per-epoch wall-clock timing (informational only).
    Timing(TimingArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset name resolved under $NODESPEC_DATA_DIR (default ./data).
    #[arg(long, required_unless_present = "data_dir")]
    dataset: Option<String>,
    /// Directory holding edges.tsv, features.csv and labels.txt.
    #[arg(long, conflicts_with = "dataset")]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let dir = match (&self.data_dir, &self.dataset) {
            (Some(d), _) => d.clone(),
            (None, Some(name)) => find_named(name).ok_or_else(|| {
                Error::Input(format!(
                    "dataset {name:?} not found under {}",
                    nodespec_core::data::data_root().display()
                ))
            })?,
            (None, None) => return Err(Error::Input("need --dataset or --data-dir".into())),
        };
        let mut d = load_dataset_dir(&dir)?;
        if let Some(name) = &self.dataset {
            d.name = name.clone();
        }
        Ok(d)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Directory for CSV outputs; summary JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PropSimArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "appnp")]
    mode: Mode,
    #[arg(long, default_value = "chebyshev")]
    basis: Basis,
    /// Mixing-weight source: per-order or static.
    #[arg(long, default_value = "per-order", value_parser = parse_h_source)]
    h_source: HSource,
    /// Polynomial order.
    #[arg(long = "K", default_value_t = 10)]
    order: usize,
    /// Rank of the coefficient factorization.
    #[arg(long = "d", default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.01)]
    lr_l: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_p: f64,
    #[arg(long, default_value_t = 0.5)]
    dp_l: f64,
    #[arg(long, default_value_t = 0.5)]
    dp_p: f64,
    #[arg(long, default_value_t = 5e-4)]
    l2: f64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the Chebyshev operator by a power-iteration estimate instead of 2.
    #[arg(long)]
    estimate_lambda_max: bool,
    /// Mini-batch size (SGC-like mode only).
    #[arg(long)]
    batch_size: Option<usize>,
}

fn parse_h_source(s: &str) -> std::result::Result<HSource, String> {
    match s {
        "per-order" | "per_order" => Ok(HSource::PerOrder),
        "static" => Ok(HSource::Static),
        other => Err(format!("unknown H source {other:?} (per-order, static)")),
    }
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            basis: self.basis,
            h_source: self.h_source,
            order: self.order,
            rank: self.rank,
            hidden: self.hidden,
            lr_l: self.lr_l,
            lr_p: self.lr_p,
            dp_l: self.dp_l,
            dp_p: self.dp_p,
            l2: self.l2,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            estimate_lambda_max: self.estimate_lambda_max,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Args, Clone)]
struct SplitArgs {
    /// sparse (2.5/2.5/95), dense (60/20/20), inductive, or custom with --train-ratio/--val-ratio.
    #[arg(long, default_value = "dense")]
    split: SplitMode,
    #[arg(long)]
    train_ratio: Option<f64>,
    #[arg(long)]
    val_ratio: Option<f64>,
    /// Seed of the split permutation; defaults to the model seed.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Load the split from JSON instead of drawing one.
    #[arg(long)]
    split_file: Option<PathBuf>,
}

impl SplitArgs {
    fn resolve(&self, n: usize, default_seed: u64) -> Result<Split> {
        if let Some(path) = &self.split_file {
            let s = Split::load(path)?;
            s.validate(Some(n))?;
            return Ok(s);
        }
        let seed = self.split_seed.unwrap_or(default_seed);
        match self.split {
            SplitMode::Custom => {
                let (Some(tr), Some(va)) = (self.train_ratio, self.val_ratio) else {
                    return Err(Error::Input("custom split needs --train-ratio and --val-ratio".into()));
                };
                Split::make_custom(n, tr, va, seed)
            }
            mode => Split::make(n, mode, seed),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Output directory for model.ckpt, history.csv and split.json.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split JSON written by `train`.
    #[arg(long)]
    split_file: PathBuf,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long, default_value_t = 10)]
    jaccard_bins: usize,
    /// Pairs sampled for the coefficient report on graphs above the all-pairs limit.
    #[arg(long, default_value_t = 200_000)]
    pair_sample: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterResponseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated node ids for per-node responses.
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<usize>,
    #[arg(long, default_value_t = 201)]
    points: usize,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Largest graph size.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "dense")]
    split: SplitMode,
    #[arg(long = "Ks", value_delimiter = ',', default_value = "2,4,6,8,10")]
    orders: Vec<usize>,
    #[arg(long = "ds", value_delimiter = ',', default_value = "1,2,4,8")]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
}

#[derive(Args)]
struct TimingArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Epochs per timed run (early stopping disabled).
    #[arg(long, default_value_t = 50)]
    timed_epochs: usize,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn write_out(dir: &Option<PathBuf>, name: &str, text: &str) -> Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join(name), text)?;
    }
    Ok(())
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn histogram_csv(name: &str, h: &nodespec_core::homophily::Histogram, out: &mut String) {
    for (b, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{name},{},{},{c}", h.edges[b], h.edges[b + 1]);
    }
}

fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let d = a.data.load()?;
    let h = homophily_report(&d.graph, &d.labels, a.bins)?;
    let s = entropy_report(&d.graph, &d.labels, d.class_count, a.bins)?;
    let mut per_node = String::from("node,h1,h_within2,s1,s_within2\n");
    for v in 0..d.node_count() {
        let _ = writeln!(
            per_node,
            "{v},{},{},{},{}",
            opt_cell(h.per_node_h1[v]),
            opt_cell(h.per_node_h_within2[v]),
            opt_cell(s.per_node_s1[v]),
            opt_cell(s.per_node_s_within2[v])
        );
    }
    let mut hist = String::from("metric,bin_lo,bin_hi,count\n");
    histogram_csv("h1", &h.hist_h1, &mut hist);
    histogram_csv("h_within2", &h.hist_h_within2, &mut hist);
    histogram_csv("s1", &s.hist_s1, &mut hist);
    histogram_csv("s_within2", &s.hist_s_within2, &mut hist);
    write_out(&a.out, "per_node.csv", &per_node)?;
    write_out(&a.out, "histograms.csv", &hist)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        dataset: &'a str,
        nodes: usize,
        edges: usize,
        classes: usize,
        graph_homophily: f64,
    }
    json(&Summary {
        dataset: &d.name,
        nodes: d.node_count(),
        edges: d.graph.edge_count(),
        classes: d.class_count,
        graph_homophily: h.graph_ratio,
    })
}

fn prop_sim(a: &PropSimArgs) -> Result<String> {
    let check = if a.samples == 0 {
        proposition_closed_forms(a.alpha, a.classes)?
    } else {
        proposition_monte_carlo(a.alpha, a.classes, a.samples, a.seed)?
    };
    json(&check)
}

fn train_cmd(a: &TrainArgs) -> Result<String> {
    let d = a.data.load()?;
    let config = a.model.config();
    let split = a.split.resolve(d.node_count(), config.seed)?;
    let outcome = train(&d, &split, &config)?;
    let prepared = Prepared::for_params(&d, &outcome.params, outcome.lambda_max)?;
    let pred = predict(&outcome.params, &d, &prepared, &split.test)?;
    let correct = pred.labels.iter().zip(&split.test).filter(|(p, &i)| **p == d.labels[i]).count();
    std::fs::create_dir_all(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    write_checkpoint(&ckpt, &Checkpoint { config: config.clone(), lambda_max: outcome.lambda_max, params: outcome.params })?;
    outcome.history.save(&a.out.join("history.csv"))?;
    split.save(&a.out.join("split.json"))?;
    #[derive(Serialize)]
    struct Summary {
        best_epoch: usize,
        epochs_run: usize,
        best_val_accuracy: f64,
        test_accuracy: f64,
        lambda_max: f64,
        checkpoint: String,
    }
    json(&Summary {
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.epochs.len(),
        best_val_accuracy: outcome.best_val_accuracy,
        test_accuracy: correct as f64 / split.test.len().max(1) as f64,
        lambda_max: outcome.lambda_max,
        checkpoint: ckpt.display().to_string(),
    })
}

fn all_predictions(ckpt: &Checkpoint, d: &Dataset) -> Result<(Prepared, Vec<usize>)> {
    let prepared = Prepared::for_params(d, &ckpt.params, ckpt.lambda_max)?;
    let all: Vec<usize> = (0..d.node_count()).collect();
    let pred = predict(&ckpt.params, d, &prepared, &all)?;
    Ok((prepared, pred.labels))
}

fn eval_cmd(a: &EvalArgs) -> Result<String> {
    let d = a.data.load()?;
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let split = Split::load(&a.split_file)?;
    split.validate(Some(d.node_count()))?;
    let (prepared, pred) = all_predictions(&ckpt, &d)?;
    let acc = |idx: &[usize]| nodespec_core::eval::accuracy(&pred, &d.labels, idx).ok();
    let bins = homophily_binned_accuracy(&pred, &d.labels, &d.graph, &split.test, a.bins)?;
    let psi = node_coefficients(&ckpt.params, &d, &prepared)?;
    let coef = coefficient_distance_report(&psi, &d.graph, &d.labels, a.pair_sample, a.jaccard_bins, ckpt.config.seed)?;
    write_out(&a.out, "homophily_bins.csv", &bins.to_csv())?;
    write_out(&a.out, "coefficient_distance.csv", &coef.to_csv())?;
    #[derive(Serialize)]
    struct Summary {
        train_accuracy: Option<f64>,
        val_accuracy: Option<f64>,
        test_accuracy: Option<f64>,
        bins: nodespec_core::eval::BinReport,
    }
    json(&Summary { train_accuracy: acc(&split.train), val_accuracy: acc(&split.validation), test_accuracy: acc(&split.test), bins })
}

fn filter_response(a: &FilterResponseArgs) -> Result<String> {
    let d = a.data.load()?;
    let ckpt = read_checkpoint(&a.checkpoint)?;
    if let Some(&bad) = a.nodes.iter().find(|&&v| v >= d.node_count()) {
        return Err(Error::Input(format!("node {bad} out of range")));
    }
    let grid = lambda_grid(a.points);
    let basis = ckpt.params.basis;
    let lm = ckpt.lambda_max;
    let gamma = match &ckpt.params.weights.filter {
        Filter::Factorized { gamma, .. } | Filter::Global { gamma } => gamma.clone(),
    };
    let mut columns: Vec<(String, Vec<f64>)> = vec![];
    for c in 0..gamma.ncols() {
        let coeffs = gamma.column(c).to_vec();
        columns.push((format!("base_{c}"), frequency_response_with(basis, &coeffs, &grid, lm)));
    }
    if !a.nodes.is_empty() {
        let prepared = Prepared::for_params(&d, &ckpt.params, lm)?;
        let psi = node_coefficients(&ckpt.params, &d, &prepared)?;
        for &v in &a.nodes {
            let coeffs = psi.psi.row(v).to_vec();
            columns.push((format!("node_{v}"), frequency_response_with(basis, &coeffs, &grid, lm)));
        }
    }
    let mut out = String::from("lambda");
    for (name, _) in &columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, l) in grid.iter().enumerate() {
        out.push_str(&l.to_string());
        for (_, v) in &columns {
            let _ = write!(out, ",{}", v[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

fn oracle_check(a: &OracleCheckArgs) -> Result<(String, bool)> {
    let r = oracle_suite(a.n, a.trials, a.seed)?;
    let ok = r.passed();
    Ok((json(&serde_json::json!({ "passed": ok, "report": r }))?, ok))
}

fn sweep(a: &SweepArgs) -> Result<String> {
    let d = a.data.load()?;
    let mut out = String::from("K,d,runs,mean,half_width\n");
    for &k in &a.orders {
        for &r in &a.ranks {
            let config = TrainConfig { order: k, rank: r, ..a.model.config() };
            let s: RunSummary = run_experiment(&d, &config, a.split, a.runs, a.model.seed)?;
            let _ = writeln!(out, "{k},{r},{},{},{}", a.runs, s.mean, s.half_width);
        }
    }
    Ok(out)
}

fn timing(a: &TimingArgs) -> Result<String> {
    let d = a.data.load()?;
    let config = TrainConfig { epochs: a.timed_epochs, patience: usize::MAX, ..a.model.config() };
    let split = a.split.resolve(d.node_count(), config.seed)?;
    let start = Instant::now();
    let prepared = Prepared::for_config(&d, &config)?;
    let prep_secs = start.elapsed().as_secs_f64();
    drop(prepared);
    let start = Instant::now();
    let outcome = train(&d, &split, &config)?;
    let total = start.elapsed().as_secs_f64();
    let epochs = outcome.history.epochs.len().max(1);
    Ok(format!(
        "mode,basis,K,d,epochs,precompute_seconds,seconds_per_epoch\n{},{},{},{},{epochs},{prep_secs},{}\n",
        config.mode,
        config.basis,
        config.order,
        config.rank,
        (total - prep_secs).max(0.0) / epochs as f64
    ))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let text = match &cli.command {
        Command::Analyze(a) => analyze(a)?,
        Command::PropSim(a) => prop_sim(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Eval(a) => eval_cmd(a)?,
        Command::FilterResponse(a) => filter_response(a)?,
        Command::OracleCheck(a) => {
            let (text, ok) = oracle_check(a)?;
            println!("{text}");
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Sweep(a) => sweep(a)?,
        Command::Timing(a) => timing(a)?,
    };
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
