use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use g2r::encoder::{load_regions, save_regions, CachedRegion};
use g2r::graph::{generate_dataset, load_dataset, load_pairs, save_dataset, save_pairs, Dataset, ErRange};
use g2r::metrics::EvalReport;
use g2r::model::{LossMode, Model, ModelConfig};
use g2r::oracle::{label_pairs, pair_within_bound, select_pairs, OracleBudget, PairSelection};
use g2r::trainer::{
    apply_config, load_checkpoint, predict_pairs, save_checkpoint, split_pairs, train, write_history, TrainConfig,
};
use g2r::{Error, Result};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "g2r", version, about = "Graph similarity with region embeddings")]
struct Cli {
    /// Worker threads for labeling and encoding (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of connected Erdős–Rényi graphs.
    Gen(GenArgs),
    /// Label graph pairs with exact MCS and GED.
    Oracle(OracleArgs),
    /// Precompute graph regions with a trained model.
    Encode(EncodeArgs),
    /// Train a model on labeled pairs.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of the labeled pairs.
    Eval(EvalArgs),
    /// Score pairs from precomputed regions.
    Predict(PredictArgs),
    /// Rank a region corpus against one query graph.
    Rank(RankArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n_graphs: usize,
    #[arg(long, default_value_t = 5)]
    n_min: usize,
    #[arg(long, default_value_t = 50)]
    n_max: usize,
    #[arg(long, default_value_t = 0.1)]
    p_min: f64,
    #[arg(long, default_value_t = 0.5)]
    p_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `all` or `random:<m>`.
    #[arg(long, default_value = "all")]
    pairs: PairSelection,
    /// Per-pair wall-clock limit in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    max_mcs_nodes: Option<usize>,
    #[arg(long)]
    max_ged_nodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<LossMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-epoch loss history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Mcs,
    Ged,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    metric: Metric,
    /// Pairs to evaluate; splits are recomputed from the checkpoint seed.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    k: Vec<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    regions: PathBuf,
    /// JSON lines with `a` and `b` graph ids (label files work as is).
    #[arg(long)]
    pairs: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    regions: PathBuf,
    #[arg(long)]
    query: usize,
    #[arg(long, value_enum, default_value = "mcs")]
    metric: Metric,
    /// Keep only the best `top` entries.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct OracleSummary {
    pairs: usize,
    bound_violations: usize,
}

#[derive(Serialize)]
struct Prediction {
    a: usize,
    b: usize,
    mcs: f64,
    ged: f64,
}

#[derive(Serialize)]
struct Ranked {
    rank: usize,
    id: usize,
    score: f64,
}

fn json_line(w: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, v).map_err(|e| Error::Inconsistent(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen(a: GenArgs) -> Result<()> {
    let range = ErRange {
        n_min: a.n_min,
        n_max: a.n_max,
        p_min: a.p_min,
        p_max: a.p_max,
    };
    let graphs = generate_dataset(a.n_graphs, range, a.seed)?;
    save_dataset(&a.out, &Dataset::unlabeled(graphs))
}

fn oracle(a: OracleArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let mut budget = OracleBudget::default();
    if let Some(secs) = a.budget {
        if !(secs.is_finite() && secs > 0.0) {
            return Err(Error::Config("--budget must be positive seconds".into()));
        }
        budget.timeout = Some(Duration::from_secs_f64(secs));
    }
    budget.max_mcs_nodes = a.max_mcs_nodes.unwrap_or(budget.max_mcs_nodes);
    budget.max_ged_nodes = a.max_ged_nodes.unwrap_or(budget.max_ged_nodes);
    let pairs = select_pairs(ds.len(), a.pairs, a.seed)?;
    let labeled = label_pairs(&ds, &pairs, &budget)?;
    let mut violations = 0;
    for p in &labeled {
        if !pair_within_bound(&ds, p)? {
            violations += 1;
        }
    }
    save_pairs(&a.out, &labeled)?;
    json_line(
        &mut io::stdout().lock(),
        &OracleSummary {
            pairs: labeled.len(),
            bound_violations: violations,
        },
    )?;
    if violations > 0 {
        return Err(Error::Inconsistent(format!("{violations} pairs violate GED <= bunke + phi")));
    }
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let model = load_checkpoint(&a.checkpoint)?;
    save_regions(&a.out, &model.encode_dataset(&ds)?)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let pairs = load_pairs(&a.labels, &ds)?;
    let mut model_cfg = ModelConfig::default();
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        apply_config(&std::fs::read_to_string(path)?, &mut model_cfg, &mut cfg)?;
    }
    model_cfg.encoder.label_vocab = model_cfg.encoder.label_vocab.max(ds.label_vocab());
    if let Some(loss) = a.loss {
        cfg.loss_mode = loss;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let outcome = train(&ds, &pairs, &model_cfg, &cfg)?;
    save_checkpoint(&a.out, &outcome.model)?;
    if let Some(path) = &a.history {
        write_history(BufWriter::new(File::create(path)?), &outcome.history)?;
    }
    println!(
        "{}",
        json!({
            "epochs": outcome.history.len(),
            "best_epoch": outcome.best_epoch,
            "best_val_loss": outcome.best_val_loss,
            "stopped_early": outcome.stopped_early,
            "train_pairs": outcome.split.train.len(),
            "val_pairs": outcome.split.val.len(),
            "test_pairs": outcome.split.test.len(),
        })
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let pairs = load_pairs(&a.labels, &ds)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let idx = match a.split {
        SplitName::All => (0..pairs.len()).collect(),
        s => {
            let split = split_pairs(pairs.len(), model.seed)?;
            match s {
                SplitName::Train => split.train,
                SplitName::Val => split.val,
                _ => split.test,
            }
        }
    };
    let ((pm, pg), (tm, tg)) = predict_pairs(&model, &ds, &pairs, &idx, None)?;
    let (preds, targets) = match a.metric {
        Metric::Mcs => (pm, tm),
        Metric::Ged => (pg, tg),
    };
    // Every graph in the evaluated pairs is a query against its partners.
    let mut by_graph: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &i) in idx.iter().enumerate() {
        by_graph.entry(pairs[i].a).or_default().push(pos);
        by_graph.entry(pairs[i].b).or_default().push(pos);
    }
    let queries: Vec<Vec<usize>> = by_graph.into_values().collect();
    let report = EvalReport::compute(&preds, &targets, &queries, &a.k)?;
    json_line(&mut io::stdout().lock(), &report)?;
    println!("{}", report.csv_row());
    Ok(())
}

/// Loads a checkpoint and a region cache, checking they belong together.
fn model_and_regions(checkpoint: &Path, regions: &Path) -> Result<(Model, Vec<CachedRegion>)> {
    let model = load_checkpoint(checkpoint)?;
    let cache = load_regions(regions)?;
    let enc = &model.config.encoder;
    for (i, c) in cache.iter().enumerate() {
        if c.id != i {
            return Err(Error::Inconsistent(format!("region cache line {} has id {}", i + 1, c.id)));
        }
        if c.region.k() != enc.k || c.region.out() != enc.out {
            return Err(Error::Config(format!(
                "region {} is {}x{}, checkpoint expects {}x{}",
                i,
                c.region.k(),
                c.region.out(),
                enc.k,
                enc.out
            )));
        }
    }
    Ok((model, cache))
}

fn read_pair_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let id = |key: &str| {
            v.get(key)
                .and_then(|x| x.as_u64())
                .map(|x| x as usize)
                .ok_or_else(|| bad(format!("missing non-negative integer {key:?}")))
        };
        out.push((id("a")?, id("b")?));
    }
    Ok(out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let (model, cache) = model_and_regions(&a.checkpoint, &a.regions)?;
    let pairs = read_pair_list(&a.pairs)?;
    let mut w = output(a.out.as_deref())?;
    for (x, y) in pairs {
        let get = |g: usize| {
            cache.get(g).map(|c| &c.region).ok_or(Error::OutOfRange {
                op: "region cache",
                index: g,
                bound: cache.len(),
            })
        };
        let (mcs, ged) = model.score(get(x)?, get(y)?)?;
        json_line(&mut w, &Prediction { a: x, b: y, mcs, ged })?;
    }
    w.flush()?;
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let (model, cache) = model_and_regions(&a.checkpoint, &a.regions)?;
    let query = cache.get(a.query).ok_or(Error::OutOfRange {
        op: "query",
        index: a.query,
        bound: cache.len(),
    })?;
    let mut scored = Vec::with_capacity(cache.len());
    for c in cache.iter().filter(|c| c.id != a.query) {
        let (mcs, ged) = model.score(&query.region, &c.region)?;
        scored.push((
            c.id,
            match a.metric {
                Metric::Mcs => mcs,
                Metric::Ged => ged,
            },
        ));
    }
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    scored.truncate(a.top.unwrap_or(usize::MAX));
    let mut w = output(a.out.as_deref())?;
    for (rank, (id, score)) in scored.into_iter().enumerate() {
        json_line(&mut w, &Ranked { rank: rank + 1, id, score })?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Oracle(a) => oracle(a),
        Command::Encode(a) => encode(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Rank(a) => rank(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
