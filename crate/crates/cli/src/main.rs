//! `gsf`: train, evaluate and inspect groupwise scoring models.
//!
//! Exit codes: 0 success, 1 IO or data error, 2 numeric divergence (or a failed gradient
//! check), 64 usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsf_core::clicksim::{build_click_dataset, BiasModel};
use gsf_core::data::{load_dataset, QueryList};
use gsf_core::gsf::{feature_scorer, rank, Aggregation, ListScorer, ScoreVector, ScoringMode};
use gsf_core::loss::LossKind;
use gsf_core::metrics::{evaluate, Metric};
use gsf_core::rng::{self, SeedTree};
use gsf_core::train::{gradcheck, prepare_dataset, run_group_size_sweep, train, TrainConfig, REL_ERROR_FLOOR};
use gsf_core::{Dataset64, Error, GsfModel64};
use rand::Rng;

const EXIT_DATA: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "gsf", version, about = "Groupwise scoring functions for learning to rank")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Evaluate a model on a LETOR file.
    Eval(EvalArgs),
    /// Write per-query rankings as TSV.
    Rank(RankArgs),
    /// Simulate position-biased clicks over a labeled LETOR file.
    GenClicks(GenClicksArgs),
    /// Compare analytic and finite-difference gradients on a random list.
    Gradcheck(GradcheckArgs),
    /// Train over several group sizes and report mean and 95% interval per size.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

/// Training hyperparameters; each overrides the config file.
#[derive(Args, Default)]
struct TrainFlags {
    /// Flat key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "group-size", short = 'm')]
    group_size: Option<usize>,
    /// Comma-separated widths, e.g. 64,32,16.
    #[arg(long)]
    hidden_dims: Option<String>,
    #[arg(long)]
    batch_norm: Option<bool>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    list_size: Option<usize>,
    /// softmax_xent, ipw_softmax, listnet or pairwise_logistic.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    query_weighting: Option<bool>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// sum or mean.
    #[arg(long)]
    aggregation: Option<Aggregation>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    standardize: Option<bool>,
    /// Defaults to GSF_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainFlags {
    /// Defaults, then GSF_SEED, then the config file, then flags.
    fn resolve(&self) -> Result<TrainConfig, Failure> {
        let mut config = TrainConfig {
            seed: env_seed()?.unwrap_or(0),
            ..TrainConfig::default()
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            config
                .apply_kv(&text)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        }
        let mut set = |key: &str, value: Option<String>| match value {
            Some(v) => config.set(key, &v).map_err(|e| Failure::usage(e.to_string())),
            None => Ok(()),
        };
        set("group_size", self.group_size.map(|v| v.to_string()))?;
        set("hidden_dims", self.hidden_dims.clone())?;
        set("use_batch_norm", self.batch_norm.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("steps", self.steps.map(|v| v.to_string()))?;
        set("list_size", self.list_size.map(|v| v.to_string()))?;
        set("loss", self.loss.map(|v| v.to_string()))?;
        set("query_weighting", self.query_weighting.map(|v| v.to_string()))?;
        set("eval_every", self.eval_every.map(|v| v.to_string()))?;
        set("aggregation", self.aggregation.map(|v| v.to_string()))?;
        set("clip_norm", self.clip_norm.map(|v| v.to_string()))?;
        set("standardize", self.standardize.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        config.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training data in LETOR format.
    #[arg(long)]
    data: PathBuf,
    /// Validation data, evaluated every eval_every steps.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Feature dimension; inferred from the training data when omitted.
    #[arg(long)]
    dim: Option<usize>,
    /// Model JSON output.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// JSON-lines report output; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated list, e.g. ndcg@1,ndcg@5,ndcg@10,mrr,wmrr.
    #[arg(long, default_value = "ndcg@1,ndcg@5,ndcg@10,mrr,wmrr")]
    metrics: String,
    #[arg(long, default_value = "sampled")]
    mode: ScoringMode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// TSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "sampled")]
    mode: ScoringMode,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenClicksArgs {
    /// Binary-labeled LETOR data holding true relevance.
    #[arg(long)]
    data: PathBuf,
    /// Click log output in LETOR format with w: weights on clicked lines.
    #[arg(long)]
    out: PathBuf,
    /// Position-bias severity: examination at rank r is (1/r)^eta.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Click probability of an examined irrelevant result.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// Logging ranker: a model file. Without this or --ranker-feature, results are shown in random order.
    #[arg(long, conflicts_with = "ranker_feature")]
    ranker_model: Option<PathBuf>,
    /// Logging ranker: sort by this 0-based feature.
    #[arg(long)]
    ranker_feature: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Documents in the random list (at most 5 recommended).
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out data scored with each final model.
    #[arg(long)]
    eval_data: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated group sizes.
    #[arg(long = "m", default_value = "1,2")]
    group_sizes: String,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value = "ndcg@5")]
    metric: Metric,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    #[command(flatten)]
    flags: TrainFlags,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("GSF_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("GSF_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(seed: Option<u64>) -> Result<u64, Failure> {
    Ok(match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn with_path<T>(path: &Path, r: gsf_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn load(path: &Path, dim: Option<usize>) -> Result<Dataset64, Failure> {
    with_path(path, load_dataset(path, dim))
}

fn load_model(path: &Path) -> Result<GsfModel64, Failure> {
    with_path(path, GsfModel64::load(path))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let config = args.flags.resolve()?;
    let train_ds = load(&args.data, args.dim)?;
    let valid_ds = args
        .valid
        .as_deref()
        .map(|p| load(p, Some(train_ds.feature_dim)))
        .transpose()?;
    let (model, report) = train(&config, &train_ds, valid_ds.as_ref())?;
    with_path(&args.out, model.save(&args.out))?;
    let mut out = output(args.report.as_deref())?;
    out.write_all(report.to_json_lines().as_bytes())?;
    out.flush()?;
    eprintln!(
        "trained GSF({}) for {} steps ({:.2e} s/step); model written to {}",
        config.group_size,
        config.steps,
        report.seconds_per_step,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let metrics = Metric::parse_list(&args.metrics).map_err(|e| Failure::usage(e.to_string()))?;
    let seed = seed_or_env(args.seed)?;
    let model = load_model(&args.model)?;
    let ds = load(&args.data, Some(model.feature_dim))?;
    let prepared = prepare_dataset(&model, &ds)?;
    let report = evaluate(&model.scorer(args.mode), &prepared, &metrics, seed)?;
    let text = match args.format {
        Format::Tsv => report.to_tsv(),
        Format::Json => format!("{}\n", report.to_json()),
    };
    let mut out = output(None)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<(), Failure> {
    let seed = seed_or_env(args.seed)?;
    let model = load_model(&args.model)?;
    let ds = load(&args.data, Some(model.feature_dim))?;
    let prepared = prepare_dataset(&model, &ds)?;
    let tree = SeedTree::new(seed).child("eval");
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "qid\trank\tslot\tscore")?;
    for (qi, q) in prepared.queries.iter().enumerate() {
        let mut r = tree.child_indexed("query", qi as u64).stream("groups");
        let scores = model.score_list(q, args.mode, &mut r)?;
        for (pos, slot) in rank(&scores).into_iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", q.query_id, pos + 1, slot, scores.scores[slot])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn random_scorer(q: &QueryList<f64>, r: &mut rng::Rng) -> gsf_core::Result<ScoreVector<f64>> {
    Ok(ScoreVector {
        scores: q.docs.iter().map(|_| r.gen()).collect(),
        mask: q.mask.clone(),
    })
}

fn cmd_gen_clicks(args: GenClicksArgs) -> Result<(), Failure> {
    let seed = seed_or_env(args.seed)?;
    let bias = BiasModel::new(args.eta, args.noise).map_err(|e| Failure::usage(e.to_string()))?;
    if args.sessions == 0 {
        return Err(Failure::usage("--sessions must be positive"));
    }
    let ranker_model = args.ranker_model.as_deref().map(load_model).transpose()?;
    let ds = load(&args.data, ranker_model.as_ref().map(|m| m.feature_dim))?;
    let tree = SeedTree::new(seed).child("clicks");
    let log = match (&ranker_model, args.ranker_feature) {
        (Some(model), _) => {
            // The model scores transformed features; sessions keep the raw ones.
            let prepared = prepare_dataset(model, &ds)?;
            let scorer = model.scorer(ScoringMode::Sampled);
            let by_id = |q: &QueryList<f64>, r: &mut rng::Rng| {
                let idx = ds.queries.iter().position(|p| p.query_id == q.query_id).expect("query from this dataset");
                scorer.score(&prepared.queries[idx], r)
            };
            build_click_dataset(&ds, &by_id, &bias, tree, args.sessions)?
        }
        (None, Some(feature)) => build_click_dataset(&ds, &feature_scorer(feature), &bias, tree, args.sessions)?,
        (None, None) => build_click_dataset(&ds, &random_scorer, &bias, tree, args.sessions)?,
    };
    let file = File::create(&args.out).map_err(|e| Failure::data(format!("{}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(file);
    with_path(&args.out, log.write_letor(&mut out))?;
    out.flush()?;
    eprintln!(
        "{} of {} sessions produced a click",
        log.clicked_sessions(),
        log.sessions.len()
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    let config = args.flags.resolve()?;
    if args.n == 0 || args.dim == 0 {
        return Err(Failure::usage("--n and --dim must be positive"));
    }
    let mut r = SeedTree::new(config.seed).child("gradcheck-list").stream("list");
    let rows = (0..args.n).map(|_| (0..args.dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<f64> = match config.loss {
        LossKind::IpwSoftmax => (0..args.n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        _ => (0..args.n).map(|i| (i % 3) as f64).collect(),
    };
    let mut q = QueryList::from_rows("gradcheck", rows, labels)?;
    if config.loss == LossKind::IpwSoftmax {
        q.docs[0].weight = Some(2.0);
    }
    let report = gradcheck(&config, &q)?;
    println!("max_rel_error\t{:e}", report.max_rel_error);
    println!("max_abs_error\t{:e}", report.max_abs_error);
    println!("params\t{}", report.param_count);
    println!("rel_error_floor\t{:e}", REL_ERROR_FLOOR);
    if report.max_rel_error <= GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_DIVERGED,
            message: format!("max relative error {:e} exceeds {GRADCHECK_TOLERANCE:e}", report.max_rel_error),
        })
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let config = args.flags.resolve()?;
    let sizes: Vec<usize> = args
        .group_sizes
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("--m expects comma-separated integers, got {:?}", args.group_sizes)))?;
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be positive"));
    }
    let train_ds = load(&args.data, args.dim)?;
    let eval_ds = load(&args.eval_data, Some(train_ds.feature_dim))?;
    let table = run_group_size_sweep(&config, &sizes, args.trials, args.metric, &train_ds, &eval_ds)?;
    let text = match args.format {
        Format::Tsv => table.to_tsv(),
        Format::Json => format!("{}\n", table.to_json()),
    };
    let mut out = output(None)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rank(a) => cmd_rank(a),
        Command::GenClicks(a) => cmd_gen_clicks(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gsf: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
