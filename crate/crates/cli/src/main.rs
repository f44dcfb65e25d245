use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use temprel::corpus::{generate_synthetic_corpus, label_counts, read_documents, serialize_documents, CorpusSplit, LabelSchema};
use temprel::eval::{predictions_from_records, read_predictions, score, sweep_report, write_predictions, EvalReport};
use temprel::experiment::{
    corpus_hash, run_grid, run_sieve, run_sweep, train_point, write_artifacts, ExperimentData, Manifest, ModelKind,
    RunConfig, SelectionMode,
};
use temprel::model::{evaluate, PairClassifier};
use temprel::pairgen::{distance_histogram, read_pair_set, sample_negatives, write_pair_set, PairSet};
use temprel::tempgraph::{Provenance, TemporalGraph};

const OUT_ENV: &str = "TEMPREL_OUT";

#[derive(Parser, Debug)]
#[command(name = "temprel", version, about = "Event temporal relation extraction experiments")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus and a matching split file.
    Synth(SynthArgs),
    /// Build candidate pair sets for every split.
    Prepare(PrepareArgs),
    /// Train one classifier at the first grid point.
    Train(TrainArgs),
    /// Score dumped predictions or a checkpoint.
    Evaluate(EvaluateArgs),
    /// Grid search with dev or cross-validation selection.
    Gridsearch(RunArgs),
    /// Train and test one model per negative ratio.
    Sweep(SweepArgs),
    /// Run the sieve cascade on the test split.
    SieveRun(RunArgs),
    /// Render one document's temporal graph as DOT.
    Graph(GraphArgs),
}

/// Flags shared by every experiment command. Each overrides the config file.
#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (default: $TEMPREL_OUT/<command>, else runs/<command>).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus file or directory of .jsonl files.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Generate this many synthetic stories instead of reading a corpus.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Sequential train,dev,test document counts.
    #[arg(long, value_delimiter = ',')]
    split_sizes: Option<Vec<usize>>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// "fixed" or "cv".
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden_size: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    dropout: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    neg_ratio: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lr: Option<Vec<f64>>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Leave out-of-window gold pairs out of recall.
    #[arg(long)]
    ignore_oow: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    stories: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sequential train,dev,test counts for the split file.
    #[arg(long, value_delimiter = ',', default_values_t = [220, 0, 80])]
    split_sizes: Vec<usize>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Directory written by `prepare`; its pair sets replace pair generation.
    #[arg(long)]
    prepared: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Prediction dump to score.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    predictions: Option<PathBuf>,
    /// Checkpoint to run on the chosen split.
    #[arg(long)]
    model: Option<PathBuf>,
    /// train, dev or test.
    #[arg(long, default_value = "test")]
    on: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    neg_ratios: Vec<f64>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    doc: String,
    /// Build the graph from a prediction dump instead of gold annotations.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Add inferred edges.
    #[arg(long)]
    closure: bool,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

fn three(v: &[usize]) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(v).map_err(|_| usage(format!("--split-sizes takes train,dev,test counts, got {} values", v.len())))
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.corpus.is_some() || args.synthetic.is_some() {
        cfg.corpus.path = args.corpus.clone();
        cfg.corpus.synthetic_stories = args.synthetic;
    }
    if args.split.is_some() || args.split_sizes.is_some() {
        cfg.corpus.split = args.split.clone();
        cfg.corpus.split_sizes = args.split_sizes.as_deref().map(three).transpose()?;
    }
    if let Some(s) = &args.schema {
        cfg.corpus.schema = Some(s.clone());
    }
    if let Some(m) = &args.mode {
        cfg.mode = match m.as_str() {
            "fixed" => SelectionMode::Fixed,
            "cv" => SelectionMode::Cv,
            other => return Err(usage(format!("unknown mode '{other}' (expected fixed or cv)"))),
        };
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(v) = &args.hidden_size {
        cfg.grid.hidden_size = v.clone();
    }
    if let Some(v) = &args.dropout {
        cfg.grid.dropout = v.clone();
    }
    if let Some(v) = &args.neg_ratio {
        cfg.grid.neg_ratio = v.clone();
    }
    if let Some(v) = &args.lr {
        cfg.grid.lr = v.clone();
    }
    if let Some(n) = args.max_epochs {
        cfg.train.max_epochs = n;
    }
    if let Some(n) = args.patience {
        cfg.train.patience = n;
    }
    if args.ignore_oow {
        cfg.ignore_oow = true;
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig, command: &str) -> PathBuf {
    match &cfg.output {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            root.join(command)
        }
    }
}

fn split_ids<'a>(split: &'a CorpusSplit, name: &str) -> Result<&'a [String]> {
    match name {
        "train" => Ok(&split.train),
        "dev" => Ok(&split.dev),
        "test" => Ok(&split.test),
        other => Err(usage(format!("unknown split '{other}' (expected train, dev or test)"))),
    }
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn finish(dir: &Path, manifest: Manifest, files: &[(&str, &[u8])]) -> Result<()> {
    write_artifacts(dir, manifest, files)?;
    log::info!("wrote {}", dir.display());
    println!("{}", dir.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let schema = LabelSchema::default();
    let docs = generate_synthetic_corpus(args.stories, args.seed);
    let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
    let [tr, dv, te] = three(&args.split_sizes)?;
    let split = CorpusSplit::sequential(&ids, tr, dv, te).map_err(|e| usage(e.to_string()))?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    std::fs::write(args.out.join("corpus.jsonl"), serialize_documents(&docs, &schema))?;
    std::fs::write(args.out.join("split.txt"), split.to_text())?;
    println!("{}", args.out.display());
    Ok(())
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let cfg = load_config(&args.run)?;
    let data = ExperimentData::load(&cfg)?;
    let split = &data.split;
    let ratio = cfg.grid.neg_ratio[0];
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stats = serde_json::Map::new();
    for name in ["train", "dev", "test"] {
        let set = data.pairs(split_ids(split, name)?);
        let s = set.stats();
        stats.insert(
            name.into(),
            json!({
                "positives": s.positives,
                "negatives": s.negatives,
                "out_of_window_gold": s.out_of_window_gold,
                "negative_ratio": s.negative_ratio(),
                "negative_ratio_all_gold": s.negative_ratio_all_gold(),
            }),
        );
        files.push((format!("pairs_{name}.jsonl"), write_pair_set(&set, &data.schema).into_bytes()));
        if name == "train" {
            let sample = sample_negatives(&set, ratio, cfg.grid_points()[0].seed)?;
            let sampled = PairSet {
                positives: set.positives.clone(),
                negatives: sample,
                out_of_window_gold: Vec::new(),
            };
            files.push(("train_sample.jsonl".into(), write_pair_set(&sampled, &data.schema).into_bytes()));
        }
    }
    let all = data.pairs(&data.docs.iter().map(|d| d.doc_id.clone()).collect::<Vec<_>>()).stats();
    let hist = distance_histogram(&data.docs).ok();
    let summary = json!({
        "splits": stats,
        "corpus": {
            "documents": data.docs.len(),
            "positives": all.positives,
            "negatives": all.negatives,
            "out_of_window_gold": all.out_of_window_gold,
            "negative_ratio": all.negative_ratio(),
            "negative_ratio_all_gold": all.negative_ratio_all_gold(),
            "labels": label_counts(&data.docs, &data.schema),
        },
        "distance_percent": hist.map(|h| h.percentages()),
        "neg_ratio": ratio,
    });
    files.push(("stats.json".into(), json_bytes(&summary)));
    let refs: Vec<(&str, &[u8])> = files.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
    finish(&output_dir(&cfg, "prepare"), Manifest::new("prepare", &cfg, &data.corpus_hash), &refs)
}

fn read_prepared(dir: &Path, name: &str, schema: &LabelSchema) -> Result<PairSet> {
    let path = dir.join(format!("pairs_{name}.jsonl"));
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_pair_set(&text, schema)?)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(&args.run)?;
    let data = ExperimentData::load(&cfg)?;
    let (train_set, dev_set, test_set) = match &args.prepared {
        Some(dir) => (
            read_prepared(dir, "train", &data.schema)?,
            read_prepared(dir, "dev", &data.schema)?,
            read_prepared(dir, "test", &data.schema)?,
        ),
        None => (
            data.pairs(&data.split.train),
            data.pairs(&data.split.dev),
            data.pairs(&data.split.test),
        ),
    };
    let dev = (!data.split.dev.is_empty()).then_some(&dev_set);
    let point = cfg.grid_points().remove(0);
    let (model, history) = train_point(&cfg, &data, &point, &train_set, dev)?;
    let (report, records) = evaluate(&model, &test_set, &data.word, cfg.ignore_oow)?;
    print!("{}", report.to_table());
    let history = json_bytes(&serde_json::to_value(&history)?);
    let ckpt = model.to_checkpoint();
    let preds = write_predictions(&records);
    let eval = report.to_json();
    finish(
        &output_dir(&cfg, "train"),
        Manifest::new("train", &cfg, &data.corpus_hash),
        &[
            ("model.ckpt", &ckpt),
            ("history.json", &history),
            ("predictions.jsonl", preds.as_bytes()),
            ("eval.json", eval.as_bytes()),
        ],
    )
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(&args.run)?;
    let data = ExperimentData::load(&cfg)?;
    let set = data.pairs(split_ids(&data.split, &args.on)?);
    let (report, records): (EvalReport, Option<String>) = match (&args.predictions, &args.model) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let preds = predictions_from_records(&read_predictions(&text)?, &data.schema)?;
            (score(&preds, &set, &data.schema, cfg.ignore_oow)?, None)
        }
        (None, Some(path)) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let model = PairClassifier::from_checkpoint(&bytes)?;
            let (report, records) = evaluate(&model, &set, &data.word, cfg.ignore_oow)?;
            (report, Some(write_predictions(&records)))
        }
        (None, None) => return Err(usage("either --predictions or --model is required")),
    };
    print!("{}", report.to_table());
    let eval = report.to_json();
    let mut files: Vec<(&str, &[u8])> = vec![("eval.json", eval.as_bytes())];
    if let Some(r) = &records {
        files.push(("predictions.jsonl", r.as_bytes()));
    }
    finish(&output_dir(&cfg, "evaluate"), Manifest::new("evaluate", &cfg, &data.corpus_hash), &files)
}

fn cmd_gridsearch(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let data = ExperimentData::load(&cfg)?;
    let outcome = run_grid(&cfg, &data)?;
    let r = &outcome.result;
    for p in &r.points {
        println!(
            "point {}\thidden {}\tdropout {}\tneg_ratio {}\tlr {}\tscore {:.4}",
            p.point.index, p.point.hidden_size, p.point.dropout, p.point.neg_ratio, p.point.lr, p.score
        );
    }
    println!("best point {}; test F1 {:.4}", r.best, r.test.f1);
    let result = r.to_json();
    let eval = r.test.to_json();
    let preds = write_predictions(&outcome.predictions);
    let ckpt = outcome.model.to_checkpoint();
    finish(
        &output_dir(&cfg, "gridsearch"),
        Manifest::new("gridsearch", &cfg, &data.corpus_hash),
        &[
            ("grid_result.json", result.as_bytes()),
            ("eval.json", eval.as_bytes()),
            ("predictions.jsonl", preds.as_bytes()),
            ("model.ckpt", &ckpt),
        ],
    )
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_config(&args.run)?;
    let data = ExperimentData::load(&cfg)?;
    let runs = run_sweep(&cfg, &data, &args.neg_ratios)?;
    let report = sweep_report(&runs)?;
    let table = report.to_table();
    print!("{table}");
    let json = json_bytes(&serde_json::to_value(&report)?);
    let plot = report.plot_data();
    finish(
        &output_dir(&cfg, "sweep"),
        Manifest::new("sweep", &cfg, &data.corpus_hash),
        &[("sweep.json", &json), ("sweep.tsv", table.as_bytes()), ("sweep_plot.dat", plot.as_bytes())],
    )
}

fn cmd_sieve(args: &RunArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    cfg.model = ModelKind::Sieve;
    let data = ExperimentData::load(&cfg)?;
    let outcome = run_sieve(&cfg, &data)?;
    print!("{}", outcome.report.to_table());
    let candidates = temprel::pairgen::eval_pairs(&outcome.test_set);
    let mut decisions = String::new();
    for r in outcome.state.records(&candidates, &data.schema) {
        decisions.push_str(&serde_json::to_string(&r)?);
        decisions.push('\n');
    }
    let conflicts: Vec<_> = outcome
        .state
        .graphs(&data.schema)
        .into_iter()
        .flat_map(|(doc, g)| g.detect_conflicts().into_iter().map(move |c| json!({"doc_id": doc, "conflict": c})))
        .collect();
    let summary = json_bytes(&json!({
        "sieves": outcome.state.sieve_names,
        "decided": outcome.state.decided.len(),
        "undecided": outcome.state.undecided.len(),
        "discarded": outcome.state.discarded,
        "conflicts": conflicts,
    }));
    let eval = outcome.report.to_json();
    finish(
        &output_dir(&cfg, "sieve-run"),
        Manifest::new("sieve-run", &cfg, &data.corpus_hash),
        &[
            ("eval.json", eval.as_bytes()),
            ("decisions.jsonl", decisions.as_bytes()),
            ("cascade.json", &summary),
        ],
    )
}

fn cmd_graph(args: &GraphArgs) -> Result<()> {
    let cfg = load_config(&args.run)?;
    let schema = match &cfg.corpus.schema {
        Some(p) => LabelSchema::load(p)?,
        None => LabelSchema::default(),
    };
    let docs = match (&cfg.corpus.path, cfg.corpus.synthetic_stories) {
        (Some(p), _) => read_documents(p, &schema)?,
        (None, Some(n)) => generate_synthetic_corpus(n, cfg.corpus.synthetic_seed),
        (None, None) => return Err(usage("graph needs --corpus, --synthetic or a config naming a corpus")),
    };
    let Some(doc) = docs.iter().find(|d| d.doc_id == args.doc) else {
        bail!(temprel::Error::MissingDocuments(vec![args.doc.clone()]));
    };
    let mut graph = match &args.predictions {
        None => TemporalGraph::from_gold(doc, &schema),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut g = TemporalGraph::new(&schema);
            for e in &doc.events {
                let display = doc.sentences[e.sent_idx][e.first..=e.last]
                    .iter()
                    .map(|t| t.surface.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                g.add_node_labeled(&e.event_id, &display);
            }
            for r in read_predictions(&text)?.into_iter().filter(|r| r.doc_id == doc.doc_id) {
                let label = schema.resolve(&r.predicted)?;
                if !label.is_none() {
                    g.add_edge(&r.source, &r.target, label, Provenance::Model)?;
                }
            }
            g
        }
    };
    if args.closure {
        graph = graph.closure();
    }
    let dot = graph.to_dot(&doc.doc_id);
    print!("{dot}");
    let edges = graph.edge_dump();
    let conflicts = json_bytes(&serde_json::to_value(graph.detect_conflicts())?);
    let dot_name = format!("{}.dot", doc.doc_id);
    let hash = corpus_hash(&docs, &schema);
    finish(
        &output_dir(&cfg, "graph"),
        Manifest::new("graph", &cfg, &hash),
        &[(&dot_name, dot.as_bytes()), ("edges.jsonl", edges.as_bytes()), ("conflicts.json", &conflicts)],
    )
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::SieveRun(a) => cmd_sieve(a),
        Command::Graph(a) => cmd_graph(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Failure>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<temprel::Error>() {
            return match e {
                temprel::Error::Config(_) => 1,
                e if e.is_data_error() => 2,
                _ => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
