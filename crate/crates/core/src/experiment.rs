//! Run configuration, grid search, cross-validation, negative-ratio sweeps
//! and artifact manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    generate_synthetic_corpus, read_documents, select, serialize_documents, CorpusSplit, Document, LabelSchema,
};
use crate::embed::{load_contextual_vectors, load_static_vectors, EmbeddingProvider, OovPolicy, ProviderKind};
use crate::error::{Error, Result};
use crate::eval::{score, EvalReport, PredictionRecord};
use crate::model::{evaluate, train, PairClassifier, PairClassifierConfig, TrainHistory};
use crate::pairgen::{build_corpus_pairs, eval_pairs, training_pairs, PairSet};
use crate::sieve::{
    run_cascade, CascadeState, ConnectiveSieve, Sieve, SieveContext, TenseAdjacencySieve, TrainableSieve,
    TrainableSieveConfig,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Select on the dev split.
    #[default]
    Fixed,
    /// Select by k-fold cross-validation over the training documents.
    Cv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Bilstm,
    Sieve,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    /// A `.jsonl` file or a directory of them.
    pub path: Option<PathBuf>,
    /// Generate this many synthetic stories instead of reading `path`.
    pub synthetic_stories: Option<usize>,
    pub synthetic_seed: u64,
    /// Split file.
    pub split: Option<PathBuf>,
    /// Sequential (train, dev, test) sizes over the id-sorted corpus.
    pub split_sizes: Option<[usize; 3]>,
    pub schema: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub kind: ProviderKind,
    pub dim: usize,
    pub path: Option<PathBuf>,
    /// Seed of the random provider.
    pub seed: u64,
    pub oov: OovPolicy,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            kind: ProviderKind::Random,
            dim: 50,
            path: None,
            seed: 0,
            oov: OovPolicy::Zero,
        }
    }
}

/// Classifier settings outside the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub mlp_hidden: usize,
    pub pos_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = PairClassifierConfig::default();
        TrainSpec {
            mlp_hidden: d.mlp_hidden,
            pos_dim: d.pos_dim,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub hidden_size: Vec<usize>,
    pub dropout: Vec<f64>,
    pub neg_ratio: Vec<f64>,
    pub lr: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            hidden_size: vec![40],
            dropout: vec![0.6],
            neg_ratio: vec![0.5],
            lr: vec![0.0005],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieveSpec {
    pub order: Vec<String>,
    pub trainable: TrainableSieveConfig,
}

impl Default for SieveSpec {
    fn default() -> Self {
        SieveSpec {
            order: SIEVE_NAMES.iter().map(|s| s.to_string()).collect(),
            trainable: TrainableSieveConfig::default(),
        }
    }
}

pub const SIEVE_NAMES: &[&str] = &["connective", "tense_adjacency", "trainable"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: SelectionMode,
    pub folds: usize,
    pub model: ModelKind,
    pub output: Option<PathBuf>,
    /// Worker threads for grid points; all logical cores when unset.
    pub threads: Option<usize>,
    pub ignore_oow: bool,
    pub corpus: CorpusSpec,
    pub embedding: EmbeddingSpec,
    pub train: TrainSpec,
    pub grid: GridSpec,
    pub sieve: SieveSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: SelectionMode::Fixed,
            folds: 5,
            model: ModelKind::Bilstm,
            output: None,
            threads: None,
            ignore_oow: false,
            corpus: CorpusSpec::default(),
            embedding: EmbeddingSpec::default(),
            train: TrainSpec::default(),
            grid: GridSpec::default(),
            sieve: SieveSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.corpus.split);
        fix(&mut self.corpus.schema);
        fix(&mut self.embedding.path);
        fix(&mut self.output);
    }

    /// Checks everything that can be checked without data and reports all
    /// problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut p: Vec<String> = Vec::new();
        let c = &self.corpus;
        match (&c.path, c.synthetic_stories) {
            (Some(_), Some(_)) => p.push("corpus: set either path or synthetic_stories, not both".into()),
            (None, None) => p.push("corpus: path or synthetic_stories is required".into()),
            (None, Some(0)) => p.push("corpus: synthetic_stories must be at least 1".into()),
            _ => {}
        }
        match (&c.split, c.split_sizes) {
            (Some(_), Some(_)) => p.push("corpus: set either split or split_sizes, not both".into()),
            (None, None) => p.push("corpus: split or split_sizes is required".into()),
            _ => {}
        }
        if self.embedding.dim == 0 {
            p.push("embedding: dim must be at least 1".into());
        }
        if self.embedding.kind != ProviderKind::Random && self.embedding.path.is_none() {
            p.push("embedding: path is required for static and contextual vectors".into());
        }
        let g = &self.grid;
        for (name, empty) in [
            ("hidden_size", g.hidden_size.is_empty()),
            ("dropout", g.dropout.is_empty()),
            ("neg_ratio", g.neg_ratio.is_empty()),
            ("lr", g.lr.is_empty()),
        ] {
            if empty {
                p.push(format!("grid: {name} must list at least one value"));
            }
        }
        if g.neg_ratio.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            p.push("grid: neg_ratio values must be non-negative".into());
        }
        for point in self.grid_points() {
            if let Err(Error::Config(msg)) = self.classifier_config(&point).validate() {
                p.push(format!("grid point {}: {msg}", point.index));
            }
        }
        if self.mode == SelectionMode::Cv && self.folds < 2 {
            p.push(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.threads == Some(0) {
            p.push("threads must be at least 1".into());
        }
        for name in &self.sieve.order {
            if !SIEVE_NAMES.contains(&name.as_str()) {
                p.push(format!("sieve: unknown sieve '{name}' (known: {})", SIEVE_NAMES.join(", ")));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("\n")))
        }
    }

    /// Grid points in enumeration order (hidden size outermost, lr innermost).
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &hidden_size in &g.hidden_size {
            for &dropout in &g.dropout {
                for &neg_ratio in &g.neg_ratio {
                    for &lr in &g.lr {
                        let index = out.len();
                        out.push(GridPoint {
                            index,
                            hidden_size,
                            dropout,
                            neg_ratio,
                            lr,
                            seed: self.seed ^ index as u64,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn classifier_config(&self, point: &GridPoint) -> PairClassifierConfig {
        PairClassifierConfig {
            hidden_size: point.hidden_size,
            mlp_hidden: self.train.mlp_hidden,
            dropout: point.dropout,
            pos_dim: self.train.pos_dim,
            lr: point.lr,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: point.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub hidden_size: usize,
    pub dropout: f64,
    pub neg_ratio: f64,
    pub lr: f64,
    pub seed: u64,
}

/// Git-style content hash (`blob <len>\0` prefix, SHA-256) of the canonical
/// corpus serialization.
pub fn corpus_hash(docs: &[Document], schema: &LabelSchema) -> String {
    content_hash(serialize_documents(docs, schema).as_bytes())
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_provider(spec: &EmbeddingSpec) -> Result<EmbeddingProvider> {
    let provider = match spec.kind {
        ProviderKind::Random => EmbeddingProvider::random(spec.dim, spec.seed),
        ProviderKind::Static => {
            let path = spec.path.as_deref().ok_or_else(|| Error::Config("static vectors need a path".into()))?;
            load_static_vectors(path, spec.dim)?
        }
        ProviderKind::Contextual => {
            let path = spec
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("contextual vectors need a path".into()))?;
            let p = load_contextual_vectors(path)?;
            if p.dim() != spec.dim {
                return Err(Error::Config(format!(
                    "contextual vectors have dim {}, config says {}",
                    p.dim(),
                    spec.dim
                )));
            }
            p
        }
    };
    Ok(provider.with_oov_policy(spec.oov))
}

/// Everything a run reads, loaded once.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub schema: LabelSchema,
    pub docs: Vec<Document>,
    pub split: CorpusSplit,
    pub word: EmbeddingProvider,
    pub corpus_hash: String,
}

impl ExperimentData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let c = &cfg.corpus;
        let schema = match &c.schema {
            Some(p) => LabelSchema::load(p)?,
            None => LabelSchema::default(),
        };
        let docs = match (&c.path, c.synthetic_stories) {
            (Some(p), _) => read_documents(p, &schema)?,
            (None, Some(n)) => generate_synthetic_corpus(n, c.synthetic_seed),
            (None, None) => unreachable!("validated"),
        };
        let split = match (&c.split, c.split_sizes) {
            (Some(p), _) => CorpusSplit::load(p)?,
            (None, Some([tr, dv, te])) => {
                let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
                CorpusSplit::sequential(&ids, tr, dv, te)?
            }
            (None, None) => unreachable!("validated"),
        };
        split.validate(&docs)?;
        if cfg.mode == SelectionMode::Cv && !split.dev.is_empty() {
            return Err(Error::Config("cross-validation mode requires an empty dev split".into()));
        }
        let word = build_provider(&cfg.embedding)?;
        let corpus_hash = corpus_hash(&docs, &schema);
        Ok(ExperimentData {
            schema,
            docs,
            split,
            word,
            corpus_hash,
        })
    }

    pub fn pairs(&self, ids: &[String]) -> PairSet {
        build_corpus_pairs(select(&self.docs, ids), &self.schema)
    }
}

/// Document-level folds: ids shuffled under `seed`, then dealt round-robin.
/// Each fold is sorted.
pub fn cv_folds(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::Config(format!("{k} folds requested for {} documents", ids.len())));
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in shuffled.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<EvalReport>,
    pub mean_f1: f64,
}

/// Trains one classifier at a grid point. `dev` enables early stopping.
pub fn train_point(
    cfg: &RunConfig,
    data: &ExperimentData,
    point: &GridPoint,
    train_set: &PairSet,
    dev: Option<&PairSet>,
) -> Result<(PairClassifier, TrainHistory)> {
    let pairs = training_pairs(train_set, point.neg_ratio, point.seed)?;
    let mut model = PairClassifier::for_pairs(
        cfg.classifier_config(point),
        &data.schema,
        data.word.dim(),
        &eval_pairs(train_set),
    )?;
    let history = train(&mut model, &pairs, dev, &data.word)?;
    Ok((model, history))
}

/// k-fold cross-validation over `train_ids` at one grid point.
pub fn run_cv(cfg: &RunConfig, data: &ExperimentData, point: &GridPoint, train_ids: &[String], k: usize) -> Result<CvResult> {
    let folds = cv_folds(train_ids, k, cfg.seed)?;
    let mut reports = Vec::with_capacity(k);
    for held_out in &folds {
        let rest: Vec<String> = folds.iter().filter(|f| *f != held_out).flatten().cloned().collect();
        let (model, _) = train_point(cfg, data, point, &data.pairs(&rest), None)?;
        let (report, _) = evaluate(&model, &data.pairs(held_out), &data.word, cfg.ignore_oow)?;
        reports.push(report);
    }
    let mean_f1 = reports.iter().map(|r| r.f1).sum::<f64>() / reports.len() as f64;
    Ok(CvResult { folds: reports, mean_f1 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    #[serde(flatten)]
    pub point: GridPoint,
    /// Dev micro-F1, or mean fold micro-F1 in CV mode.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_f1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub corpus_hash: String,
    pub mode: SelectionMode,
    pub points: Vec<PointResult>,
    pub best: usize,
    pub test: EvalReport,
}

impl GridResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("grid results serialize");
        s.push('\n');
        s
    }
}

/// Grid search result plus the final model and its test predictions.
pub struct GridOutcome {
    pub result: GridResult,
    pub model: PairClassifier,
    pub predictions: Vec<PredictionRecord>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Index of the highest score; ties go to the earliest.
fn best_index(scores: &[f64]) -> usize {
    crate::model::argmax(scores)
}

pub fn run_grid(cfg: &RunConfig, data: &ExperimentData) -> Result<GridOutcome> {
    cfg.validate()?;
    if cfg.model != ModelKind::Bilstm {
        return Err(Error::Config("grid search applies to the bilstm model".into()));
    }
    let split = &data.split;
    let points = cfg.grid_points();
    let train_set = data.pairs(&split.train);
    let test_set = data.pairs(&split.test);
    let dev_set = match cfg.mode {
        SelectionMode::Fixed => {
            if split.dev.is_empty() {
                return Err(Error::Config(
                    "fixed-split selection needs a dev split; use mode = \"cv\" for dev-less corpora".into(),
                ));
            }
            Some(data.pairs(&split.dev))
        }
        SelectionMode::Cv => None,
    };

    let results: Vec<PointResult> = with_pool(cfg.threads, || {
        points
            .par_iter()
            .map(|point| match &dev_set {
                Some(dev) => {
                    let (model, history) = train_point(cfg, data, point, &train_set, Some(dev))?;
                    let (report, _) = evaluate(&model, dev, &data.word, cfg.ignore_oow)?;
                    Ok(PointResult {
                        point: point.clone(),
                        score: report.f1,
                        fold_f1: Vec::new(),
                        epochs: Some(history.epochs.len()),
                    })
                }
                None => {
                    let cv = run_cv(cfg, data, point, &split.train, cfg.folds)?;
                    Ok(PointResult {
                        point: point.clone(),
                        score: cv.mean_f1,
                        fold_f1: cv.folds.iter().map(|r| r.f1).collect(),
                        epochs: None,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let best = best_index(&results.iter().map(|r| r.score).collect::<Vec<_>>());
    let (model, _) = train_point(cfg, data, &points[best], &train_set, dev_set.as_ref())?;
    let (test, predictions) = evaluate(&model, &test_set, &data.word, cfg.ignore_oow)?;
    Ok(GridOutcome {
        result: GridResult {
            corpus_hash: data.corpus_hash.clone(),
            mode: cfg.mode,
            points: results,
            best,
            test,
        },
        model,
        predictions,
    })
}

/// Trains and tests one model per negative ratio, other settings taken from
/// the first grid point.
pub fn run_sweep(cfg: &RunConfig, data: &ExperimentData, ratios: &[f64]) -> Result<Vec<(f64, EvalReport)>> {
    cfg.validate()?;
    let base = cfg.grid_points().remove(0);
    let train_set = data.pairs(&data.split.train);
    let test_set = data.pairs(&data.split.test);
    let dev_set = (!data.split.dev.is_empty()).then(|| data.pairs(&data.split.dev));
    with_pool(cfg.threads, || {
        ratios
            .par_iter()
            .enumerate()
            .map(|(i, &ratio)| {
                let point = GridPoint {
                    index: i,
                    neg_ratio: ratio,
                    seed: cfg.seed ^ i as u64,
                    ..base.clone()
                };
                let (model, _) = train_point(cfg, data, &point, &train_set, dev_set.as_ref())?;
                Ok((ratio, evaluate(&model, &test_set, &data.word, cfg.ignore_oow)?.0))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Builds the configured cascade; the trainable sieve is fit on every
/// candidate of `train_set`.
pub fn build_sieves(spec: &SieveSpec, train_set: &PairSet, schema: &LabelSchema) -> Result<Vec<Box<dyn Sieve>>> {
    spec.order
        .iter()
        .map(|name| -> Result<Box<dyn Sieve>> {
            match name.as_str() {
                "connective" => Ok(Box::new(ConnectiveSieve)),
                "tense_adjacency" => Ok(Box::new(TenseAdjacencySieve)),
                "trainable" => Ok(Box::new(TrainableSieve::fit(&eval_pairs(train_set), schema, &spec.trainable)?)),
                other => Err(Error::Config(format!("unknown sieve '{other}'"))),
            }
        })
        .collect()
}

pub struct SieveOutcome {
    pub report: EvalReport,
    pub state: CascadeState,
    pub test_set: PairSet,
}

/// Runs the configured cascade on the test split.
pub fn run_sieve(cfg: &RunConfig, data: &ExperimentData) -> Result<SieveOutcome> {
    cfg.validate()?;
    let train_set = data.pairs(&data.split.train);
    let test_set = data.pairs(&data.split.test);
    let sieves = build_sieves(&cfg.sieve, &train_set, &data.schema)?;
    let refs: Vec<&dyn Sieve> = sieves.iter().map(|s| s.as_ref()).collect();
    let candidates = eval_pairs(&test_set);
    let ctx = SieveContext::new(select(&data.docs, &data.split.test), &data.schema);
    let state = run_cascade(&refs, &candidates, &ctx);
    let report = score(&state.predictions(&candidates), &test_set, &data.schema, cfg.ignore_oow)?;
    Ok(SieveOutcome {
        report,
        state,
        test_set,
    })
}

/// Snapshot that suffices to re-run a command identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub corpus_hash: String,
    pub config: RunConfig,
    /// Artifact file name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    /// The config snapshot omits the output directory.
    pub fn new(command: &str, cfg: &RunConfig, corpus_hash: &str) -> Self {
        let mut config = cfg.clone();
        config.output = None;
        Manifest {
            tool: "temprel".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            corpus_hash: corpus_hash.into(),
            config,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifests serialize");
        s.push('\n');
        s
    }
}

/// Writes artifacts into `dir` and a `manifest.json` listing their hashes.
pub fn write_artifacts(dir: &Path, mut manifest: Manifest, files: &[(&str, &[u8])]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config() -> RunConfig {
        RunConfig::from_toml(
            r#"
seed = 3
[corpus]
synthetic_stories = 12
synthetic_seed = 2
split_sizes = [8, 2, 2]
[embedding]
dim = 6
[train]
mlp_hidden = 6
pos_dim = 3
max_epochs = 2
patience = 2
[grid]
hidden_size = [4, 5]
lr = [0.01]
"#,
        )
        .unwrap()
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = synthetic_config();
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.grid.dropout, vec![0.6]);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut cfg = RunConfig::default();
        cfg.grid.lr.clear();
        cfg.sieve.order.push("oracle".into());
        let msg = match cfg.validate() {
            Err(Error::Config(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(msg.contains("synthetic_stories"));
        assert!(msg.contains("split_sizes"));
        assert!(msg.contains("lr must list"));
        assert!(msg.contains("oracle"));
    }

    #[test]
    fn grid_enumeration_and_seeds() {
        let mut cfg = synthetic_config();
        cfg.grid.dropout = vec![0.0, 0.5];
        let points = cfg.grid_points();
        assert_eq!(points.len(), 4);
        assert_eq!((points[1].hidden_size, points[1].dropout), (4, 0.5));
        assert!(points.iter().all(|p| p.seed == 3 ^ p.index as u64));
    }

    #[test]
    fn folds_partition_documents() {
        let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let folds = cv_folds(&ids, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<String> = folds.concat();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(all, expected);
        assert_eq!(cv_folds(&ids, 10, 1).unwrap().iter().map(Vec::len).max(), Some(1));
        assert!(cv_folds(&ids, 11, 1).is_err());
        assert_eq!(cv_folds(&ids, 5, 1).unwrap(), folds);
    }

    #[test]
    fn content_hash_matches_git() {
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn grid_is_deterministic_and_picks_argmax() {
        let cfg = synthetic_config();
        let data = ExperimentData::load(&cfg).unwrap();
        let a = run_grid(&cfg, &data).unwrap().result;
        let b = run_grid(&cfg, &data).unwrap().result;
        assert_eq!(a.to_json(), b.to_json());
        let best = a.points[a.best].score;
        assert!(a.points.iter().all(|p| p.score <= best));
        assert!(a.points[..a.best].iter().all(|p| p.score < best));
    }

    #[test]
    fn cv_mean_is_mean_of_folds() {
        let mut cfg = synthetic_config();
        cfg.mode = SelectionMode::Cv;
        cfg.folds = 3;
        cfg.corpus.split_sizes = Some([9, 0, 3]);
        let data = ExperimentData::load(&cfg).unwrap();
        let point = &cfg.grid_points()[0];
        let cv = run_cv(&cfg, &data, point, &data.split.train, 3).unwrap();
        let mean = cv.folds.iter().map(|r| r.f1).sum::<f64>() / 3.0;
        assert!((cv.mean_f1 - mean).abs() <= 1e-12);
    }

    #[test]
    fn cv_rejects_dev_split() {
        let mut cfg = synthetic_config();
        cfg.mode = SelectionMode::Cv;
        assert!(matches!(ExperimentData::load(&cfg), Err(Error::Config(_))));
    }
}
