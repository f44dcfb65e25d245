//! Precision-ordered sieve cascade.
//!
//! Sieves run in order over the undecided pairs. A decision is final: later
//! sieves only see pairs nobody has labeled yet, and a proposal that cannot
//! coexist with the decisions already made in its document (see
//! [`TemporalGraph::admits`]) is dropped. Pairs left undecided are NONE.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label, LabelSchema};
use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::pairgen::{CandidatePair, PairKey};
use crate::tempgraph::{Provenance, TemporalGraph};
use crate::tensor::{softmax, Adam, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SieveKind {
    Rule,
    Trainable,
}

/// Document facts shared by all sieves.
#[derive(Clone, Debug)]
pub struct SieveContext {
    schema: LabelSchema,
    anchors: HashMap<String, HashSet<(usize, usize)>>,
}

impl SieveContext {
    pub fn new<'a, I>(docs: I, schema: &LabelSchema) -> Self
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let anchors = docs
            .into_iter()
            .map(|d| {
                let set = d.events.iter().map(|e| (e.sent_idx, e.first)).collect();
                (d.doc_id.clone(), set)
            })
            .collect();
        SieveContext {
            schema: schema.clone(),
            anchors,
        }
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    /// True when a window position other than the pair's own anchors holds
    /// an event anchor and lies strictly between them.
    pub fn anchor_between(&self, pair: &CandidatePair) -> bool {
        let Some(anchors) = self.anchors.get(&pair.doc_id) else {
            return false;
        };
        pair.between().any(|k| {
            let t = &pair.window[k];
            anchors.contains(&(t.sent_idx, t.tok_idx))
        })
    }
}

pub trait Sieve: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> SieveKind;
    /// A label for the pair, or `None` to abstain. Never returns NONE.
    fn propose(&self, pair: &CandidatePair, ctx: &SieveContext) -> Option<Label>;
}

/// Cue words and the relation they signal from the earlier to the later event.
pub const CONNECTIVES: &[(&str, &str)] = &[
    ("before", "BEFORE"),
    ("then", "BEFORE"),
    ("after", "AFTER"),
    ("while", "OVERLAP"),
    ("as", "OVERLAP"),
    ("during", "IS_INCLUDED"),
];

fn cue_label(word: &str, schema: &LabelSchema) -> Option<Label> {
    let lower = word.to_lowercase();
    CONNECTIVES
        .iter()
        .find(|(w, _)| *w == lower)
        .and_then(|(_, l)| schema.get(l))
        .filter(|l| !l.is_none())
}

/// Labels a pair from explicit connectives between its anchors. Abstains
/// when another event anchor intervenes or the cues disagree.
#[derive(Clone, Debug, Default)]
pub struct ConnectiveSieve;

impl Sieve for ConnectiveSieve {
    fn name(&self) -> &str {
        "connective"
    }

    fn kind(&self) -> SieveKind {
        SieveKind::Rule
    }

    fn propose(&self, pair: &CandidatePair, ctx: &SieveContext) -> Option<Label> {
        if ctx.anchor_between(pair) {
            return None;
        }
        let mut found: Option<Label> = None;
        for k in pair.between() {
            if let Some(l) = cue_label(&pair.window[k].surface, ctx.schema()) {
                match found {
                    Some(prev) if prev != l => return None,
                    _ => found = Some(l),
                }
            }
        }
        found
    }
}

/// BEFORE for two past-tense verbs in one sentence joined by "and".
#[derive(Clone, Debug, Default)]
pub struct TenseAdjacencySieve;

impl Sieve for TenseAdjacencySieve {
    fn name(&self) -> &str {
        "tense_adjacency"
    }

    fn kind(&self) -> SieveKind {
        SieveKind::Rule
    }

    fn propose(&self, pair: &CandidatePair, ctx: &SieveContext) -> Option<Label> {
        if pair.sent_dist != 0 || ctx.anchor_between(pair) {
            return None;
        }
        let past = |k: usize| pair.window[k].pos == "VBD";
        if !past(pair.src_pos) || !past(pair.tgt_pos) {
            return None;
        }
        let mut joined = false;
        for k in pair.between() {
            let w = &pair.window[k].surface;
            if cue_label(w, ctx.schema()).is_some() {
                return None;
            }
            joined |= w.eq_ignore_ascii_case("and");
        }
        if joined {
            ctx.schema().get("BEFORE")
        } else {
            None
        }
    }
}

/// Replays fixed proposals, for example a classifier's predictions.
#[derive(Clone, Debug)]
pub struct LookupSieve {
    name: String,
    proposals: HashMap<PairKey, Label>,
}

impl LookupSieve {
    pub fn new(name: &str, proposals: impl IntoIterator<Item = (PairKey, Label)>) -> Self {
        LookupSieve {
            name: name.to_string(),
            proposals: proposals.into_iter().filter(|(_, l)| !l.is_none()).collect(),
        }
    }
}

impl Sieve for LookupSieve {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> SieveKind {
        SieveKind::Trainable
    }

    fn propose(&self, pair: &CandidatePair, _ctx: &SieveContext) -> Option<Label> {
        self.proposals.get(&pair.key()).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainableSieveConfig {
    /// Minimum probability for a proposal.
    pub threshold: f64,
    /// L2 strength; the penalty is `l2 * ||W||² / (2N)`.
    pub l2: f64,
    pub lr: f64,
    pub iterations: usize,
}

impl Default for TrainableSieveConfig {
    fn default() -> Self {
        TrainableSieveConfig {
            threshold: 0.5,
            l2: 1.0,
            lr: 0.05,
            iterations: 300,
        }
    }
}

const CUE_WORDS: &[&str] = &["before", "after", "then", "while", "as", "during", "and", "when", "until", "since"];

fn distance_bucket(d: i64) -> String {
    let a = d.unsigned_abs();
    let b = match a {
        0..=3 => a.to_string(),
        4..=5 => "4-5".into(),
        6..=10 => "6-10".into(),
        _ => "11+".into(),
    };
    if d < 0 {
        format!("-{b}")
    } else {
        b
    }
}

/// Sparse binary features of a pair.
pub fn pair_features(pair: &CandidatePair) -> Vec<String> {
    let src = &pair.window[pair.src_pos];
    let tgt = &pair.window[pair.tgt_pos];
    let mut f = vec![
        "bias".to_string(),
        format!("tok_dist={}", distance_bucket(pair.tok_dist)),
        format!("sent_dist={}", pair.sent_dist),
        format!("pos={}|{}", src.pos, tgt.pos),
        format!("src={}", src.surface.to_lowercase()),
        format!("tgt={}", tgt.surface.to_lowercase()),
    ];
    let mut cues: Vec<&str> = pair
        .between()
        .filter_map(|k| {
            let w = pair.window[k].surface.to_lowercase();
            CUE_WORDS.iter().copied().find(|c| *c == w)
        })
        .collect();
    cues.sort_unstable();
    cues.dedup();
    f.extend(cues.into_iter().map(|c| format!("cue={c}")));
    f
}

/// Multinomial logistic regression over [`pair_features`].
#[derive(Clone, Debug)]
pub struct TrainableSieve {
    name: String,
    threshold: f64,
    vocab: BTreeMap<String, usize>,
    n_labels: usize,
    /// Row-major `n_labels x |vocab|`.
    weights: Vec<f64>,
}

impl TrainableSieve {
    pub fn fit(pairs: &[CandidatePair], schema: &LabelSchema, cfg: &TrainableSieveConfig) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid("trainable sieve needs training pairs".into()));
        }
        if !(0.0..=1.0).contains(&cfg.threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1], got {}", cfg.threshold)));
        }
        let feats: Vec<Vec<String>> = pairs.iter().map(pair_features).collect();
        let vocab: BTreeMap<String, usize> = {
            let mut names: Vec<&String> = feats.iter().flatten().collect();
            names.sort();
            names.dedup();
            names.into_iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
        };
        let rows: Vec<Vec<usize>> = feats.iter().map(|f| f.iter().map(|n| vocab[n]).collect()).collect();
        let k = schema.len();
        let nf = vocab.len();
        let n = pairs.len() as f64;

        let mut store = ParamStore::new();
        let w = store.add_zeros("sieve.weights", k, nf);
        let mut adam = Adam::new(cfg.lr);
        for _ in 0..cfg.iterations {
            let mut grad = vec![0.0; k * nf];
            {
                let weights = &store.get(w).value;
                for (x, pair) in rows.iter().zip(pairs) {
                    let logits: Vec<f64> = (0..k).map(|c| x.iter().map(|&f| weights[c * nf + f]).sum()).collect();
                    let p = softmax(&logits);
                    for c in 0..k {
                        let y = if c == pair.label.index() { 1.0 } else { 0.0 };
                        let d = (p[c] - y) / n;
                        for &f in x {
                            grad[c * nf + f] += d;
                        }
                    }
                }
                for (g, v) in grad.iter_mut().zip(weights) {
                    *g += cfg.l2 * v / n;
                }
            }
            store.get_mut(w).grad.copy_from_slice(&grad);
            adam.step(&mut store);
        }
        Ok(TrainableSieve {
            name: "trainable".into(),
            threshold: cfg.threshold,
            vocab,
            n_labels: k,
            weights: store.get(w).value.clone(),
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn probabilities(&self, pair: &CandidatePair) -> Vec<f64> {
        let nf = self.vocab.len();
        let idx: Vec<usize> = pair_features(pair).iter().filter_map(|f| self.vocab.get(f).copied()).collect();
        let logits: Vec<f64> = (0..self.n_labels)
            .map(|c| idx.iter().map(|&f| self.weights[c * nf + f]).sum())
            .collect();
        softmax(&logits)
    }

    /// Most probable label over the whole vocabulary, NONE included.
    pub fn classify(&self, pair: &CandidatePair) -> Label {
        Label::from_index(crate::model::argmax(&self.probabilities(pair)))
    }
}

impl Sieve for TrainableSieve {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> SieveKind {
        SieveKind::Trainable
    }

    fn propose(&self, pair: &CandidatePair, _ctx: &SieveContext) -> Option<Label> {
        let p = self.probabilities(pair);
        let best = (1..p.len()).fold(None::<usize>, |b, c| match b {
            Some(b) if p[b] >= p[c] => Some(b),
            _ => Some(c),
        })?;
        (p[best] >= self.threshold).then(|| Label::from_index(best))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    /// Position of the deciding sieve in the cascade.
    pub sieve: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CascadeState {
    pub sieve_names: Vec<String>,
    pub decided: BTreeMap<PairKey, Decision>,
    /// Pairs no sieve labeled, in input order.
    pub undecided: Vec<PairKey>,
    /// Proposals dropped because they contradicted earlier decisions.
    pub discarded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub doc_id: String,
    pub source: String,
    pub target: String,
    pub label: String,
    pub sieve: Option<String>,
}

impl CascadeState {
    pub fn label(&self, key: &PairKey) -> Label {
        self.decided.get(key).map_or(Label::NONE, |d| d.label)
    }

    pub fn predictions(&self, pairs: &[CandidatePair]) -> Vec<Prediction> {
        pairs
            .iter()
            .map(|p| {
                let key = p.key();
                let label = self.label(&key);
                Prediction { key, label }
            })
            .collect()
    }

    /// Decided edges per document, tagged as sieve output.
    pub fn graphs(&self, schema: &LabelSchema) -> BTreeMap<String, TemporalGraph> {
        let mut out: BTreeMap<String, TemporalGraph> = BTreeMap::new();
        for (key, d) in &self.decided {
            out.entry(key.doc_id.clone())
                .or_insert_with(|| TemporalGraph::new(schema))
                .add_edge(&key.source, &key.target, d.label, Provenance::Sieve)
                .expect("cascade decisions are unique per pair");
        }
        out
    }

    pub fn records(&self, pairs: &[CandidatePair], schema: &LabelSchema) -> Vec<DecisionRecord> {
        pairs
            .iter()
            .map(|p| {
                let d = self.decided.get(&p.key());
                DecisionRecord {
                    doc_id: p.doc_id.clone(),
                    source: p.source.clone(),
                    target: p.target.clone(),
                    label: schema.name(d.map_or(Label::NONE, |d| d.label)).to_string(),
                    sieve: d.map(|d| self.sieve_names[d.sieve].clone()),
                }
            })
            .collect()
    }
}

/// Runs `sieves` in order over `pairs`.
pub fn run_cascade(sieves: &[&dyn Sieve], pairs: &[CandidatePair], ctx: &SieveContext) -> CascadeState {
    let schema = ctx.schema();
    let mut state = CascadeState {
        sieve_names: sieves.iter().map(|s| s.name().to_string()).collect(),
        ..Default::default()
    };
    let mut graphs: HashMap<&str, TemporalGraph> = HashMap::new();
    let mut open: Vec<usize> = (0..pairs.len()).collect();

    for (si, sieve) in sieves.iter().enumerate() {
        let proposals: Vec<Option<Label>> = open
            .par_iter()
            .map(|&i| sieve.propose(&pairs[i], ctx).filter(|l| !l.is_none()))
            .collect();
        let mut still_open = Vec::with_capacity(open.len());
        for (&i, proposal) in open.iter().zip(proposals) {
            let pair = &pairs[i];
            let Some(label) = proposal else {
                still_open.push(i);
                continue;
            };
            let g = graphs
                .entry(pair.doc_id.as_str())
                .or_insert_with(|| TemporalGraph::new(schema));
            if g.admits(&pair.source, &pair.target, label) {
                g.add_edge(&pair.source, &pair.target, label, Provenance::Sieve)
                    .expect("undecided pairs have no edge");
                state.decided.insert(pair.key(), Decision { label, sieve: si });
            } else {
                state.discarded += 1;
                still_open.push(i);
            }
        }
        open = still_open;
    }
    state.undecided = open.into_iter().map(|i| pairs[i].key()).collect();
    state
}
