//! Candidate event pairs inside the two-sentence window.
//!
//! Every pair of events in the same or neighboring sentences becomes a
//! candidate. Annotated pairs are positives (label normalized so the source
//! is the textually earlier event), the rest are NONE negatives. Annotated
//! pairs further apart are kept aside: they are never classified and count
//! as misses at scoring time.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EventMention, Label, LabelSchema};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowToken {
    pub surface: String,
    pub pos: String,
    pub sent_idx: usize,
    pub tok_idx: usize,
}

/// Identifies a candidate across pair sets and prediction dumps.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub doc_id: String,
    pub source: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePair {
    pub doc_id: String,
    /// Textually earlier event.
    pub source: String,
    pub target: String,
    pub label: Label,
    /// Tokens of the sentence, or both neighboring sentences concatenated.
    pub window: Vec<WindowToken>,
    pub src_pos: usize,
    pub tgt_pos: usize,
    pub sent_dist: usize,
    /// `tgt_pos - src_pos`.
    pub tok_dist: i64,
}

impl CandidatePair {
    pub fn key(&self) -> PairKey {
        PairKey {
            doc_id: self.doc_id.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }

    /// Token distance scaled by window length, in [-1, 1].
    pub fn normalized_distance(&self) -> f64 {
        self.tok_dist as f64 / self.window.len().max(1) as f64
    }

    /// Window positions strictly between the two anchors.
    pub fn between(&self) -> std::ops::Range<usize> {
        let (lo, hi) = if self.src_pos <= self.tgt_pos {
            (self.src_pos, self.tgt_pos)
        } else {
            (self.tgt_pos, self.src_pos)
        };
        lo + 1..hi
    }
}

/// A gold annotation outside the window, direction-normalized like a candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub doc_id: String,
    pub source: String,
    pub target: String,
    pub label: Label,
    pub sent_dist: usize,
}

impl GoldPair {
    pub fn key(&self) -> PairKey {
        PairKey {
            doc_id: self.doc_id.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    pub positives: Vec<CandidatePair>,
    pub negatives: Vec<CandidatePair>,
    pub out_of_window_gold: Vec<GoldPair>,
}

impl PairSet {
    pub fn extend(&mut self, other: PairSet) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
        self.out_of_window_gold.extend(other.out_of_window_gold);
    }

    pub fn stats(&self) -> PairStats {
        PairStats {
            positives: self.positives.len(),
            negatives: self.negatives.len(),
            out_of_window_gold: self.out_of_window_gold.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub positives: usize,
    pub negatives: usize,
    pub out_of_window_gold: usize,
}

impl PairStats {
    /// In-window negatives per in-window positive.
    pub fn negative_ratio(&self) -> f64 {
        if self.positives == 0 {
            0.0
        } else {
            self.negatives as f64 / self.positives as f64
        }
    }

    /// Negatives per gold annotation, counting out-of-window gold too.
    pub fn negative_ratio_all_gold(&self) -> f64 {
        let gold = self.positives + self.out_of_window_gold;
        if gold == 0 {
            0.0
        } else {
            self.negatives as f64 / gold as f64
        }
    }
}

fn text_order(events: &[EventMention]) -> Vec<&EventMention> {
    let mut ordered: Vec<&EventMention> = events.iter().collect();
    ordered.sort_by(|a, b| a.head_tok.cmp(&b.head_tok).then_with(|| a.event_id.cmp(&b.event_id)));
    ordered
}

fn window_of(doc: &Document, a: &EventMention, b: &EventMention) -> (Vec<WindowToken>, usize, usize) {
    let first = a.sent_idx.min(b.sent_idx);
    let last = a.sent_idx.max(b.sent_idx);
    let mut window = Vec::new();
    let mut offsets = [0usize; 2];
    for s in first..=last {
        if s == a.sent_idx {
            offsets[0] = window.len() + a.first;
        }
        if s == b.sent_idx {
            offsets[1] = window.len() + b.first;
        }
        window.extend(doc.sentences[s].iter().map(|t| WindowToken {
            surface: t.surface.clone(),
            pos: t.pos.clone(),
            sent_idx: t.sent_idx,
            tok_idx: t.tok_idx,
        }));
    }
    (window, offsets[0], offsets[1])
}

/// Enumerates candidates for one document.
pub fn build_pairs(doc: &Document, schema: &LabelSchema) -> PairSet {
    let mut gold: HashMap<(&str, &str), Label> = HashMap::new();
    for r in &doc.relations {
        gold.insert((r.source.as_str(), r.target.as_str()), r.label);
    }
    let lookup = |src: &str, tgt: &str| -> Option<Label> {
        gold.get(&(src, tgt))
            .copied()
            .or_else(|| gold.get(&(tgt, src)).map(|&l| schema.inverse(l)))
    };

    let events = text_order(&doc.events);
    let mut set = PairSet::default();
    for (i, a) in events.iter().enumerate() {
        for b in &events[i + 1..] {
            let label = lookup(&a.event_id, &b.event_id);
            let sent_dist = a.sent_idx.abs_diff(b.sent_idx);
            if a.head_tok == b.head_tok {
                log::warn!(
                    "{}: events {} and {} share anchor token {}; pair dropped",
                    doc.doc_id,
                    a.event_id,
                    b.event_id,
                    a.head_tok
                );
                continue;
            }
            if sent_dist > 1 {
                if let Some(label) = label {
                    set.out_of_window_gold.push(GoldPair {
                        doc_id: doc.doc_id.clone(),
                        source: a.event_id.clone(),
                        target: b.event_id.clone(),
                        label,
                        sent_dist,
                    });
                }
                continue;
            }
            let (window, src_pos, tgt_pos) = window_of(doc, a, b);
            let pair = CandidatePair {
                doc_id: doc.doc_id.clone(),
                source: a.event_id.clone(),
                target: b.event_id.clone(),
                label: label.unwrap_or(Label::NONE),
                window,
                src_pos,
                tgt_pos,
                sent_dist,
                tok_dist: tgt_pos as i64 - src_pos as i64,
            };
            if label.is_some() {
                set.positives.push(pair);
            } else {
                set.negatives.push(pair);
            }
        }
    }
    set
}

/// Builds pairs for many documents in parallel; output follows input order.
pub fn build_corpus_pairs<'a, I>(docs: I, schema: &LabelSchema) -> PairSet
where
    I: IntoIterator<Item = &'a Document>,
{
    let docs: Vec<&Document> = docs.into_iter().collect();
    let parts: Vec<PairSet> = docs.par_iter().map(|d| build_pairs(d, schema)).collect();
    let mut all = PairSet::default();
    for p in parts {
        all.extend(p);
    }
    all
}

/// Number of negatives drawn for a given ratio.
pub fn negative_budget(positives: usize, negatives: usize, ratio: f64) -> usize {
    let want = (ratio * positives as f64 + 1e-9).floor() as usize;
    want.min(negatives)
}

/// Draws `min(floor(ratio * |positives|), |negatives|)` negatives uniformly
/// without replacement. The result keeps the original relative order.
pub fn sample_negatives(pairs: &PairSet, ratio: f64, seed: u64) -> Result<Vec<CandidatePair>> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("negative ratio must be >= 0, got {ratio}")));
    }
    let n = negative_budget(pairs.positives.len(), pairs.negatives.len(), ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pairs.negatives.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pairs.negatives[i].clone()).collect())
}

/// Positives plus a ratio-controlled negative sample.
pub fn training_pairs(pairs: &PairSet, ratio: f64, seed: u64) -> Result<Vec<CandidatePair>> {
    let mut out = pairs.positives.clone();
    out.extend(sample_negatives(pairs, ratio, seed)?);
    Ok(out)
}

/// Positives and every negative.
pub fn eval_pairs(pairs: &PairSet) -> Vec<CandidatePair> {
    let mut out = Vec::with_capacity(pairs.positives.len() + pairs.negatives.len());
    out.extend(pairs.positives.iter().cloned());
    out.extend(pairs.negatives.iter().cloned());
    out
}

pub const DISTANCE_BUCKETS: [&str; 5] = ["0", "1", "2", "3", ">=4"];

/// Sentence distance of gold pairs in buckets 0, 1, 2, 3, >=4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub counts: [usize; 5],
}

impl DistanceHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn percentages(&self) -> [f64; 5] {
        let total = self.total() as f64;
        self.counts.map(|c| 100.0 * c as f64 / total)
    }

    /// Share of gold pairs inside the two-sentence window.
    pub fn in_window_percent(&self) -> f64 {
        let p = self.percentages();
        p[0] + p[1]
    }
}

pub fn distance_histogram<'a, I>(docs: I) -> Result<DistanceHistogram>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut hist = DistanceHistogram::default();
    for doc in docs {
        let sent: HashMap<&str, usize> = doc
            .events
            .iter()
            .map(|e| (e.event_id.as_str(), e.sent_idx))
            .collect();
        for r in &doc.relations {
            let d = sent[r.source.as_str()].abs_diff(sent[r.target.as_str()]);
            hist.counts[d.min(4)] += 1;
        }
    }
    if hist.total() == 0 {
        return Err(Error::Invalid("no gold pairs".into()));
    }
    Ok(hist)
}

/// One line of a pair dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub kind: PairKind,
    pub doc_id: String,
    pub source: String,
    pub target: String,
    pub label: String,
    pub sent_dist: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tok_dist: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_pos: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_pos: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub window: Vec<WindowToken>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Positive,
    Negative,
    OutOfWindow,
}

fn candidate_record(kind: PairKind, p: &CandidatePair, schema: &LabelSchema) -> PairRecord {
    PairRecord {
        kind,
        doc_id: p.doc_id.clone(),
        source: p.source.clone(),
        target: p.target.clone(),
        label: schema.name(p.label).to_string(),
        sent_dist: p.sent_dist,
        tok_dist: Some(p.tok_dist),
        src_pos: Some(p.src_pos),
        tgt_pos: Some(p.tgt_pos),
        window: p.window.clone(),
    }
}

/// Serializes a pair set as JSON lines.
pub fn write_pair_set(set: &PairSet, schema: &LabelSchema) -> String {
    let mut out = String::new();
    let mut push = |rec: PairRecord| {
        out.push_str(&serde_json::to_string(&rec).expect("pair records serialize"));
        out.push('\n');
    };
    for p in &set.positives {
        push(candidate_record(PairKind::Positive, p, schema));
    }
    for p in &set.negatives {
        push(candidate_record(PairKind::Negative, p, schema));
    }
    for g in &set.out_of_window_gold {
        push(PairRecord {
            kind: PairKind::OutOfWindow,
            doc_id: g.doc_id.clone(),
            source: g.source.clone(),
            target: g.target.clone(),
            label: schema.name(g.label).to_string(),
            sent_dist: g.sent_dist,
            tok_dist: None,
            src_pos: None,
            tgt_pos: None,
            window: Vec::new(),
        });
    }
    out
}

pub fn read_pair_set(text: &str, schema: &LabelSchema) -> Result<PairSet> {
    let mut set = PairSet::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let label = schema
            .get(&rec.label)
            .ok_or_else(|| Error::Schema(format!("unknown relation label '{}'", rec.label)))?;
        let missing = |field: &str| Error::Format {
            line: lineno + 1,
            message: format!("candidate record without {field}"),
        };
        match rec.kind {
            PairKind::OutOfWindow => set.out_of_window_gold.push(GoldPair {
                doc_id: rec.doc_id,
                source: rec.source,
                target: rec.target,
                label,
                sent_dist: rec.sent_dist,
            }),
            kind => {
                let pair = CandidatePair {
                    doc_id: rec.doc_id,
                    source: rec.source,
                    target: rec.target,
                    label,
                    src_pos: rec.src_pos.ok_or_else(|| missing("src_pos"))?,
                    tgt_pos: rec.tgt_pos.ok_or_else(|| missing("tgt_pos"))?,
                    tok_dist: rec.tok_dist.ok_or_else(|| missing("tok_dist"))?,
                    sent_dist: rec.sent_dist,
                    window: rec.window,
                };
                if pair.src_pos >= pair.window.len() || pair.tgt_pos >= pair.window.len() {
                    return Err(Error::Format {
                        line: lineno + 1,
                        message: "anchor outside window".into(),
                    });
                }
                if kind == PairKind::Positive {
                    set.positives.push(pair);
                } else {
                    set.negatives.push(pair);
                }
            }
        }
    }
    Ok(set)
}
