//! Micro-averaged precision, recall and F1 over positive labels.
//!
//! NONE predictions never count as correct. Out-of-window gold pairs are
//! part of the gold total and always count as misses unless explicitly
//! ignored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabelSchema};
use crate::error::{Error, Result};
use crate::pairgen::{PairKey, PairSet};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Prediction {
    pub key: PairKey,
    pub label: Label,
}

/// One line of a prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub source: String,
    pub target: String,
    pub gold: String,
    pub predicted: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

pub fn write_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("prediction records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Resolves dumped labels against the schema.
pub fn predictions_from_records(records: &[PredictionRecord], schema: &LabelSchema) -> Result<Vec<Prediction>> {
    records
        .iter()
        .map(|r| {
            let label = schema
                .get(&r.predicted)
                .ok_or_else(|| Error::Schema(format!("unknown predicted label '{}'", r.predicted)))?;
            Ok(Prediction {
                key: PairKey {
                    doc_id: r.doc_id.clone(),
                    source: r.source.clone(),
                    target: r.target.clone(),
                },
                label,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gold_positive_count: usize,
    pub predicted_positive_count: usize,
    pub correct_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub out_of_window_missed: usize,
    pub labels: Vec<String>,
    /// `confusion[gold][predicted]`, indexed in vocabulary order.
    pub confusion: Vec<Vec<usize>>,
    pub per_label: Vec<LabelScore>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 from raw counts.
pub fn prf(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = ratio(correct, predicted);
    let r = ratio(correct, gold);
    (p, r, harmonic(p, r))
}

impl EvalReport {
    fn from_confusion(schema: &LabelSchema, confusion: Vec<Vec<usize>>, out_of_window_missed: usize) -> Self {
        let n = schema.len();
        let mut per_label = Vec::new();
        let (mut gold, mut predicted, mut correct) = (0, 0, 0);
        for l in 1..n {
            let g: usize = confusion[l].iter().sum();
            let p: usize = (0..n).map(|row| confusion[row][l]).sum();
            let c = confusion[l][l];
            gold += g;
            predicted += p;
            correct += c;
            let (precision, recall, f1) = prf(c, p, g);
            per_label.push(LabelScore {
                label: schema.names()[l].clone(),
                gold: g,
                predicted: p,
                correct: c,
                precision,
                recall,
                f1,
            });
        }
        let (precision, recall, f1) = prf(correct, predicted, gold);
        EvalReport {
            gold_positive_count: gold,
            predicted_positive_count: predicted,
            correct_count: correct,
            precision,
            recall,
            f1,
            out_of_window_missed,
            labels: schema.names().to_vec(),
            confusion,
            per_label,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<12} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}", "label", "gold", "pred", "correct", "precision", "recall", "f1").unwrap();
        for s in &self.per_label {
            writeln!(
                out,
                "{:<12} {:>7} {:>7} {:>7} {:>9.4} {:>9.4} {:>9.4}",
                s.label, s.gold, s.predicted, s.correct, s.precision, s.recall, s.f1
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<12} {:>7} {:>7} {:>7} {:>9.4} {:>9.4} {:>9.4}",
            "micro",
            self.gold_positive_count,
            self.predicted_positive_count,
            self.correct_count,
            self.precision,
            self.recall,
            self.f1
        )
        .unwrap();
        writeln!(out, "out-of-window gold scored as missed: {}", self.out_of_window_missed).unwrap();
        out
    }
}

/// Scores predictions against every candidate of `eval_pairs(pairs)`.
///
/// The predictions must cover exactly those candidates. With `ignore_oow`
/// the out-of-window gold pairs are left out of the gold total.
pub fn score(predictions: &[Prediction], pairs: &PairSet, schema: &LabelSchema, ignore_oow: bool) -> Result<EvalReport> {
    let n = schema.len();
    let mut gold: HashMap<&PairKey, Label> = HashMap::new();
    let keys: Vec<PairKey> = pairs.positives.iter().chain(&pairs.negatives).map(|p| p.key()).collect();
    for (k, p) in keys.iter().zip(pairs.positives.iter().chain(&pairs.negatives)) {
        gold.insert(k, p.label);
    }

    let mut confusion = vec![vec![0usize; n]; n];
    let mut seen: HashSet<&PairKey> = HashSet::with_capacity(predictions.len());
    let mut unexpected = Vec::new();
    for pred in predictions {
        if pred.label.index() >= n {
            return Err(Error::Schema(format!("predicted label index {} outside schema", pred.label.index())));
        }
        match gold.get_key_value(&pred.key) {
            Some((k, &g)) => {
                if !seen.insert(k) {
                    return Err(Error::PredictionMismatch(format!("duplicate prediction for {}", show(&pred.key))));
                }
                confusion[g.index()][pred.label.index()] += 1;
            }
            None => unexpected.push(show(&pred.key)),
        }
    }
    let missing: Vec<String> = keys.iter().filter(|k| !seen.contains(k)).map(show).collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            write!(msg, "{} candidate pair(s) without prediction: {}", missing.len(), preview(&missing)).unwrap();
        }
        if !unexpected.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            write!(msg, "{} prediction(s) for unknown pairs: {}", unexpected.len(), preview(&unexpected)).unwrap();
        }
        return Err(Error::PredictionMismatch(msg));
    }

    let mut oow = 0;
    if !ignore_oow {
        for g in &pairs.out_of_window_gold {
            confusion[g.label.index()][Label::NONE.index()] += 1;
            oow += 1;
        }
    }
    Ok(EvalReport::from_confusion(schema, confusion, oow))
}

fn show(k: &PairKey) -> String {
    format!("{}:{}->{}", k.doc_id, k.source, k.target)
}

fn preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        write!(s, ", ... ({} more)", items.len() - SHOWN).unwrap();
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub neg_ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Orders runs by negative ratio without altering any values.
pub fn sweep_report(runs: &[(f64, EvalReport)]) -> Result<SweepReport> {
    if runs.is_empty() {
        return Err(Error::Invalid("sweep needs at least one run".into()));
    }
    let mut by_ratio: BTreeMap<u64, &EvalReport> = BTreeMap::new();
    for (ratio, report) in runs {
        let ratio = *ratio + 0.0;
        if !ratio.is_finite() || ratio < 0.0 {
            return Err(Error::Invalid(format!("invalid negative ratio {ratio}")));
        }
        // Order-preserving key for non-negative floats.
        if by_ratio.insert(ratio.to_bits(), report).is_some() {
            return Err(Error::Invalid(format!("duplicate sweep point {ratio}")));
        }
    }
    let rows = by_ratio
        .into_iter()
        .map(|(bits, r)| SweepRow {
            neg_ratio: f64::from_bits(bits),
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            correct: r.correct_count,
            predicted: r.predicted_positive_count,
            gold: r.gold_positive_count,
        })
        .collect();
    Ok(SweepReport { rows })
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("neg_ratio\tprecision\trecall\tf1\tcorrect\tpredicted\tgold\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                r.neg_ratio, r.precision, r.recall, r.f1, r.correct, r.predicted, r.gold
            )
            .unwrap();
        }
        out
    }

    /// Two columns, ratio and F1, one point per line.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("# neg_ratio\tf1\n");
        for r in &self.rows {
            writeln!(out, "{}\t{}", r.neg_ratio, r.f1).unwrap();
        }
        out
    }
}
