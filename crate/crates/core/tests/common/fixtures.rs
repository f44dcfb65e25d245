//! Corpus builders with exactly known pair and distance counts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use temprel::corpus::{Document, DocumentRecord, EventRecord, LabelSchema, RelationRecord, TokenRecord};
use temprel::eval::Prediction;
use temprel::pairgen::PairSet;

fn token(surface: &str, pos: &str) -> TokenRecord {
    TokenRecord {
        surface: surface.to_string(),
        pos: pos.to_string(),
    }
}

/// Single-sentence documents whose event pairs are all in the window.
/// The first `positives` pairs (in document and text order) carry BEFORE,
/// the remaining `negatives` are unannotated.
pub fn shaped_corpus(schema: &LabelSchema, positives: usize, negatives: usize, max_events: usize) -> Vec<Document> {
    let mut docs = Vec::new();
    let mut pos_left = positives;
    let mut remaining = positives + negatives;
    while remaining > 0 {
        let mut m = 2;
        while m < max_events && (m + 1) * m / 2 <= remaining {
            m += 1;
        }
        let pairs = m * (m - 1) / 2;
        let doc_id = format!("shaped{:05}", docs.len());
        let sentence = (0..m).map(|i| token(&format!("w{i}"), "VBD")).collect();
        let events = (0..m)
            .map(|i| EventRecord {
                event_id: format!("e{i}"),
                sent_idx: 0,
                first: i,
                last: i,
            })
            .collect();
        let mut relations = Vec::new();
        'outer: for i in 0..m {
            for j in i + 1..m {
                if pos_left == 0 {
                    break 'outer;
                }
                relations.push(RelationRecord {
                    source: format!("e{i}"),
                    target: format!("e{j}"),
                    label: "BEFORE".into(),
                });
                pos_left -= 1;
            }
        }
        let record = DocumentRecord {
            doc_id,
            sentences: vec![sentence],
            events,
            relations,
        };
        docs.push(record.into_document(schema).expect("fixture is well formed"));
        remaining -= pairs;
    }
    docs
}

/// Counts (annotated, unannotated) event pairs at most one sentence apart.
pub fn brute_force_pair_counts(docs: &[Document]) -> (usize, usize) {
    let (mut pos, mut neg) = (0, 0);
    for doc in docs {
        for (a, ea) in doc.events.iter().enumerate() {
            for eb in &doc.events[a + 1..] {
                if ea.sent_idx.abs_diff(eb.sent_idx) > 1 {
                    continue;
                }
                let annotated = doc.relations.iter().any(|r| {
                    (r.source == ea.event_id && r.target == eb.event_id)
                        || (r.source == eb.event_id && r.target == ea.event_id)
                });
                if annotated {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        }
    }
    (pos, neg)
}

/// One gold pair per document; `counts[d]` documents put the two events
/// `d` sentences apart, and the last bucket draws a distance from 4..=8.
pub fn distance_corpus(schema: &LabelSchema, counts: [usize; 5], seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut distances = Vec::new();
    for (bucket, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            distances.push(if bucket < 4 { bucket } else { rng.gen_range(4..=8) });
        }
    }
    distances.shuffle(&mut rng);
    distances
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let sentences = (0..=d).map(|s| vec![token(&format!("s{s}"), "NN"), token(".", ".")]).collect();
            let target_first = if d == 0 { 1 } else { 0 };
            DocumentRecord {
                doc_id: format!("dist{i:05}"),
                sentences,
                events: vec![
                    EventRecord {
                        event_id: "a".into(),
                        sent_idx: 0,
                        first: 0,
                        last: 0,
                    },
                    EventRecord {
                        event_id: "b".into(),
                        sent_idx: d,
                        first: target_first,
                        last: target_first,
                    },
                ],
                relations: vec![RelationRecord {
                    source: "a".into(),
                    target: "b".into(),
                    label: "BEFORE".into(),
                }],
            }
            .into_document(schema)
            .expect("fixture is well formed")
        })
        .collect()
}

/// Predictions over `pairs` with `correct` gold positives right, the other
/// positives predicted NONE, and `predicted - correct` negatives predicted
/// BEFORE. Remaining negatives are predicted NONE.
pub fn counted_predictions(pairs: &PairSet, schema: &LabelSchema, correct: usize, predicted: usize) -> Vec<Prediction> {
    let before = schema.get("BEFORE").unwrap();
    let wrong = predicted - correct;
    assert!(correct <= pairs.positives.len() && wrong <= pairs.negatives.len());
    let mut out = Vec::new();
    for (i, p) in pairs.positives.iter().enumerate() {
        out.push(Prediction {
            key: p.key(),
            label: if i < correct { p.label } else { temprel::corpus::Label::NONE },
        });
    }
    for (i, p) in pairs.negatives.iter().enumerate() {
        out.push(Prediction {
            key: p.key(),
            label: if i < wrong { before } else { temprel::corpus::Label::NONE },
        });
    }
    out
}
