//! Random cascades over random documents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use temprel::corpus::{Document, DocumentRecord, EventRecord, LabelSchema, TokenRecord};
use temprel::pairgen::{build_corpus_pairs, eval_pairs};
use temprel::sieve::{run_cascade, LookupSieve, Sieve, SieveContext};

const LABELS: [&str; 5] = ["BEFORE", "AFTER", "INCLUDES", "IS_INCLUDED", "OVERLAP"];

pub fn random_doc(schema: &LabelSchema, id: &str, rng: &mut ChaCha8Rng) -> Document {
    let n_events: usize = rng.gen_range(3..=8);
    let n_sent = rng.gen_range(1..=3);
    let per_sent = n_events.div_ceil(n_sent) + 1;
    let sentences = (0..n_sent)
        .map(|_| {
            (0..per_sent)
                .map(|k| TokenRecord {
                    surface: format!("t{k}"),
                    pos: "VBD".into(),
                })
                .collect()
        })
        .collect();
    let events = (0..n_events)
        .map(|i| EventRecord {
            event_id: format!("e{i}"),
            sent_idx: i % n_sent,
            first: i / n_sent,
            last: i / n_sent,
        })
        .collect();
    DocumentRecord {
        doc_id: id.into(),
        sentences,
        events,
        relations: Vec::new(),
    }
    .into_document(schema)
    .unwrap()
}

/// One random case: documents, a cascade of lookup sieves proposing random
/// labels, and the checks that earlier decisions survive later sieves and
/// that the decided graphs are conflict free.
pub fn precedence_case(seed: u64) -> Result<(), String> {
    let schema = LabelSchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<Document> = (0..rng.gen_range(1..=3))
        .map(|d| random_doc(&schema, &format!("d{d}"), &mut rng))
        .collect();
    let pairs = eval_pairs(&build_corpus_pairs(&docs, &schema));
    let n_sieves = rng.gen_range(1..=5);
    let sieves: Vec<LookupSieve> = (0..n_sieves)
        .map(|s| {
            let density = rng.gen_range(0.1..0.9);
            let mut proposals = Vec::new();
            for p in &pairs {
                if rng.gen_bool(density) {
                    proposals.push((p.key(), schema.get(LABELS[rng.gen_range(0..LABELS.len())]).unwrap()));
                }
            }
            LookupSieve::new(&format!("s{s}"), proposals)
        })
        .collect();
    let refs: Vec<&dyn Sieve> = sieves.iter().map(|s| s as &dyn Sieve).collect();
    let ctx = SieveContext::new(&docs, &schema);

    let full = run_cascade(&refs, &pairs, &ctx);
    for k in 1..refs.len() {
        let prefix = run_cascade(&refs[..k], &pairs, &ctx);
        for (key, d) in &prefix.decided {
            if full.decided.get(key) != Some(d) {
                return Err(format!("seed {seed}: {key:?} decided {d:?} by prefix {k}, then {:?}", full.decided.get(key)));
            }
        }
    }
    for (key, d) in &full.decided {
        let proposed = sieves[d.sieve].propose(pairs.iter().find(|p| &p.key() == key).unwrap(), &ctx);
        if proposed != Some(d.label) {
            return Err(format!("seed {seed}: {key:?} holds a label its sieve never proposed"));
        }
    }
    for (doc, g) in full.graphs(&schema) {
        let conflicts = g.detect_conflicts();
        if !conflicts.is_empty() {
            return Err(format!("seed {seed}: {doc} has conflicts {conflicts:?}"));
        }
        if !g.is_consistent() {
            return Err(format!("seed {seed}: {doc} decided edges have no interval model"));
        }
    }
    if full.decided.len() + full.undecided.len() != pairs.len() {
        return Err(format!("seed {seed}: pairs lost"));
    }
    Ok(())
}
