//! WebAssembly bindings for the browser demo.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are callable natively; the exports only map errors.

use serde::Serialize;
use serde_json::Value;
use temprel::corpus::{generate_synthetic_corpus, parse_document, Document, LabelSchema};
use temprel::eval::prf;
use temprel::pairgen::{build_pairs, write_pair_set, PairRecord};
use temprel::tempgraph::TemporalGraph;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Node {
    id: String,
    text: String,
    sentence: usize,
    token: usize,
}

#[derive(Serialize)]
struct GraphView {
    nodes: Vec<Node>,
    edges: Vec<Value>,
    conflicts: Vec<temprel::tempgraph::Conflict>,
    dot: String,
}

fn nodes(doc: &Document, graph: &TemporalGraph) -> Vec<Node> {
    graph
        .nodes()
        .iter()
        .filter_map(|id| doc.event(id))
        .map(|e| Node {
            id: e.event_id.clone(),
            text: doc.sentences[e.sent_idx][e.first..=e.last]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            sentence: e.sent_idx,
            token: e.head_tok,
        })
        .collect()
}

fn lines(text: &str) -> temprel::Result<Vec<Value>> {
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| temprel::Error::Invalid(e.to_string())))
        .collect()
}

/// Gold temporal graph of one document, optionally closed.
pub fn graph_json(doc_json: &str, closure: bool) -> temprel::Result<String> {
    let schema = LabelSchema::default();
    let doc = parse_document(doc_json, &schema)?;
    let gold = TemporalGraph::from_gold(&doc, &schema);
    let graph = if closure { gold.closure() } else { gold };
    let view = GraphView {
        nodes: nodes(&doc, &graph),
        edges: lines(&graph.edge_dump())?,
        conflicts: graph.detect_conflicts(),
        dot: graph.to_dot(&doc.doc_id),
    };
    Ok(serde_json::to_string(&view).expect("graph view serializes"))
}

/// Precision, recall and F1 from raw counts.
pub fn metrics_json(correct: usize, predicted: usize, gold: usize) -> temprel::Result<String> {
    if correct > predicted || correct > gold {
        return Err(temprel::Error::Invalid(format!(
            "correct ({correct}) exceeds predicted ({predicted}) or gold ({gold})"
        )));
    }
    let (precision, recall, f1) = prf(correct, predicted, gold);
    Ok(serde_json::json!({ "precision": precision, "recall": recall, "f1": f1 }).to_string())
}

/// Candidate pairs of one document with their windows, plus out-of-window gold.
pub fn pairs_json(doc_json: &str) -> temprel::Result<String> {
    let schema = LabelSchema::default();
    let doc = parse_document(doc_json, &schema)?;
    let set = build_pairs(&doc, &schema);
    let records = write_pair_set(&set, &schema)
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<Vec<PairRecord>, _>>()
        .map_err(|e| temprel::Error::Invalid(e.to_string()))?;
    Ok(serde_json::to_string(&records).expect("pair records serialize"))
}

/// One synthetic story as a pretty-printed interchange record.
pub fn sample_json(seed: u64) -> String {
    let schema = LabelSchema::default();
    let doc = generate_synthetic_corpus(1, seed).remove(0);
    let record: Value = serde_json::from_str(&doc.serialize(&schema)).expect("records are JSON");
    serde_json::to_string_pretty(&record).expect("records serialize")
}

fn js(r: temprel::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn extract_graph(doc_json: &str, closure: bool) -> Result<String, JsError> {
    js(graph_json(doc_json, closure))
}

#[wasm_bindgen]
pub fn metrics(correct: usize, predicted: usize, gold: usize) -> Result<String, JsError> {
    js(metrics_json(correct, predicted, gold))
}

#[wasm_bindgen]
pub fn window_pairs(doc_json: &str) -> Result<String, JsError> {
    js(pairs_json(doc_json))
}

#[wasm_bindgen]
pub fn sample_story(seed: u32) -> String {
    sample_json(seed as u64)
}
