//! Annotated story documents and the JSON-lines interchange format.
//!
//! One record per line:
//!
//! ```text
//! {"doc_id":"d1","sentences":[[{"surface":"Ann","pos":"NNP"},...]],
//!  "events":[{"event_id":"e1","sent_idx":0,"first":1,"last":1}],
//!  "relations":[{"source":"e1","target":"e2","label":"BEFORE"}]}
//! ```

mod schema;
mod split;
pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use schema::{Label, LabelSchema, DEFAULT_SCHEMA};
pub use split::CorpusSplit;
pub use synth::generate_synthetic_corpus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Penn-style tag, or `"X"` when the corpus is untagged.
    pub pos: String,
    pub sent_idx: usize,
    pub tok_idx: usize,
    pub doc_tok_idx: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMention {
    pub event_id: String,
    pub sent_idx: usize,
    /// First token of the span, inclusive.
    pub first: usize,
    /// Last token of the span, inclusive.
    pub last: usize,
    /// Document-level index of the anchor (first) token.
    pub head_tok: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationAnnotation {
    pub source: String,
    pub target: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<Token>>,
    pub events: Vec<EventMention>,
    pub relations: Vec<RelationAnnotation>,
}

impl Document {
    pub fn event(&self, event_id: &str) -> Option<&EventMention> {
        self.events.iter().find(|e| e.event_id == event_id)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn to_record(&self, schema: &LabelSchema) -> DocumentRecord {
        DocumentRecord {
            doc_id: self.doc_id.clone(),
            sentences: self
                .sentences
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|t| TokenRecord {
                            surface: t.surface.clone(),
                            pos: t.pos.clone(),
                        })
                        .collect()
                })
                .collect(),
            events: self
                .events
                .iter()
                .map(|e| EventRecord {
                    event_id: e.event_id.clone(),
                    sent_idx: e.sent_idx,
                    first: e.first,
                    last: e.last,
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| RelationRecord {
                    source: r.source.clone(),
                    target: r.target.clone(),
                    label: schema.name(r.label).to_string(),
                })
                .collect(),
        }
    }

    /// Serializes to a single-line interchange record (no trailing newline).
    pub fn serialize(&self, schema: &LabelSchema) -> String {
        serde_json::to_string(&self.to_record(schema)).expect("records always serialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub surface: String,
    pub pos: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub event_id: String,
    pub sent_idx: usize,
    pub first: usize,
    pub last: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub source: String,
    pub target: String,
    pub label: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub sentences: Vec<Vec<TokenRecord>>,
    pub events: Vec<EventRecord>,
    #[serde(default)]
    pub relations: Vec<RelationRecord>,
}

impl DocumentRecord {
    /// Links and validates a record against `schema`.
    pub fn into_document(self, schema: &LabelSchema) -> Result<Document> {
        let doc_id = self.doc_id;
        let ref_err = |message: String| Error::Reference {
            doc_id: doc_id.clone(),
            message,
        };

        let mut sentences = Vec::with_capacity(self.sentences.len());
        let mut doc_tok_idx = 0;
        for (sent_idx, sent) in self.sentences.into_iter().enumerate() {
            let mut tokens = Vec::with_capacity(sent.len());
            for (tok_idx, t) in sent.into_iter().enumerate() {
                let pos = if t.pos.trim().is_empty() {
                    "X".to_string()
                } else {
                    t.pos
                };
                tokens.push(Token {
                    surface: t.surface,
                    pos,
                    sent_idx,
                    tok_idx,
                    doc_tok_idx,
                });
                doc_tok_idx += 1;
            }
            sentences.push(tokens);
        }

        let mut seen = HashSet::new();
        let mut events = Vec::with_capacity(self.events.len());
        for e in self.events {
            if !seen.insert(e.event_id.clone()) {
                return Err(ref_err(format!("duplicate event id '{}'", e.event_id)));
            }
            let sent = sentences.get(e.sent_idx).ok_or_else(|| {
                ref_err(format!(
                    "event '{}' refers to sentence {} of {}",
                    e.event_id,
                    e.sent_idx,
                    sentences.len()
                ))
            })?;
            if e.first > e.last || e.last >= sent.len() {
                return Err(ref_err(format!(
                    "event '{}' span {}..={} outside sentence {} of length {}",
                    e.event_id,
                    e.first,
                    e.last,
                    e.sent_idx,
                    sent.len()
                )));
            }
            events.push(EventMention {
                head_tok: sent[e.first].doc_tok_idx,
                event_id: e.event_id,
                sent_idx: e.sent_idx,
                first: e.first,
                last: e.last,
            });
        }

        let mut pairs_seen = HashSet::new();
        let mut relations = Vec::with_capacity(self.relations.len());
        for r in self.relations {
            for id in [&r.source, &r.target] {
                if !seen.contains(id) {
                    return Err(ref_err(format!("relation refers to unknown event '{id}'")));
                }
            }
            if r.source == r.target {
                return Err(ref_err(format!("self relation on '{}'", r.source)));
            }
            let label = schema.resolve(&r.label)?;
            if label.is_none() {
                log::debug!(
                    "{doc_id}: dropping {}->{} labeled {} (maps to NONE)",
                    r.source,
                    r.target,
                    r.label
                );
                continue;
            }
            let key = if r.source < r.target {
                (r.source.clone(), r.target.clone())
            } else {
                (r.target.clone(), r.source.clone())
            };
            if !pairs_seen.insert(key) {
                return Err(ref_err(format!(
                    "more than one annotation for pair ({}, {})",
                    r.source, r.target
                )));
            }
            relations.push(RelationAnnotation {
                source: r.source,
                target: r.target,
                label,
            });
        }

        Ok(Document {
            doc_id,
            sentences,
            events,
            relations,
        })
    }
}

/// Parses one interchange record.
pub fn parse_document(raw: &str, schema: &LabelSchema) -> Result<Document> {
    let record: DocumentRecord = serde_json::from_str(raw).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    record.into_document(schema)
}

/// Parses a JSON-lines stream of records; blank lines are skipped.
pub fn parse_documents(text: &str, schema: &LabelSchema) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document(line, schema).map_err(|e| match e {
            Error::Parse { column, message, .. } => Error::Parse {
                line: lineno + 1,
                column,
                message,
            },
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn serialize_documents(docs: &[Document], schema: &LabelSchema) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&d.serialize(schema));
        out.push('\n');
    }
    out
}

/// Reads every document under `path`: a `.jsonl` file, or a directory whose
/// `.jsonl` files are read in name order. Documents come back sorted by id.
pub fn read_documents(path: &Path, schema: &LabelSchema) -> Result<Vec<Document>> {
    let mut files = Vec::new();
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let p = entry.path();
            if p.extension().is_some_and(|x| x == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }

    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        for d in parse_documents(&text, schema)? {
            if !ids.insert(d.doc_id.clone()) {
                return Err(Error::Invalid(format!("duplicate doc_id '{}'", d.doc_id)));
            }
            docs.push(d);
        }
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}

/// Loads documents and checks them against a split file.
pub fn load_corpus(
    path: &Path,
    split_spec: &Path,
    schema: &LabelSchema,
) -> Result<(Vec<Document>, CorpusSplit)> {
    let docs = read_documents(path, schema)?;
    let split = CorpusSplit::load(split_spec)?;
    split.validate(&docs)?;
    Ok((docs, split))
}

/// Documents of one split section, in lexicographic doc_id order.
pub fn select<'a>(docs: &'a [Document], ids: &[String]) -> Vec<&'a Document> {
    let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
    docs.iter()
        .filter(|d| wanted.contains(d.doc_id.as_str()))
        .collect()
}

/// Index from (sent_idx, tok_idx) of an anchor token to its event id.
pub fn anchor_index(doc: &Document) -> HashMap<(usize, usize), &str> {
    doc.events
        .iter()
        .map(|e| ((e.sent_idx, e.first), e.event_id.as_str()))
        .collect()
}

/// Counts of gold labels by name, for reporting.
pub fn label_counts(docs: &[Document], schema: &LabelSchema) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for d in docs {
        for r in &d.relations {
            *counts.entry(schema.name(r.label).to_string()).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> LabelSchema {
        LabelSchema::default()
    }

    #[test]
    fn empty_document() {
        let raw = r#"{"doc_id":"d0","sentences":[[{"surface":"Hi","pos":"UH"}]],"events":[],"relations":[]}"#;
        let d = parse_document(raw, &schema()).unwrap();
        assert_eq!(d.relations.len(), 0);
        assert_eq!(d.token_count(), 1);
        assert_eq!(d.serialize(&schema()), raw);
    }

    #[test]
    fn compound_label_is_reduced() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"VBD"},{"surface":"b","pos":"VBD"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":0},{"event_id":"e2","sent_idx":0,"first":1,"last":1}],"relations":[{"source":"e1","target":"e2","label":"CAUSE_BEFORE"}]}"#;
        let s = schema();
        let d = parse_document(raw, &s).unwrap();
        assert_eq!(d.relations[0].label, s.get("BEFORE").unwrap());
    }

    #[test]
    fn token_indices_are_linked() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"},{"surface":"b","pos":"X"}],[{"surface":"c","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":1,"first":0,"last":0}],"relations":[]}"#;
        let d = parse_document(raw, &schema()).unwrap();
        let c = &d.sentences[1][0];
        assert_eq!((c.sent_idx, c.tok_idx, c.doc_tok_idx), (1, 0, 2));
        assert_eq!(d.events[0].head_tok, 2);
    }

    #[test]
    fn malformed_record_reports_position() {
        let text = "{\"doc_id\":\"a\",\"sentences\":[],\"events\":[]}\n{\"doc_id\": oops}\n";
        match parse_documents(text, &schema()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_event_reference() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":0}],"relations":[{"source":"e1","target":"e9","label":"BEFORE"}]}"#;
        assert!(matches!(
            parse_document(raw, &schema()),
            Err(Error::Reference { .. })
        ));
    }

    #[test]
    fn unknown_label_is_schema_error() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"},{"surface":"b","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":0},{"event_id":"e2","sent_idx":0,"first":1,"last":1}],"relations":[{"source":"e1","target":"e2","label":"SOMETIMES"}]}"#;
        assert!(matches!(parse_document(raw, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn span_out_of_bounds() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":3}],"relations":[]}"#;
        assert!(matches!(
            parse_document(raw, &schema()),
            Err(Error::Reference { .. })
        ));
    }

    #[test]
    fn duplicate_pair_annotation_rejected() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"},{"surface":"b","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":0},{"event_id":"e2","sent_idx":0,"first":1,"last":1}],"relations":[{"source":"e1","target":"e2","label":"BEFORE"},{"source":"e2","target":"e1","label":"AFTER"}]}"#;
        assert!(parse_document(raw, &schema()).is_err());
    }

    #[test]
    fn vague_is_dropped_by_default() {
        let raw = r#"{"doc_id":"d","sentences":[[{"surface":"a","pos":"X"},{"surface":"b","pos":"X"}]],"events":[{"event_id":"e1","sent_idx":0,"first":0,"last":0},{"event_id":"e2","sent_idx":0,"first":1,"last":1}],"relations":[{"source":"e1","target":"e2","label":"VAGUE"}]}"#;
        assert!(parse_document(raw, &schema()).unwrap().relations.is_empty());
    }
}
