//! Word-vector providers and the trainable POS-tag table.
//!
//! Word vectors are frozen inputs: they enter the tape as constants and
//! never receive gradient. POS rows are parameters.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pairgen::{CandidatePair, WindowToken};
use crate::tensor::{NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Random,
    Static,
    Contextual,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    #[default]
    Zero,
    UnkVector,
}

#[derive(Clone, Debug)]
enum Source {
    /// Seeded pseudo-random vector per surface form.
    Random { seed: u64 },
    Static {
        vectors: HashMap<String, Vec<f64>>,
        unk: Vec<f64>,
    },
    Contextual {
        vectors: HashMap<(String, usize, usize), Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct EmbeddingProvider {
    dim: usize,
    oov: OovPolicy,
    source: Source,
}

impl EmbeddingProvider {
    /// Fixed random vectors in [-1, 1] keyed by surface form. Stands in for
    /// pretrained vectors on synthetic data.
    pub fn random(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        EmbeddingProvider {
            dim,
            oov: OovPolicy::Zero,
            source: Source::Random { seed },
        }
    }

    pub fn kind(&self) -> ProviderKind {
        match self.source {
            Source::Random { .. } => ProviderKind::Random,
            Source::Static { .. } => ProviderKind::Static,
            Source::Contextual { .. } => ProviderKind::Contextual,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn with_oov_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    /// Vector for a token of document `doc_id`.
    pub fn lookup(&self, doc_id: &str, token: &WindowToken) -> Result<Vec<f64>> {
        match &self.source {
            Source::Random { seed } => Ok(random_vector(*seed, &token.surface, self.dim)),
            Source::Static { vectors, unk } => {
                let found = vectors
                    .get(&token.surface)
                    .or_else(|| vectors.get(&token.surface.to_lowercase()));
                Ok(match (found, self.oov) {
                    (Some(v), _) => v.clone(),
                    (None, OovPolicy::Zero) => vec![0.0; self.dim],
                    (None, OovPolicy::UnkVector) => unk.clone(),
                })
            }
            Source::Contextual { vectors } => vectors
                .get(&(doc_id.to_string(), token.sent_idx, token.tok_idx))
                .cloned()
                .ok_or_else(|| {
                    Error::MissingVector(format!(
                        "(doc {doc_id}, sentence {}, token {})",
                        token.sent_idx, token.tok_idx
                    ))
                }),
        }
    }

    pub fn lookup_window(&self, pair: &CandidatePair) -> Result<Vec<Vec<f64>>> {
        pair.window.iter().map(|t| self.lookup(&pair.doc_id, t)).collect()
    }
}

fn random_vector(seed: u64, surface: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(surface.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Reads `token v1 .. v_dim` lines. A leading `count dim` header line is
/// skipped. Lookup is exact first, then lowercased, then the OOV policy.
pub fn load_static_vectors(path: &Path, dim: usize) -> Result<EmbeddingProvider> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_static_vectors(&text, dim)
}

pub fn parse_static_vectors(text: &str, dim: usize) -> Result<EmbeddingProvider> {
    if dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    let mut vectors = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        if lineno == 0 && dim != 1 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.len() != dim {
            return Err(Error::Format {
                line: lineno + 1,
                message: format!("expected {dim} values for '{token}', found {}", rest.len()),
            });
        }
        let v = rest
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Format {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        vectors.insert(token.to_string(), v);
    }
    let unk = match vectors.get("<unk>") {
        Some(v) => v.clone(),
        None if vectors.is_empty() => vec![0.0; dim],
        None => {
            let mut mean = vec![0.0; dim];
            for v in vectors.values() {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
            mean
        }
    };
    Ok(EmbeddingProvider {
        dim,
        oov: OovPolicy::Zero,
        source: Source::Static { vectors, unk },
    })
}

/// First line of a contextual-vector file: magic, format version, dim.
pub const CONTEXTUAL_MAGIC: &str = "#temprel-contextual-vectors";
pub const CONTEXTUAL_VERSION: u32 = 1;

/// One exported token vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualRow {
    pub doc_id: String,
    pub sent_idx: usize,
    pub tok_idx: usize,
    pub vector: Vec<f32>,
}

/// Writes the contextual-vector text format:
///
/// ```text
/// #temprel-contextual-vectors 1 <dim>
/// #manifest {"encoder":"...","layer":"last",...}
/// <doc_id>\t<sent_idx>\t<tok_idx>\t<v1> <v2> ... <v_dim>
/// ```
///
/// Values are float32.
pub fn write_contextual_vectors(rows: &[ContextualRow], dim: usize, manifest: &BTreeMap<String, String>) -> Result<String> {
    let mut out = format!("{CONTEXTUAL_MAGIC} {CONTEXTUAL_VERSION} {dim}\n");
    out.push_str("#manifest ");
    out.push_str(&serde_json::to_string(manifest).expect("string map serializes"));
    out.push('\n');
    for r in rows {
        if r.vector.len() != dim {
            return Err(Error::Invalid(format!(
                "row ({}, {}, {}) has {} values, header says {dim}",
                r.doc_id,
                r.sent_idx,
                r.tok_idx,
                r.vector.len()
            )));
        }
        let values: Vec<String> = r.vector.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.doc_id, r.sent_idx, r.tok_idx, values.join(" ")));
    }
    Ok(out)
}

pub fn load_contextual_vectors(path: &Path) -> Result<EmbeddingProvider> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contextual_vectors(&text)
}

pub fn parse_contextual_vectors(text: &str) -> Result<EmbeddingProvider> {
    let mut lines = text.lines().enumerate();
    let header_err = |message: String| Error::Format { line: 1, message };
    let (_, header) = lines.next().ok_or_else(|| header_err("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != CONTEXTUAL_MAGIC {
        return Err(header_err(format!("expected '{CONTEXTUAL_MAGIC} <version> <dim>'")));
    }
    let version: u32 = fields[1]
        .parse()
        .map_err(|_| header_err(format!("bad version '{}'", fields[1])))?;
    if version != CONTEXTUAL_VERSION {
        return Err(header_err(format!("unsupported version {version}")));
    }
    let dim: usize = fields[2]
        .parse()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| header_err(format!("bad dim '{}'", fields[2])))?;

    let mut vectors = HashMap::new();
    for (lineno, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fmt_err = |message: String| Error::Format {
            line: lineno + 1,
            message,
        };
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() != 4 {
            return Err(fmt_err("expected doc_id, sent_idx, tok_idx and values separated by tabs".into()));
        }
        let sent: usize = cols[1].parse().map_err(|_| fmt_err(format!("bad sent_idx '{}'", cols[1])))?;
        let tok: usize = cols[2].parse().map_err(|_| fmt_err(format!("bad tok_idx '{}'", cols[2])))?;
        let values = cols[3]
            .split_whitespace()
            .map(|v| v.parse::<f32>().map(f64::from))
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| fmt_err(e.to_string()))?;
        if values.len() != dim {
            return Err(fmt_err(format!("expected {dim} values, found {}", values.len())));
        }
        vectors.insert((cols[0].to_string(), sent, tok), values);
    }
    Ok(EmbeddingProvider {
        dim,
        oov: OovPolicy::Zero,
        source: Source::Contextual { vectors },
    })
}

pub const UNKNOWN_TAG: &str = "X";

/// Trainable POS-tag embedding matrix. Row 0 belongs to the unknown tag.
#[derive(Clone, Debug, PartialEq)]
pub struct PosEmbeddingTable {
    tags: Vec<String>,
    dim: usize,
    param: ParamId,
}

impl PosEmbeddingTable {
    /// Registers a `|tags| x dim` parameter initialized uniform in ±0.1.
    pub fn new<'a, I, R>(store: &mut ParamStore, tags: I, dim: usize, rng: &mut R) -> Self
    where
        I: IntoIterator<Item = &'a str>,
        R: Rng,
    {
        let mut all: Vec<String> = vec![UNKNOWN_TAG.to_string()];
        let mut rest: Vec<String> = tags
            .into_iter()
            .filter(|t| *t != UNKNOWN_TAG)
            .map(str::to_string)
            .collect();
        rest.sort();
        rest.dedup();
        all.extend(rest);
        let param = store.add_uniform("pos_embedding", all.len(), dim, 0.1, rng);
        PosEmbeddingTable {
            tags: all,
            dim,
            param,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn param(&self) -> ParamId {
        self.param
    }

    pub fn row_index(&self, tag: &str) -> usize {
        self.tags.iter().position(|t| t == tag).unwrap_or(0)
    }
}

/// Embeds every window token as `[word vector ; POS row]`.
pub fn embed_window(
    tape: &mut Tape,
    store: &ParamStore,
    pair: &CandidatePair,
    word: &EmbeddingProvider,
    pos: &PosEmbeddingTable,
) -> Result<Vec<NodeId>> {
    let words = word.lookup_window(pair)?;
    let tags: Vec<usize> = pair.window.iter().map(|t| pos.row_index(&t.pos)).collect();
    embed_tokens(tape, store, &words, &tags, pos)
}

/// Same as [`embed_window`] with word vectors and tag rows already resolved.
pub fn embed_tokens(
    tape: &mut Tape,
    store: &ParamStore,
    words: &[Vec<f64>],
    tags: &[usize],
    pos: &PosEmbeddingTable,
) -> Result<Vec<NodeId>> {
    let table = tape.param(store, pos.param());
    words
        .iter()
        .zip(tags)
        .map(|(w, &tag)| {
            let wn = tape.constant(w.clone());
            let pn = tape.row(table, tag)?;
            tape.concat(&[wn, pn])
        })
        .collect()
}
