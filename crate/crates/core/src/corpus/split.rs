use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{Error, Result};

/// Train/dev/test assignment of document ids.
///
/// Text layout:
///
/// ```text
/// [train]
/// story0001
/// [dev]
/// [test]
/// story0002
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn parse(text: &str) -> Result<CorpusSplit> {
        let mut split = CorpusSplit::default();
        let mut section: Option<&mut Vec<String>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = Some(match &line[1..line.len() - 1] {
                    "train" => &mut split.train,
                    "dev" => &mut split.dev,
                    "test" => &mut split.test,
                    other => {
                        return Err(Error::Format {
                            line: lineno + 1,
                            message: format!("unknown split section '{other}'"),
                        })
                    }
                });
                continue;
            }
            match section.as_deref_mut() {
                Some(ids) => ids.push(line.to_string()),
                None => {
                    return Err(Error::Format {
                        line: lineno + 1,
                        message: "document id before any [section] header".into(),
                    })
                }
            }
        }
        split.check_disjoint()?;
        Ok(split)
    }

    pub fn load(path: &Path) -> Result<CorpusSplit> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CorpusSplit::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, ids) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            out.push_str(&format!("[{name}]\n"));
            for id in ids {
                out.push_str(id);
                out.push('\n');
            }
        }
        out
    }

    /// First `n_train` ids to train, next `n_dev` to dev, next `n_test` to test.
    pub fn sequential(ids: &[String], n_train: usize, n_dev: usize, n_test: usize) -> Result<CorpusSplit> {
        if n_train + n_dev + n_test != ids.len() {
            return Err(Error::Config(format!(
                "split sizes {n_train}+{n_dev}+{n_test} do not cover {} documents",
                ids.len()
            )));
        }
        Ok(CorpusSplit {
            train: ids[..n_train].to_vec(),
            dev: ids[n_train..n_train + n_dev].to_vec(),
            test: ids[n_train + n_dev..].to_vec(),
        })
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("doc_id '{id}' appears in more than one split")));
            }
        }
        Ok(())
    }

    /// Every listed id must exist and every document must be assigned.
    pub fn validate(&self, docs: &[Document]) -> Result<()> {
        self.check_disjoint()?;
        let present: HashSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        let missing: Vec<String> = self
            .train
            .iter()
            .chain(&self.dev)
            .chain(&self.test)
            .filter(|id| !present.contains(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingDocuments(missing));
        }
        let listed = self.train.len() + self.dev.len() + self.test.len();
        if listed != docs.len() {
            let assigned: HashSet<&str> = self
                .train
                .iter()
                .chain(&self.dev)
                .chain(&self.test)
                .map(String::as_str)
                .collect();
            let unassigned: Vec<&str> = docs
                .iter()
                .map(|d| d.doc_id.as_str())
                .filter(|id| !assigned.contains(id))
                .take(5)
                .collect();
            return Err(Error::Invalid(format!(
                "{} document(s) not assigned to any split, e.g. {}",
                docs.len() - listed,
                unassigned.join(", ")
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections() {
        let s = CorpusSplit::parse("[train]\na\nb\n[dev]\n[test]\nc\n").unwrap();
        assert_eq!(s.sizes(), (2, 0, 1));
        assert_eq!(CorpusSplit::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn overlapping_sections_rejected() {
        assert!(CorpusSplit::parse("[train]\na\n[test]\na\n").is_err());
        assert!(CorpusSplit::parse("a\n[train]\n").is_err());
        assert!(CorpusSplit::parse("[valid]\n").is_err());
    }
}
