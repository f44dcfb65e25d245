//! Relation label vocabulary.
//!
//! A schema is a closed list of directed labels with an inverse for each one.
//! `NONE` is always present and always has index 0, so it sorts first in
//! every vocabulary-ordered listing.
//!
//! Schema file layout, one entry per line:
//!
//! ```text
//! # comment
//! NONE
//! BEFORE AFTER          # inverse pair
//! OVERLAP               # self-inverse
//! VAGUE = NONE          # alias
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a label inside a [`LabelSchema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(u16);

impl Label {
    pub const NONE: Label = Label(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(idx: usize) -> Label {
        Label(idx as u16)
    }

    pub fn is_none(self) -> bool {
        self == Label::NONE
    }
}

/// Prefixes of compound labels whose temporal part is the suffix.
const COMPOUND_PREFIXES: &[&str] = &["CAUSE_", "ENABLE_", "PREVENT_", "CAUSE-", "ENABLE-"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    names: Vec<String>,
    inverse: Vec<u16>,
    aliases: BTreeMap<String, u16>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        LabelSchema::parse(DEFAULT_SCHEMA).expect("built-in schema is valid")
    }
}

pub const DEFAULT_SCHEMA: &str = "\
NONE
BEFORE AFTER
OVERLAP
INCLUDES IS_INCLUDED
VAGUE = NONE
";

impl LabelSchema {
    pub fn parse(text: &str) -> Result<LabelSchema> {
        let mut names: Vec<String> = vec!["NONE".to_string()];
        let mut inverse: Vec<u16> = vec![0];
        let mut pending_aliases = Vec::new();

        let add = |name: &str, names: &mut Vec<String>, line: usize| -> Result<u16> {
            if names.iter().any(|n| n == name) {
                return Err(Error::Format {
                    line,
                    message: format!("label '{name}' declared twice"),
                });
            }
            names.push(name.to_string());
            Ok((names.len() - 1) as u16)
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((alias, target)) = line.split_once('=') {
                pending_aliases.push((alias.trim().to_uppercase(), target.trim().to_uppercase(), line_no));
                continue;
            }
            let fields: Vec<String> = line.split_whitespace().map(|f| f.to_uppercase()).collect();
            match fields.as_slice() {
                [single] if single == "NONE" => {}
                [single] => {
                    let idx = add(single, &mut names, line_no)?;
                    inverse.push(idx);
                }
                [a, b] if a != b => {
                    if a == "NONE" || b == "NONE" {
                        return Err(Error::Format {
                            line: line_no,
                            message: "NONE is self-inverse".into(),
                        });
                    }
                    let ia = add(a, &mut names, line_no)?;
                    let ib = add(b, &mut names, line_no)?;
                    inverse.push(ib);
                    inverse.push(ia);
                }
                _ => {
                    return Err(Error::Format {
                        line: line_no,
                        message: format!("expected one label or an inverse pair, got '{line}'"),
                    })
                }
            }
        }

        let mut aliases = BTreeMap::new();
        for (alias, target, line) in pending_aliases {
            let idx = names
                .iter()
                .position(|n| *n == target)
                .ok_or_else(|| Error::Format {
                    line,
                    message: format!("alias target '{target}' is not a declared label"),
                })?;
            aliases.insert(alias, idx as u16);
        }

        Ok(LabelSchema {
            names,
            inverse,
            aliases,
        })
    }

    pub fn load(path: &Path) -> Result<LabelSchema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSchema::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.names.len()).map(Label::from_index)
    }

    pub fn name(&self, label: Label) -> &str {
        &self.names[label.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn inverse(&self, label: Label) -> Label {
        Label(self.inverse[label.index()])
    }

    /// Exact lookup of a declared label or alias.
    pub fn get(&self, name: &str) -> Option<Label> {
        let upper = name.trim().to_uppercase();
        self.names
            .iter()
            .position(|n| *n == upper)
            .map(Label::from_index)
            .or_else(|| self.aliases.get(&upper).map(|&i| Label(i)))
    }

    /// Resolves an annotation label, reducing compound causal labels such
    /// as `CAUSE_BEFORE` to their temporal suffix.
    pub fn resolve(&self, name: &str) -> Result<Label> {
        if let Some(label) = self.get(name) {
            return Ok(label);
        }
        let upper = name.trim().to_uppercase();
        for prefix in COMPOUND_PREFIXES {
            if let Some(rest) = upper.strip_prefix(prefix) {
                if let Some(label) = self.get(rest) {
                    return Ok(label);
                }
            }
        }
        Err(Error::Schema(format!("unknown relation label '{name}'")))
    }

    /// Serializes back to the schema file layout.
    pub fn to_text(&self) -> String {
        let mut out = String::from("NONE\n");
        let mut seen = vec![false; self.names.len()];
        seen[0] = true;
        for idx in 1..self.names.len() {
            if seen[idx] {
                continue;
            }
            let inv = self.inverse[idx] as usize;
            seen[idx] = true;
            seen[inv] = true;
            if inv == idx {
                out.push_str(&format!("{}\n", self.names[idx]));
            } else {
                out.push_str(&format!("{} {}\n", self.names[idx], self.names[inv]));
            }
        }
        for (alias, &target) in &self.aliases {
            out.push_str(&format!("{alias} = {}\n", self.names[target as usize]));
        }
        out
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocabulary_and_inverses() {
        let s = LabelSchema::default();
        assert_eq!(
            s.names(),
            &["NONE", "BEFORE", "AFTER", "OVERLAP", "INCLUDES", "IS_INCLUDED"]
        );
        let name_inv = |n: &str| s.name(s.inverse(s.get(n).unwrap())).to_string();
        assert_eq!(name_inv("BEFORE"), "AFTER");
        assert_eq!(name_inv("AFTER"), "BEFORE");
        assert_eq!(name_inv("INCLUDES"), "IS_INCLUDED");
        assert_eq!(name_inv("OVERLAP"), "OVERLAP");
        assert_eq!(name_inv("NONE"), "NONE");
    }

    #[test]
    fn inverse_is_involution() {
        let s = LabelSchema::parse("BEFORE AFTER\nSIMULTANEOUS\nCONTAINS CONTAINED_BY\nBEGINS_ON\n").unwrap();
        for l in s.labels() {
            assert_eq!(s.inverse(s.inverse(l)), l);
        }
    }

    #[test]
    fn compound_labels_reduce_to_temporal_part() {
        let s = LabelSchema::default();
        assert_eq!(s.resolve("CAUSE_BEFORE").unwrap(), s.get("BEFORE").unwrap());
        assert_eq!(s.resolve("enable_overlap").unwrap(), s.get("OVERLAP").unwrap());
        assert_eq!(s.resolve("VAGUE").unwrap(), Label::NONE);
        assert!(matches!(s.resolve("CAUSES"), Err(Error::Schema(_))));
    }

    #[test]
    fn text_round_trip() {
        let s = LabelSchema::default();
        assert_eq!(LabelSchema::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn bad_schema_lines() {
        assert!(LabelSchema::parse("A B C").is_err());
        assert!(LabelSchema::parse("A\nA").is_err());
        assert!(LabelSchema::parse("X = MISSING").is_err());
    }
}
