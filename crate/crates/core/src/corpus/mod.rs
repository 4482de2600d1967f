//! Predicate instances and their on-disk formats.
//!
//! The native format is JSON lines, one predicate instance per line:
//!
//! ```text
//! {"id": "ex1", "tokens": ["She", "kept", "a", "cat"], "predicate": 2, "spans": [[1, 1, "A0"], [3, 4, "A1"]]}
//! ```
//!
//! Indices are 1-based and inclusive. A sentence with several predicates
//! is written as several lines sharing the same `id`; an instance is
//! identified by `(id, predicate)`. Without `"spans"` the instance is a
//! prediction input.

mod bio;
mod conll;
mod synthetic;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::bio::{bio_to_spans, spans_to_bio};
pub use self::conll::{read_conll, write_conll};
pub use self::synthetic::{gen_synthetic, synthetic_embeddings, SyntheticConfig};

use crate::decode::{overlaps, CoreLabelSet};
use crate::error::{Error, Result};

/// `⟨start, end, label⟩`, serialized as `[start, end, "label"]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, String)", into = "(usize, usize, String)")]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

impl From<(usize, usize, String)> for LabeledSpan {
    fn from((start, end, label): (usize, usize, String)) -> Self {
        LabeledSpan { start, end, label }
    }
}

impl From<LabeledSpan> for (usize, usize, String) {
    fn from(s: LabeledSpan) -> Self {
        (s.start, s.end, s.label)
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}, {}, {}⟩", self.start, self.end, self.label)
    }
}

/// Identifies a predicate instance across files.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub id: String,
    pub predicate: usize,
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.id, self.predicate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateInstance {
    pub id: String,
    pub tokens: Vec<String>,
    /// 1-based predicate position.
    pub predicate: usize,
    #[serde(rename = "spans", default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<LabeledSpan>>,
}

impl PredicateInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            id: self.id.clone(),
            predicate: self.predicate,
        }
    }

    pub fn gold_spans(&self) -> &[LabeledSpan] {
        self.gold.as_deref().unwrap_or(&[])
    }

    /// Checks positions, overlap, the predicate-coverage rule and the
    /// one-span-per-core-label rule.
    pub fn validate(&self, core: &CoreLabelSet) -> std::result::Result<(), String> {
        self.validate_positions()?;
        let Some(gold) = &self.gold else {
            return Ok(());
        };
        for (k, s) in gold.iter().enumerate() {
            if s.start <= self.predicate && self.predicate <= s.end {
                return Err(format!(
                    "span ({}, {}, {}) covers the predicate",
                    s.start, s.end, s.label
                ));
            }
            for other in &gold[..k] {
                if overlaps(s.bounds(), other.bounds()) {
                    return Err(format!("overlapping spans {other} and {s}"));
                }
                if other.label == s.label && core.contains(&s.label) {
                    return Err(format!("core label {} used twice", s.label));
                }
            }
        }
        Ok(())
    }

    /// Checks only that the id, predicate and spans are well formed and in
    /// range. Used for decoder output, which may overlap.
    pub fn validate_positions(&self) -> std::result::Result<(), String> {
        let len = self.tokens.len();
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if len == 0 {
            return Err("empty token list".into());
        }
        if self.predicate < 1 || self.predicate > len {
            return Err(format!(
                "predicate {} outside sentence of length {len}",
                self.predicate
            ));
        }
        let Some(gold) = &self.gold else {
            return Ok(());
        };
        for (k, s) in gold.iter().enumerate() {
            if s.label.is_empty() {
                return Err(format!("span {k} has an empty label"));
            }
            if s.start < 1 || s.start > s.end || s.end > len {
                return Err(format!(
                    "span ({}, {}) outside sentence of length {len}",
                    s.start, s.end
                ));
            }
        }
        Ok(())
    }
}

/// Reads a JSON-lines corpus, validating every instance against the
/// default core label set.
pub fn parse_jsonl(path: impl AsRef<Path>) -> Result<Vec<PredicateInstance>> {
    parse_jsonl_with(path, &CoreLabelSet::default())
}

pub fn parse_jsonl_with(path: impl AsRef<Path>, core: &CoreLabelSet) -> Result<Vec<PredicateInstance>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), path, core)
}

pub fn read_jsonl<R: BufRead>(
    reader: R,
    path: &Path,
    core: &CoreLabelSet,
) -> Result<Vec<PredicateInstance>> {
    read_jsonl_checked(reader, path, |inst| inst.validate(core))
}

/// Reads predictions, which only need well-formed positions.
pub fn parse_predictions(path: impl AsRef<Path>) -> Result<Vec<PredicateInstance>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_jsonl_checked(BufReader::new(file), path, PredicateInstance::validate_positions)
}

fn read_jsonl_checked<R: BufRead>(
    reader: R,
    path: &Path,
    check: impl Fn(&PredicateInstance) -> std::result::Result<(), String>,
) -> Result<Vec<PredicateInstance>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: PredicateInstance = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        check(&inst).map_err(|msg| Error::parse(path, n + 1, msg))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, instances: &[PredicateInstance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_jsonl_string(instances: &[PredicateInstance]) -> Result<String> {
    let mut s = String::new();
    for inst in instances {
        s.push_str(&serde_json::to_string(inst)?);
        s.push('\n');
    }
    Ok(s)
}

/// Label inventory in first-seen order.
pub fn label_inventory<'a>(instances: impl IntoIterator<Item = &'a PredicateInstance>) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for inst in instances {
        for s in inst.gold_spans() {
            if !labels.contains(&s.label) {
                labels.push(s.label.clone());
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<Vec<PredicateInstance>> {
        read_jsonl(s.as_bytes(), Path::new("<mem>"), &CoreLabelSet::default())
    }

    #[test]
    fn parses_worked_example() {
        let line = r#"{"id":"ex1","tokens":["She","kept","a","cat"],"predicate":2,"spans":[[1,1,"A0"],[3,4,"A1"]]}"#;
        let inst = parse_str(line).unwrap().remove(0);
        assert_eq!(inst.id, "ex1");
        assert_eq!(inst.predicate, 2);
        assert_eq!(
            inst.gold_spans(),
            &[LabeledSpan::new(1, 1, "A0"), LabeledSpan::new(3, 4, "A1")]
        );
        assert_eq!(to_jsonl_string(&[inst]).unwrap().trim(), line);
    }

    #[test]
    fn rejects_overlap_with_line_number() {
        let text = concat!(
            r#"{"id":"a","tokens":["x","y","z","w","v"],"predicate":5}"#,
            "\n",
            r#"{"id":"b","tokens":["x","y","z","w","v"],"predicate":5,"spans":[[1,3,"A0"],[2,4,"A1"]]}"#
        );
        match parse_str(text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("overlapping"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_spans_means_prediction_input() {
        let inst = parse_str(r#"{"id":"p","tokens":["a","b"],"predicate":1}"#)
            .unwrap()
            .remove(0);
        assert!(inst.gold.is_none());
    }

    #[test]
    fn rejects_bad_instances() {
        for bad in [
            r#"{"id":"p","tokens":["a","b"],"predicate":3}"#,
            r#"{"id":"p","tokens":["a","b","c"],"predicate":2,"spans":[[1,2,"A0"]]}"#,
            r#"{"id":"p","tokens":["a","b","c"],"predicate":1,"spans":[[2,4,"A0"]]}"#,
            r#"{"id":"p","tokens":["a","b","c"],"predicate":1,"spans":[[2,2,"A0"],[3,3,"A0"]]}"#,
            r#"{"id":"p","tokens":["a","b"],"predicate":1,"spans":[[2,2,""]]}"#,
            r#"{"id":"p","tokens":[],"predicate":1}"#,
            r#"{"tokens":["a"],"predicate":1}"#,
        ] {
            assert!(matches!(parse_str(bad), Err(Error::Parse { .. })), "{bad}");
        }
        let overlapping = r#"{"id":"p","tokens":["a","b","c"],"predicate":1,"spans":[[2,3,"A0"],[3,3,"A0"]]}"#;
        let inst: PredicateInstance = serde_json::from_str(overlapping).unwrap();
        assert!(inst.validate_positions().is_ok());
        // repeated adjuncts are fine
        let ok = r#"{"id":"p","tokens":["a","b","c"],"predicate":1,"spans":[[2,2,"TMP"],[3,3,"TMP"]]}"#;
        assert_eq!(parse_str(ok).unwrap().len(), 1);
    }

    #[test]
    fn inventory_in_first_seen_order() {
        let text = concat!(
            r#"{"id":"a","tokens":["x","y","z"],"predicate":2,"spans":[[3,3,"TMP"],[1,1,"A0"]]}"#,
            "\n",
            r#"{"id":"b","tokens":["x","y","z"],"predicate":1,"spans":[[2,2,"A1"],[3,3,"TMP"]]}"#
        );
        let insts = parse_str(text).unwrap();
        assert_eq!(label_inventory(&insts), vec!["TMP", "A0", "A1"]);
    }
}
