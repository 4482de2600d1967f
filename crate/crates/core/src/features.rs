//! Word vectors and first-layer inputs.
//!
//! Word vectors come either from a fixed embedding table (one vector per
//! word type) or from precomputed per-sentence contextual vectors. Both are
//! constants during training; only the predicate-mark embedding is learned.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::corpus::PredicateInstance;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed word embeddings with a trailing all-zero UNK row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Tensor,
    unk: usize,
}

impl EmbeddingTable {
    /// `matrix` holds one row per word; the UNK row is appended here.
    pub fn new(words: Vec<String>, matrix: Tensor) -> Result<Self> {
        if matrix.shape().len() != 2 || matrix.rows() != words.len() {
            return Err(Error::contract(format!(
                "{} words for an embedding matrix of shape {:?}",
                words.len(),
                matrix.shape()
            )));
        }
        let dim = matrix.cols();
        let mut index = HashMap::with_capacity(words.len());
        for (k, w) in words.iter().enumerate() {
            if index.insert(w.clone(), k).is_some() {
                return Err(Error::contract(format!("duplicate embedding entry `{w}`")));
            }
        }
        let unk = words.len();
        let mut data = matrix.into_data();
        data.extend(std::iter::repeat_n(0.0, dim));
        Ok(EmbeddingTable {
            words,
            index,
            matrix: Tensor::matrix(unk + 1, dim, data),
            unk,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Number of known words, UNK excluded.
    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Exact match, then lowercased match, then UNK.
    pub fn index_of(&self, token: &str) -> usize {
        if let Some(&k) = self.index.get(token) {
            return k;
        }
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(self.unk)
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.matrix.row(self.index_of(token))
    }

    /// `T × d` word matrix for a token sequence.
    pub fn sentence_matrix<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::contract("empty token sequence"));
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim());
        for t in tokens {
            data.extend_from_slice(self.lookup(t.as_ref()));
        }
        Ok(Tensor::matrix(tokens.len(), self.dim(), data))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (k, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.matrix.row(k) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `token v1 … vd` lines. The dimension is taken from the first line.
pub fn load_pretrained(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_pretrained(reader, path)
}

pub fn read_pretrained<R: BufRead>(reader: R, path: &Path) -> Result<EmbeddingTable> {
    let mut words = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, n + 1, format!("bad value: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, n + 1, "non-finite embedding value"));
        }
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(Error::parse(path, n + 1, "embedding line without values"));
        }
        if values.len() != d {
            return Err(Error::parse(
                path,
                n + 1,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        words.push(word.to_string());
        data.extend(values);
    }
    let Some(dim) = dim else {
        return Err(Error::parse(path, 0, "embedding file is empty"));
    };
    let rows = words.len();
    EmbeddingTable::new(words, Tensor::matrix(rows, dim, data))
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Precomputed per-sentence vectors keyed by sentence id.
#[derive(Clone, Debug, Default)]
pub struct ContextualVectors {
    sentences: HashMap<String, Tensor>,
    dim: usize,
}

#[derive(Deserialize)]
struct ContextualRecord {
    id: String,
    vectors: Vec<Vec<f64>>,
}

impl ContextualVectors {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read(BufReader::new(File::open(path)?), path)
    }

    pub fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut out = ContextualVectors::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ContextualRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
            if rec.vectors.is_empty() || rec.vectors[0].is_empty() {
                return Err(Error::parse(path, n + 1, "empty vector list"));
            }
            let d = rec.vectors[0].len();
            if out.dim != 0 && d != out.dim {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("dimension {d} differs from earlier {}", out.dim),
                ));
            }
            if rec.vectors.iter().any(|v| v.len() != d) {
                return Err(Error::parse(path, n + 1, "ragged vectors"));
            }
            out.dim = d;
            let matrix = Tensor::from_rows(&rec.vectors);
            if out.sentences.insert(rec.id.clone(), matrix).is_some() {
                return Err(Error::parse(path, n + 1, format!("duplicate id {}", rec.id)));
            }
        }
        if out.sentences.is_empty() {
            return Err(Error::parse(path, 0, "contextual vector file is empty"));
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Vectors for `id`, checked against the sentence length.
    pub fn get(&self, id: &str, len: usize) -> Result<&Tensor> {
        let m = self
            .sentences
            .get(id)
            .ok_or_else(|| Error::MissingKey(id.to_string()))?;
        if m.rows() != len {
            return Err(Error::Incompatible(format!(
                "sentence {id} has {len} tokens but {} contextual vectors",
                m.rows()
            )));
        }
        Ok(m)
    }
}

/// Stored `T × d` matrix for one sentence.
pub fn load_contextual(path: impl AsRef<Path>, sentence_id: &str) -> Result<Tensor> {
    let all = ContextualVectors::load(path)?;
    let m = all
        .sentences
        .get(sentence_id)
        .ok_or_else(|| Error::MissingKey(sentence_id.to_string()))?;
    Ok(m.clone())
}

/// Where word vectors come from.
#[derive(Clone, Debug)]
pub enum WordSource {
    Static(EmbeddingTable),
    Contextual(ContextualVectors),
}

impl WordSource {
    pub fn dim(&self) -> usize {
        match self {
            WordSource::Static(t) => t.dim(),
            WordSource::Contextual(c) => c.dim(),
        }
    }

    pub fn is_contextual(&self) -> bool {
        matches!(self, WordSource::Contextual(_))
    }

    pub fn sentence_matrix(&self, inst: &PredicateInstance) -> Result<Tensor> {
        match self {
            WordSource::Static(t) => t.sentence_matrix(&inst.tokens),
            WordSource::Contextual(c) => c.get(&inst.id, inst.len()).cloned(),
        }
    }
}

/// Binary predicate-mark embedding: row 1 for the predicate, row 0 elsewhere.
pub fn mark_row(position: usize, predicate: usize) -> usize {
    usize::from(position == predicate)
}

/// First-layer inputs `[x_word ; x_mark]` as a `T × (d_word + d_mark)` matrix.
pub fn assemble_inputs(words: &Tensor, predicate: usize, marks: &Tensor) -> Result<Tensor> {
    let len = words.rows();
    if predicate < 1 || predicate > len {
        return Err(Error::contract(format!(
            "predicate {predicate} outside sentence of length {len}"
        )));
    }
    if marks.shape().len() != 2 || marks.rows() != 2 {
        return Err(Error::contract("mark embedding must have exactly two rows"));
    }
    let width = words.cols() + marks.cols();
    let mut data = Vec::with_capacity(len * width);
    for t in 1..=len {
        data.extend_from_slice(words.row(t - 1));
        data.extend_from_slice(marks.row(mark_row(t, predicate)));
    }
    Ok(Tensor::matrix(len, width, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<EmbeddingTable> {
        read_pretrained(text.as_bytes(), Path::new("<mem>"))
    }

    #[test]
    fn parses_small_file() {
        let t = table("cat 0.1 0.2\ndog 0.3 0.4\n").unwrap();
        assert_eq!(t.vocab_len(), 2);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.matrix().rows(), 3);
        assert_eq!(t.lookup("dog"), &[0.3, 0.4]);
        assert_eq!(t.lookup("zebra"), &[0.0, 0.0]);
        assert_eq!(t.lookup("Cat"), &[0.1, 0.2]);
    }

    #[test]
    fn exact_match_wins_over_lowercase() {
        let t = table("Apple 1 1\napple 2 2\n").unwrap();
        assert_eq!(t.lookup("Apple"), &[1.0, 1.0]);
        assert_eq!(t.lookup("APPLE"), &[2.0, 2.0]);
    }

    #[test]
    fn fifty_dimensional_file() {
        let line = |w: &str| {
            let vals: Vec<String> = (0..50).map(|k| format!("{}", k as f64 / 100.0)).collect();
            format!("{w} {}\n", vals.join(" "))
        };
        let t = table(&(line("a") + &line("b"))).unwrap();
        assert_eq!(t.dim(), 50);
    }

    #[test]
    fn inconsistent_dimension_reports_line() {
        match table("a 1 2\nb 1 2\nc 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(table("").is_err());
        assert!(table("a x y\n").is_err());
    }

    #[test]
    fn mark_values_follow_predicate() {
        let words = Tensor::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
        let marks = Tensor::from_rows(&[vec![0.0, 0.0], vec![5.0, 6.0]]);
        let x = assemble_inputs(&words, 2, &marks).unwrap();
        assert_eq!(x.shape(), &[4, 3]);
        let flags: Vec<f64> = (0..4).map(|t| x.get(t, 1) / 5.0).collect();
        assert_eq!(flags, vec![0.0, 1.0, 0.0, 0.0]);
        // same token at and away from the predicate differs only in the mark half
        assert_eq!(x.get(0, 0), x.get(1, 0));
        assert!(assemble_inputs(&words, 5, &marks).is_err());
        assert!(assemble_inputs(&words, 0, &marks).is_err());
    }

    #[test]
    fn input_width_is_word_plus_mark() {
        let words = Tensor::zeros(&[3, 50]);
        let marks = Tensor::zeros(&[2, 50]);
        assert_eq!(assemble_inputs(&words, 1, &marks).unwrap().cols(), 100);
    }

    #[test]
    fn contextual_round_trip_and_errors() {
        let row: Vec<String> = (0..1024).map(|k| format!("{}", (k % 7) as f64 * 0.5)).collect();
        let vecs = vec![format!("[{}]", row.join(",")); 4].join(",");
        let text = format!("{{\"id\":\"s1\",\"vectors\":[{vecs}]}}\n");
        let cv = ContextualVectors::read(text.as_bytes(), Path::new("<mem>")).unwrap();
        let m = cv.get("s1", 4).unwrap();
        assert_eq!(m.shape(), &[4, 1024]);
        assert_eq!(m.get(3, 8), 0.5);
        assert!(matches!(cv.get("s2", 4), Err(Error::MissingKey(_))));
        assert!(matches!(cv.get("s1", 3), Err(Error::Incompatible(_))));
    }
}
