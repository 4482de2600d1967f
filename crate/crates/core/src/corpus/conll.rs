//! CoNLL-2005 style bracket columns.
//!
//! One token per line, whitespace separated:
//!
//! ```text
//! She    -     (A0*)
//! kept   kept  (V*)
//! a      -     (A1*
//! cat    -     *)
//! ```
//!
//! Column 1 is the word, column 2 marks predicates (anything other than
//! `-`), and one bracket column follows per predicate, in sentence order.
//! Sentences are separated by blank lines. The predicate's own `V` span is
//! dropped on reading and re-emitted on writing.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::corpus::{LabeledSpan, PredicateInstance};
use crate::decode::CoreLabelSet;
use crate::error::{Error, Result};

const PREDICATE_LABEL: &str = "V";

/// Reads bracket-column sentences. Sentence `n` (1-based) gets the id
/// `{prefix}{n}`.
pub fn read_conll<R: BufRead>(
    reader: R,
    path: &Path,
    prefix: &str,
    core: &CoreLabelSet,
) -> Result<Vec<PredicateInstance>> {
    let mut out = Vec::new();
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut sentence = 0;
    let mut flush = |rows: &mut Vec<(usize, Vec<String>)>| -> Result<()> {
        if !rows.is_empty() {
            sentence += 1;
            let id = format!("{prefix}{sentence}");
            out.extend(convert_sentence(rows, &id, path, core)?);
            rows.clear();
        }
        Ok(())
    };
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            flush(&mut rows)?;
        } else {
            rows.push((n + 1, line.split_whitespace().map(str::to_string).collect()));
        }
    }
    flush(&mut rows)?;
    Ok(out)
}

fn convert_sentence(
    rows: &[(usize, Vec<String>)],
    id: &str,
    path: &Path,
    core: &CoreLabelSet,
) -> Result<Vec<PredicateInstance>> {
    let first_line = rows[0].0;
    let width = rows[0].1.len();
    if width < 2 {
        return Err(Error::parse(path, first_line, "expected word and predicate columns"));
    }
    for (n, cols) in rows {
        if cols.len() != width {
            return Err(Error::parse(
                path,
                *n,
                format!("expected {width} columns, found {}", cols.len()),
            ));
        }
    }
    let tokens: Vec<String> = rows.iter().map(|(_, c)| c[0].clone()).collect();
    let predicates: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| c[1] != "-")
        .map(|(t, _)| t + 1)
        .collect();
    if predicates.len() != width - 2 {
        return Err(Error::parse(
            path,
            first_line,
            format!(
                "{} predicates marked but {} argument columns",
                predicates.len(),
                width - 2
            ),
        ));
    }

    let mut out = Vec::with_capacity(predicates.len());
    for (k, &predicate) in predicates.iter().enumerate() {
        let column: Vec<(usize, &str)> = rows.iter().map(|(n, c)| (*n, c[k + 2].as_str())).collect();
        let spans = parse_brackets(&column, path)?
            .into_iter()
            .filter(|s| s.label != PREDICATE_LABEL)
            .collect();
        let inst = PredicateInstance {
            id: id.to_string(),
            tokens: tokens.clone(),
            predicate,
            gold: Some(spans),
        };
        inst.validate(core)
            .map_err(|msg| Error::parse(path, first_line, msg))?;
        out.push(inst);
    }
    Ok(out)
}

fn parse_brackets(column: &[(usize, &str)], path: &Path) -> Result<Vec<LabeledSpan>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (t, &(line, cell)) in column.iter().enumerate() {
        let pos = t + 1;
        let star = cell
            .find('*')
            .ok_or_else(|| Error::parse(path, line, format!("bracket cell `{cell}` has no `*`")))?;
        let (opening, closing) = (&cell[..star], &cell[star + 1..]);
        if !opening.is_empty() {
            let label = opening
                .strip_prefix('(')
                .filter(|l| !l.is_empty() && !l.contains('('))
                .ok_or_else(|| {
                    Error::parse(path, line, format!("unsupported bracket cell `{cell}`"))
                })?;
            if open.is_some() {
                return Err(Error::parse(path, line, "nested argument brackets"));
            }
            open = Some((pos, label.to_string()));
        }
        match closing {
            "" => {}
            ")" => {
                let (start, label) = open
                    .take()
                    .ok_or_else(|| Error::parse(path, line, "closing bracket without an opening"))?;
                spans.push(LabeledSpan::new(start, pos, label));
            }
            _ => {
                return Err(Error::parse(path, line, format!("unsupported bracket cell `{cell}`")));
            }
        }
    }
    if let Some((start, label)) = open {
        return Err(Error::parse(
            path,
            column.last().map_or(0, |c| c.0),
            format!("unclosed {label} bracket opened at token {start}"),
        ));
    }
    Ok(spans)
}

/// Writes instances as bracket columns. Consecutive instances with the same
/// id form one sentence; their spans come from the `spans` field.
pub fn write_conll<W: Write>(mut w: W, instances: &[PredicateInstance]) -> Result<()> {
    let mut k = 0;
    while k < instances.len() {
        let id = &instances[k].id;
        let mut group: Vec<&PredicateInstance> = instances[k..]
            .iter()
            .take_while(|inst| &inst.id == id)
            .collect();
        k += group.len();
        group.sort_by_key(|inst| inst.predicate);
        let tokens = &group[0].tokens;
        if group.iter().any(|inst| &inst.tokens != tokens) {
            return Err(Error::Incompatible(format!(
                "instances of sentence {id} disagree on tokens"
            )));
        }
        let columns: Vec<Vec<String>> = group
            .iter()
            .map(|inst| {
                let mut spans = inst.gold_spans().to_vec();
                spans.push(LabeledSpan::new(inst.predicate, inst.predicate, PREDICATE_LABEL));
                bracket_column(&spans, tokens.len())
            })
            .collect();
        for (t, token) in tokens.iter().enumerate() {
            let pred = if group.iter().any(|inst| inst.predicate == t + 1) {
                // a literal "-" token would read back as "no predicate"
                if token == "-" {
                    PREDICATE_LABEL
                } else {
                    token.as_str()
                }
            } else {
                "-"
            };
            write!(w, "{token}\t{pred}")?;
            for col in &columns {
                write!(w, "\t{}", col[t])?;
            }
            writeln!(w)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn bracket_column(spans: &[LabeledSpan], len: usize) -> Vec<String> {
    let mut cells = vec!["*".to_string(); len];
    for s in spans {
        cells[s.start - 1] = format!("({}{}", s.label, cells[s.start - 1]);
        cells[s.end - 1].push(')');
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
She\t-\t(A0*)\t*
kept\tkeep\t(V*)\t*
a\t-\t(A1*\t(A0*
cat\t-\t*)\t*)
that\t-\t*\t(R-A0*)
purrs\tpurr\t*\t(V*)

He\t-\t(A0*)
came\tcome\t(V*)
yesterday\t-\t(AM-TMP*)
at\t-\t(AM-TMP*
five\t-\t*)
";

    fn read(text: &str) -> Result<Vec<PredicateInstance>> {
        read_conll(text.as_bytes(), Path::new("<mem>"), "s", &CoreLabelSet::default())
    }

    #[test]
    fn reads_predicates_and_drops_verb_span() {
        let insts = read(SAMPLE).unwrap();
        assert_eq!(insts.len(), 3);
        assert_eq!(insts[0].id, "s1");
        assert_eq!(insts[0].predicate, 2);
        assert_eq!(
            insts[0].gold_spans(),
            &[LabeledSpan::new(1, 1, "A0"), LabeledSpan::new(3, 4, "A1")]
        );
        assert_eq!(insts[1].predicate, 6);
        assert_eq!(
            insts[1].gold_spans(),
            &[LabeledSpan::new(3, 4, "A0"), LabeledSpan::new(5, 5, "R-A0")]
        );
        assert_eq!(insts[2].id, "s2");
        assert_eq!(insts[2].gold_spans().len(), 3);
    }

    #[test]
    fn write_then_read_is_identity() {
        let insts = read(SAMPLE).unwrap();
        let mut buf = Vec::new();
        write_conll(&mut buf, &insts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read(&text).unwrap();
        assert_eq!(back, insts);
    }

    #[test]
    fn malformed_input() {
        assert!(read("a\t-\t(A0*\nb\tb\t(V*)\n").is_err());
        assert!(read("a\t-\t*)\nb\tb\t(V*)\n").is_err());
        assert!(read("a\t-\n").is_ok());
        assert!(read("a\tx\n").is_err());
        assert!(read("a\tx\t(V*)\nb\t-\n").is_err());
    }
}
