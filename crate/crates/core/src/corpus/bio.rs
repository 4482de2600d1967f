use crate::corpus::LabeledSpan;
use crate::decode::overlaps;
use crate::error::{Error, Result};

/// Converts `O` / `B-r` / `I-r` tags to spans. An `I-r` that does not
/// continue a run of the same label is an error.
pub fn bio_to_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<LabeledSpan>> {
    let mut spans = Vec::new();
    let mut open: Option<LabeledSpan> = None;
    for (k, tag) in tags.iter().enumerate() {
        let pos = k + 1;
        let tag = tag.as_ref();
        if tag == "O" {
            spans.extend(open.take());
        } else if let Some(label) = tag.strip_prefix("B-") {
            if label.is_empty() {
                return Err(bad(pos, "B- tag without a label"));
            }
            spans.extend(open.take());
            open = Some(LabeledSpan::new(pos, pos, label));
        } else if let Some(label) = tag.strip_prefix("I-") {
            match &mut open {
                Some(span) if span.label == label => span.end = pos,
                _ => return Err(bad(pos, format!("`{tag}` does not continue a {label} span"))),
            }
        } else {
            return Err(bad(pos, format!("unknown tag `{tag}`")));
        }
    }
    spans.extend(open);
    Ok(spans)
}

fn bad(position: usize, message: impl Into<String>) -> Error {
    Error::Tagging {
        position,
        message: message.into(),
    }
}

/// Inverse of [`bio_to_spans`] for non-overlapping spans within `len`.
pub fn spans_to_bio(spans: &[LabeledSpan], len: usize) -> Result<Vec<String>> {
    let mut tags = vec!["O".to_string(); len];
    for (k, s) in spans.iter().enumerate() {
        if s.start < 1 || s.start > s.end || s.end > len {
            return Err(Error::contract(format!(
                "span ({}, {}) outside sentence of length {len}",
                s.start, s.end
            )));
        }
        if let Some(other) = spans[..k].iter().find(|o| overlaps(o.bounds(), s.bounds())) {
            return Err(Error::contract(format!("overlapping spans {other} and {s}")));
        }
        tags[s.start - 1] = format!("B-{}", s.label);
        for tag in &mut tags[s.start..s.end] {
            *tag = format!("I-{}", s.label);
        }
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let tags = ["B-A0", "O", "B-A1", "I-A1"];
        let spans = bio_to_spans(&tags).unwrap();
        assert_eq!(
            spans,
            vec![LabeledSpan::new(1, 1, "A0"), LabeledSpan::new(3, 4, "A1")]
        );
        assert_eq!(spans_to_bio(&spans, 4).unwrap(), tags);
    }

    #[test]
    fn all_outside() {
        assert!(bio_to_spans(&["O", "O"]).unwrap().is_empty());
        assert_eq!(spans_to_bio(&[], 3).unwrap(), vec!["O", "O", "O"]);
    }

    #[test]
    fn strict_prefix_errors() {
        assert!(matches!(
            bio_to_spans(&["I-A0", "O"]),
            Err(Error::Tagging { position: 1, .. })
        ));
        assert!(bio_to_spans(&["B-A0", "I-A1"]).is_err());
        assert!(bio_to_spans(&["X"]).is_err());
    }

    #[test]
    fn adjacent_b_tags_split_spans() {
        let spans = bio_to_spans(&["B-TMP", "B-TMP", "I-TMP"]).unwrap();
        assert_eq!(
            spans,
            vec![LabeledSpan::new(1, 1, "TMP"), LabeledSpan::new(2, 3, "TMP")]
        );
    }

    #[test]
    fn overlapping_spans_rejected() {
        let spans = [LabeledSpan::new(1, 2, "A0"), LabeledSpan::new(2, 3, "A1")];
        assert!(spans_to_bio(&spans, 3).is_err());
    }

    fn span_sets() -> impl Strategy<Value = (Vec<LabeledSpan>, usize)> {
        (1usize..15).prop_flat_map(|len| {
            (
                proptest::collection::vec((0u8..4, 0usize..4, 0usize..3), 0..8),
                Just(len),
            )
                .prop_map(|(pieces, len)| {
                    // walk left to right: gap, then span of some width
                    let labels = ["A0", "A1", "TMP", "LOC"];
                    let mut pos = 1;
                    let mut spans = Vec::new();
                    for (label, gap, width) in pieces {
                        let start = pos + gap;
                        let end = start + width;
                        if end > len {
                            break;
                        }
                        spans.push(LabeledSpan::new(start, end, labels[label as usize]));
                        pos = end + 1;
                    }
                    (spans, len)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip((spans, len) in span_sets()) {
            let tags = spans_to_bio(&spans, len).unwrap();
            prop_assert_eq!(bio_to_spans(&tags).unwrap(), spans);
        }
    }
}
