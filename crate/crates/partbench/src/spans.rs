//! BIO tag sequences and span merging.

use serde::{Deserialize, Serialize};

/// Token tag: beginning, inside, or outside of a span to segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    /// Class index used by the span cross-entropy loss: B=0, I=1, O=2.
    pub fn class_index(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::I => 1,
            Tag::O => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSequence {
    tags: Vec<Tag>,
}

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Self {
        Self { tags }
    }

    /// Parses a compact string like `"BIIOB"`. Any other character is an error.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                'B' | 'b' => Some(Tag::B),
                'I' | 'i' => Some(Tag::I),
                'O' | 'o' => Some(Tag::O),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Contiguous token span, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// What to do with an `I` tag that has no open span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrphanInside {
    /// Repair: the orphan `I` opens a new span.
    #[default]
    StartsSpan,
    /// Strict: the orphan `I` is dropped.
    Dropped,
}

/// Greedily merges contiguous B→I chains into spans.
///
/// Every `B` starts a span, following `I`s extend it, and `O` closes it.
/// An `I` without an open span starts one (see [`merge_bio_spans_with`]
/// for the strict variant). Spans come back ordered by start index.
pub fn merge_bio_spans(tags: &TagSequence) -> Vec<Span> {
    merge_bio_spans_with(tags, OrphanInside::StartsSpan)
}

pub fn merge_bio_spans_with(tags: &TagSequence, orphan: OrphanInside) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &tag) in tags.tags().iter().enumerate() {
        match tag {
            Tag::B => {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
                open = Some(Span { start: i, end: i });
            }
            Tag::I => match (&mut open, orphan) {
                (Some(span), _) => span.end = i,
                (None, OrphanInside::StartsSpan) => open = Some(Span { start: i, end: i }),
                (None, OrphanInside::Dropped) => {}
            },
            Tag::O => {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
            }
        }
    }
    if let Some(span) = open {
        spans.push(span);
    }
    spans
}

/// Span enumeration by a different route, for checking the merge rule:
/// collect maximal runs of non-O positions, then cut each run before every
/// interior B.
pub fn enumerate_spans_by_runs(tags: &TagSequence) -> Vec<Span> {
    let t = tags.tags();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < t.len() {
        if t[i] == Tag::O {
            i += 1;
            continue;
        }
        let start = i;
        while i < t.len() && t[i] != Tag::O {
            i += 1;
        }
        runs.push((start, i - 1));
    }
    let mut out = Vec::new();
    for (start, end) in runs {
        let mut s = start;
        for p in start + 1..=end {
            if t[p] == Tag::B {
                out.push(Span { start: s, end: p - 1 });
                s = p;
            }
        }
        out.push(Span { start: s, end });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(pairs: &[(usize, usize)]) -> Vec<Span> {
        pairs
            .iter()
            .map(|&(start, end)| Span { start, end })
            .collect()
    }

    #[test]
    fn all_outside_yields_nothing() {
        assert_eq!(merge_bio_spans(&TagSequence::parse("OOO").unwrap()), vec![]);
        assert_eq!(merge_bio_spans(&TagSequence::default()), vec![]);
    }

    #[test]
    fn chains_merge_and_b_restarts() {
        assert_eq!(
            merge_bio_spans(&TagSequence::parse("BIIOB").unwrap()),
            spans(&[(0, 2), (4, 4)])
        );
        assert_eq!(
            merge_bio_spans(&TagSequence::parse("BIBI").unwrap()),
            spans(&[(0, 1), (2, 3)])
        );
    }

    #[test]
    fn orphan_inside_repairs_by_default() {
        assert_eq!(
            merge_bio_spans(&TagSequence::parse("IIOBI").unwrap()),
            spans(&[(0, 1), (3, 4)])
        );
    }

    #[test]
    fn strict_mode_drops_orphan_inside() {
        assert_eq!(
            merge_bio_spans_with(&TagSequence::parse("IIOBI").unwrap(), OrphanInside::Dropped),
            spans(&[(3, 4)])
        );
    }

    #[test]
    fn exhaustive_equivalence_with_run_enumerator_up_to_len_6() {
        for n in 0..=6usize {
            for code in 0..3usize.pow(n as u32) {
                let mut c = code;
                let tags: Vec<Tag> = (0..n)
                    .map(|_| {
                        let t = match c % 3 {
                            0 => Tag::B,
                            1 => Tag::I,
                            _ => Tag::O,
                        };
                        c /= 3;
                        t
                    })
                    .collect();
                let seq = TagSequence::new(tags);
                assert_eq!(merge_bio_spans(&seq), enumerate_spans_by_runs(&seq), "{seq:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn spans_are_sorted_disjoint_and_cover_tagged_positions(
            tags in proptest::collection::vec(0u8..3, 0..64)
        ) {
            let seq = TagSequence::new(
                tags.iter().map(|&t| [Tag::B, Tag::I, Tag::O][t as usize]).collect()
            );
            let spans = merge_bio_spans(&seq);
            let mut covered = vec![false; seq.len()];
            let mut prev_end: Option<usize> = None;
            for span in &spans {
                prop_assert!(span.start <= span.end);
                if let Some(pe) = prev_end {
                    prop_assert!(span.start > pe, "spans overlap or are unsorted");
                }
                prev_end = Some(span.end);
                for p in span.start..=span.end {
                    covered[p] = true;
                }
            }
            for (i, &tag) in seq.tags().iter().enumerate() {
                prop_assert_eq!(covered[i], tag != Tag::O);
            }
        }
    }
}
