use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Span;

/// Replace the bytes at `span` with `replacement`. A zero-length span is an
/// insertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub span: Span,
    pub replacement: String,
}

impl Edit {
    pub fn replace(span: Span, replacement: impl Into<String>) -> Self {
        Edit { span, replacement: replacement.into() }
    }

    pub fn insert(at: usize, text: impl Into<String>) -> Self {
        Edit { span: Span::new(at, at), replacement: text.into() }
    }

    pub fn delete(span: Span) -> Self {
        Edit { span, replacement: String::new() }
    }

    /// Signed change in text length.
    pub fn delta(&self) -> isize {
        self.replacement.len() as isize - self.span.len() as isize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("edits overlap at {0:?} and {1:?}")]
    OverlappingEdits(Span, Span),
    #[error("edit span {0:?} is outside the text or splits a character")]
    SpanOutOfBounds(Span),
}

fn overlaps(a: Span, b: Span) -> bool {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => a.start == b.start,
        (true, false) => b.start < a.start && a.start < b.end,
        (false, true) => a.start < b.start && b.start < a.end,
        (false, false) => a.start < b.end && b.start < a.end,
    }
}

/// Applies a list of pairwise non-overlapping edits; every byte outside the
/// edited spans is copied unchanged. The result does not depend on the order
/// of `edits`.
pub fn rewrite(text: &str, edits: &[Edit]) -> Result<String, RewriteError> {
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    for e in &sorted {
        let s = e.span;
        if s.end > text.len() || !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(RewriteError::SpanOutOfBounds(s));
        }
    }
    sorted.sort_by_key(|e| (e.span.start, e.span.end));
    for w in sorted.windows(2) {
        if overlaps(w[0].span, w[1].span) {
            return Err(RewriteError::OverlappingEdits(w[0].span, w[1].span));
        }
    }
    // Sorting by start only misses a long edit overlapping a later, non-adjacent one.
    let mut reach = 0usize;
    let mut reach_span = Span::new(0, 0);
    for e in &sorted {
        if !e.span.is_empty() {
            if e.span.start < reach {
                return Err(RewriteError::OverlappingEdits(reach_span, e.span));
            }
        } else if e.span.start < reach && reach_span.start < e.span.start {
            return Err(RewriteError::OverlappingEdits(reach_span, e.span));
        }
        if e.span.end > reach {
            reach = e.span.end;
            reach_span = e.span;
        }
    }

    let growth: isize = sorted.iter().map(|e| e.delta()).sum();
    let mut out = String::with_capacity((text.len() as isize + growth.max(0)) as usize);
    let mut cursor = 0;
    for e in sorted {
        out.push_str(&text[cursor..e.span.start]);
        out.push_str(&e.replacement);
        cursor = e.span.end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Maps a byte position in the pre-edit text to the post-edit text. Positions
/// inside a replaced region map to the start of its replacement. An edit that
/// starts exactly at `pos` (including an insertion) does not move `pos`.
pub fn map_position(pos: usize, edits: &[Edit]) -> usize {
    let mut shift: isize = 0;
    for e in edits {
        if e.span.end <= pos && e.span.start < pos {
            shift += e.delta();
        } else if e.span.start < pos && pos < e.span.end {
            shift += e.span.start as isize - pos as isize;
        }
    }
    (pos as isize + shift) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        assert_eq!(rewrite("abc", &[]).unwrap(), "abc");
    }

    #[test]
    fn operand_swap_example() {
        let text = "if (err >= 0)";
        let out = rewrite(text, &[Edit::replace(Span::new(4, 12), "0 <= err")]).unwrap();
        assert_eq!(out, "if (0 <= err)");
    }

    #[test]
    fn disjoint_edits_commute() {
        let a = Edit::replace(Span::new(0, 1), "X");
        let b = Edit::insert(2, "YY");
        assert_eq!(rewrite("abc", &[a.clone(), b.clone()]).unwrap(), "XbYYc");
        assert_eq!(rewrite("abc", &[b, a]).unwrap(), "XbYYc");
    }

    #[test]
    fn overlap_and_bounds_errors() {
        let r = rewrite("abcdef", &[Edit::replace(Span::new(0, 3), ""), Edit::replace(Span::new(2, 4), "")]);
        assert!(matches!(r, Err(RewriteError::OverlappingEdits(..))));
        let r = rewrite("abcdef", &[Edit::replace(Span::new(0, 5), ""), Edit::insert(1, "x"), Edit::replace(Span::new(3, 4), "")]);
        assert!(matches!(r, Err(RewriteError::OverlappingEdits(..))));
        let r = rewrite("abc", &[Edit::insert(1, "x"), Edit::insert(1, "y")]);
        assert!(matches!(r, Err(RewriteError::OverlappingEdits(..))));
        let r = rewrite("abc", &[Edit::replace(Span::new(2, 9), "")]);
        assert!(matches!(r, Err(RewriteError::SpanOutOfBounds(_))));
        // insertion at a replaced span's start is not an overlap
        assert_eq!(rewrite("abc", &[Edit::insert(1, "x"), Edit::replace(Span::new(1, 2), "B")]).unwrap(), "axBc");
    }

    #[test]
    fn position_mapping() {
        let edits = [Edit::insert(0, "12"), Edit::replace(Span::new(3, 5), "z")];
        assert_eq!(map_position(0, &edits), 0);
        assert_eq!(map_position(1, &edits), 3);
        assert_eq!(map_position(4, &edits), 5);
        assert_eq!(map_position(6, &edits), 7);
    }

    proptest! {
        #[test]
        fn length_accounting(text in "[a-z ]{0,40}", cuts in proptest::collection::vec((0usize..40, 0usize..4, "[A-Z]{0,5}"), 0..6)) {
            // Build disjoint edits by walking left to right.
            let mut edits = Vec::new();
            let mut at = 0;
            for (gap, len, rep) in cuts {
                let start = at + gap;
                let end = start + len;
                if end > text.len() { break; }
                edits.push(Edit::replace(Span::new(start, end), rep));
                at = end + 1;
            }
            let out = rewrite(&text, &edits).unwrap();
            let expected = text.len() as isize + edits.iter().map(Edit::delta).sum::<isize>();
            prop_assert_eq!(out.len() as isize, expected);
            let mut rev = edits.clone();
            rev.reverse();
            prop_assert_eq!(rewrite(&text, &rev).unwrap(), out);
        }
    }
}
