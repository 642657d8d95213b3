//! Thinking-block extraction and subtrajectory segmentation.
//!
//! `extract_thinking` splits a raw answer into the delimited thinking text
//! and the final-answer text. `segment` partitions the thinking text into
//! subtrajectories at transition markers, losslessly: concatenating the
//! segment texts in order reproduces the thinking text byte for byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Open/close strings delimiting the thinking block inside a raw answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub open: String,
    pub close: String,
}

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

/// A raw answer split into thinking text and final answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkingProcess {
    /// Verbatim content strictly between the delimiters (or the whole answer
    /// when no delimiters are present).
    pub text: String,
    /// Verbatim text after the close delimiter.
    pub final_answer: String,
    pub had_delimiters: bool,
    /// Verbatim text before the open delimiter; usually empty.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub preface: String,
}

impl ThinkingProcess {
    /// Rebuild the raw answer this process was extracted from.
    pub fn reconstruct(&self, delimiters: &Delimiters) -> String {
        if self.had_delimiters {
            format!(
                "{}{}{}{}{}",
                self.preface, delimiters.open, self.text, delimiters.close, self.final_answer
            )
        } else {
            self.text.clone()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("empty thinking delimiter")]
    EmptyDelimiter,
    #[error("thinking block opened with {open:?} but never closed with {close:?}")]
    Truncated { open: String, close: String },
    #[error("close delimiter {close:?} appears before any {open:?}")]
    CloseBeforeOpen { open: String, close: String },
}

/// Split a raw answer at its thinking delimiters.
///
/// When both delimiters are present, the thinking text is the content
/// strictly between the first open and the first close after it, and the
/// final answer is everything after that close. When neither is present the
/// whole answer is treated as thinking. An unterminated open delimiter is a
/// truncated trace and an error.
pub fn extract_thinking(
    answer_raw: &str,
    delimiters: &Delimiters,
) -> Result<ThinkingProcess, ExtractError> {
    if delimiters.open.is_empty() || delimiters.close.is_empty() {
        return Err(ExtractError::EmptyDelimiter);
    }
    let open_pos = answer_raw.find(&delimiters.open);
    let close_pos = answer_raw.find(&delimiters.close);
    match (open_pos, close_pos) {
        (None, None) => Ok(ThinkingProcess {
            text: answer_raw.to_string(),
            final_answer: String::new(),
            had_delimiters: false,
            preface: String::new(),
        }),
        (None, Some(_)) => Err(ExtractError::CloseBeforeOpen {
            open: delimiters.open.clone(),
            close: delimiters.close.clone(),
        }),
        (Some(open), _) => {
            if let Some(close) = close_pos.filter(|&c| c < open) {
                let _ = close;
                return Err(ExtractError::CloseBeforeOpen {
                    open: delimiters.open.clone(),
                    close: delimiters.close.clone(),
                });
            }
            let body_start = open + delimiters.open.len();
            match answer_raw[body_start..].find(&delimiters.close) {
                Some(rel) => {
                    let close = body_start + rel;
                    Ok(ThinkingProcess {
                        text: answer_raw[body_start..close].to_string(),
                        final_answer: answer_raw[close + delimiters.close.len()..].to_string(),
                        had_delimiters: true,
                        preface: answer_raw[..open].to_string(),
                    })
                }
                None => Err(ExtractError::Truncated {
                    open: delimiters.open.clone(),
                    close: delimiters.close.clone(),
                }),
            }
        }
    }
}

/// Marker label for an unmarked leading segment.
pub const PREAMBLE_MARKER: &str = "preamble";

/// Default transition phrases opening a new subtrajectory.
pub const DEFAULT_MARKERS: [&str; 6] = [
    "Alternatively",
    "Another method",
    "Another approach",
    "Another way",
    "Let me try another",
    "Wait, maybe another",
];

/// Where and how transition markers split the thinking text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerConfig {
    pub markers: Vec<String>,
    pub case_sensitive: bool,
    /// When set, a marker only splits if it starts the text or follows a
    /// sentence terminator (`.`, `!`, `?`, or a newline) plus optional
    /// spaces. Avoids splitting on "alternatively" used mid-sentence.
    pub require_line_or_sentence_start: bool,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        MarkerConfig {
            markers: DEFAULT_MARKERS.iter().map(|m| m.to_string()).collect(),
            case_sensitive: false,
            require_line_or_sentence_start: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkerConfigError {
    #[error("marker list is empty")]
    NoMarkers,
    #[error("marker phrase at position {0} is empty")]
    EmptyMarker(usize),
}

impl MarkerConfig {
    pub fn validate(&self) -> Result<(), MarkerConfigError> {
        if self.markers.is_empty() {
            return Err(MarkerConfigError::NoMarkers);
        }
        if let Some(i) = self.markers.iter().position(|m| m.is_empty()) {
            return Err(MarkerConfigError::EmptyMarker(i));
        }
        Ok(())
    }
}

/// One contiguous verbatim slice of the thinking text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtrajectory {
    pub index: usize,
    pub text: String,
    /// The transition phrase that opened this segment, or
    /// [`PREAMBLE_MARKER`] for an unmarked leading segment.
    pub marker: String,
    /// `[start, end)` offsets into the thinking text, in Unicode scalar
    /// values (not bytes), so downstream consumers in any language can
    /// re-slice.
    pub char_span: (usize, usize),
}

/// Partition thinking text into subtrajectories at marker occurrences.
///
/// Content before the first accepted marker becomes segment 0 (the
/// preamble). With no accepted marker the whole text is one segment. Empty
/// text yields no segments. Markers sharing a prefix resolve longest-first.
pub fn segment(thinking: &ThinkingProcess, config: &MarkerConfig) -> Vec<Subtrajectory> {
    let text = thinking.text.as_str();
    if text.is_empty() {
        return Vec::new();
    }

    // ASCII-only case folding keeps byte offsets valid in the original text.
    let folded;
    let haystack = if config.case_sensitive {
        text
    } else {
        folded = text.to_ascii_lowercase();
        &folded
    };
    let mut needles: Vec<(String, &str)> = config
        .markers
        .iter()
        .map(|m| {
            let key = if config.case_sensitive {
                m.clone()
            } else {
                m.to_ascii_lowercase()
            };
            (key, m.as_str())
        })
        .collect();
    // Longest first, so at equal positions the longest marker wins.
    needles.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));

    let mut candidates: Vec<(usize, usize)> = Vec::new(); // (byte pos, needle idx)
    for (ni, (key, _)) in needles.iter().enumerate() {
        for (pos, _) in haystack.match_indices(key.as_str()) {
            candidates.push((pos, ni));
        }
    }
    candidates.sort_unstable();

    let mut splits: Vec<(usize, &str)> = Vec::new(); // (byte pos, original marker)
    let mut next_allowed = 0usize;
    for (pos, ni) in candidates {
        if pos < next_allowed {
            continue; // inside an already accepted marker
        }
        if config.require_line_or_sentence_start && !at_split_position(text, pos) {
            continue;
        }
        splits.push((pos, needles[ni].1));
        next_allowed = pos + needles[ni].0.len();
    }

    let mut boundaries: Vec<(usize, &str)> = Vec::new();
    match splits.first() {
        Some(&(0, marker)) => boundaries.push((0, marker)),
        Some(_) | None => boundaries.push((0, PREAMBLE_MARKER)),
    }
    for &(pos, marker) in &splits {
        if pos > 0 {
            boundaries.push((pos, marker));
        }
    }

    let mut segments = Vec::with_capacity(boundaries.len());
    let mut char_pos = 0usize;
    for (i, &(start, marker)) in boundaries.iter().enumerate() {
        let end = boundaries.get(i + 1).map_or(text.len(), |&(p, _)| p);
        let slice = &text[start..end];
        let char_len = slice.chars().count();
        segments.push(Subtrajectory {
            index: i,
            text: slice.to_string(),
            marker: marker.to_string(),
            char_span: (char_pos, char_pos + char_len),
        });
        char_pos += char_len;
    }
    segments
}

/// Slice thinking text back into subtrajectories from recorded char spans.
///
/// Used by stages that consume a previously recorded segmentation instead of
/// re-segmenting, so the recorded spans stay authoritative.
pub fn subtrajectories_from_spans(
    text: &str,
    spans: &[(usize, usize, String)],
) -> Result<Vec<Subtrajectory>, SpanError> {
    let mut out = Vec::with_capacity(spans.len());
    let total_chars = text.chars().count();
    let mut byte_at_char = {
        // One forward pass; spans are monotone.
        let mut iter = text.char_indices();
        let mut current_char = 0usize;
        let mut current_byte = 0usize;
        move |target_char: usize| -> Option<usize> {
            while current_char < target_char {
                match iter.next() {
                    Some((_, c)) => {
                        current_byte += c.len_utf8();
                        current_char += 1;
                    }
                    None => return None,
                }
            }
            Some(current_byte)
        }
    };
    let mut expected_start = 0usize;
    for (i, (start, end, marker)) in spans.iter().enumerate() {
        if *start != expected_start || end < start || *end > total_chars {
            return Err(SpanError {
                index: i,
                span: (*start, *end),
            });
        }
        let byte_start = byte_at_char(*start).ok_or(SpanError {
            index: i,
            span: (*start, *end),
        })?;
        let byte_end = byte_at_char(*end).ok_or(SpanError {
            index: i,
            span: (*start, *end),
        })?;
        out.push(Subtrajectory {
            index: i,
            text: text[byte_start..byte_end].to_string(),
            marker: marker.clone(),
            char_span: (*start, *end),
        });
        expected_start = *end;
    }
    if expected_start != total_chars {
        return Err(SpanError {
            index: spans.len(),
            span: (expected_start, total_chars),
        });
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("subtrajectory span {index} ({span:?}) does not cover the thinking text")]
pub struct SpanError {
    pub index: usize,
    pub span: (usize, usize),
}

fn at_split_position(text: &str, pos: usize) -> bool {
    if pos == 0 {
        return true;
    }
    let before = text[..pos].trim_end_matches([' ', '\t']);
    matches!(before.chars().last(), None | Some('.' | '!' | '?' | '\n' | '\r'))
}
