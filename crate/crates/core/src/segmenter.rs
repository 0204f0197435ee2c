//! Rule-based sentence segmentation.
//!
//! A sentence ends at `.`, `!` or `?` (a run of them, optionally followed by
//! closing quotes or brackets) when the next non-whitespace character starts a
//! new sentence: an uppercase letter or a digit, possibly behind an opening
//! quote or bracket. A period that closes a known abbreviation never ends a
//! sentence. Blank lines are hard boundaries regardless of punctuation.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{201c}', '\u{2018}', '\u{ab}'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 0-based position within the document.
    pub index: usize,
    pub text: String,
    /// Byte offsets of `text` within the document text.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

impl SegmentedDocument {
    /// Total sentence count, always at least 1.
    pub fn n(&self) -> usize {
        self.sentences.len()
    }

    pub fn sentence_texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }
}

/// Anything that can split text into sentences.
pub trait Segmenter: Send + Sync {
    fn segment(&self, text: &str) -> Result<Vec<Sentence>>;

    fn segment_document(&self, doc_id: &str, text: &str) -> Result<SegmentedDocument> {
        let sentences = self
            .segment(text)
            .map_err(|e| Error::Parameter(format!("document {doc_id}: {e}")))?;
        Ok(SegmentedDocument {
            doc_id: doc_id.to_string(),
            sentences,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self::from_list(DEFAULT_ABBREVIATIONS)
    }
}

impl RuleSegmenter {
    /// Parses an abbreviation list: one token per line, blank lines ignored.
    pub fn from_list(list: &str) -> Self {
        let abbreviations = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self { abbreviations }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let list = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_list(&list))
    }

    fn is_abbreviation(&self, block: &str, period_at: usize) -> bool {
        let word_start = block[..period_at]
            .rfind(char::is_whitespace)
            .map(|i| i + block[i..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(0);
        let word = block[word_start..=period_at].trim_start_matches(OPENERS);
        self.abbreviations.contains(&word.to_lowercase())
    }

    /// Split points (exclusive byte ends) inside one hard-boundary block.
    fn split_points(&self, block: &str) -> Vec<usize> {
        let chars: Vec<(usize, char)> = block.char_indices().collect();
        let mut ends = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if !TERMINATORS.contains(&chars[i].1) {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < chars.len() && TERMINATORS.contains(&chars[i].1) {
                i += 1;
            }
            let lone_period = i - run_start == 1 && chars[run_start].1 == '.';
            let period_at = chars[run_start].0;
            while i < chars.len() && CLOSERS.contains(&chars[i].1) {
                i += 1;
            }
            let end = chars.get(i).map_or(block.len(), |c| c.0);

            let mut j = i;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j == i || j == chars.len() {
                continue;
            }
            while j < chars.len() && OPENERS.contains(&chars[j].1) {
                j += 1;
            }
            let starts_sentence = chars
                .get(j)
                .is_some_and(|&(_, c)| c.is_uppercase() || c.is_ascii_digit());
            if !starts_sentence {
                continue;
            }
            if lone_period && self.is_abbreviation(block, period_at) {
                continue;
            }
            ends.push(end);
        }
        ends
    }
}

/// Byte ranges of the text separated by whitespace runs holding two or more newlines.
fn hard_blocks(text: &str) -> Vec<Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((pos, c)) = iter.next() {
        if !c.is_whitespace() {
            continue;
        }
        let mut newlines = usize::from(c == '\n');
        let mut run_end = pos + c.len_utf8();
        while let Some(&(p, w)) = iter.peek() {
            if !w.is_whitespace() {
                break;
            }
            newlines += usize::from(w == '\n');
            run_end = p + w.len_utf8();
            iter.next();
        }
        if newlines >= 2 {
            blocks.push(start..pos);
            start = run_end;
        }
    }
    blocks.push(start..text.len());
    blocks
}

impl Segmenter for RuleSegmenter {
    fn segment(&self, text: &str) -> Result<Vec<Sentence>> {
        if text.trim().is_empty() {
            return Err(Error::Parameter(
                "cannot segment empty or whitespace-only text".into(),
            ));
        }
        let mut sentences = Vec::new();
        for block in hard_blocks(text) {
            let block_text = &text[block.clone()];
            let mut piece_start = 0;
            let mut ends = self.split_points(block_text);
            ends.push(block_text.len());
            for end in ends {
                let piece = &block_text[piece_start..end];
                let trimmed = piece.trim();
                if !trimmed.is_empty() {
                    let lead = piece.len() - piece.trim_start().len();
                    let start = block.start + piece_start + lead;
                    sentences.push(Sentence {
                        index: sentences.len(),
                        text: trimmed.to_string(),
                        span: start..start + trimmed.len(),
                    });
                }
                piece_start = end;
            }
        }
        Ok(sentences)
    }
}
