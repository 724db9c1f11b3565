//! Tokenization and sentence segmentation shared by the corpus, vocabulary
//! and lexical modules.

use std::collections::HashSet;
use std::ops::Range;

/// A word token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken<'a> {
    pub text: &'a str,
    pub span: Range<usize>,
}

/// How apostrophes inside a word are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Apostrophes {
    /// `don't` is one token. Used for dictionary rates.
    Keep,
    /// `I'm` splits into `I` and `m`. Used for mention masking so that the
    /// pronoun itself can be masked.
    Split,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_joiner(c: char, apostrophes: Apostrophes) -> bool {
    c == '-' || (apostrophes == Apostrophes::Keep && is_apostrophe(c))
}

/// Words are maximal runs of alphanumeric characters, with hyphens (and
/// optionally apostrophes) allowed between two alphanumerics.
pub fn words(text: &str, apostrophes: Apostrophes) -> Vec<WordToken<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if is_joiner(c, apostrophes)
                && j + 1 < chars.len()
                && chars[j + 1].1.is_alphanumeric()
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = if j < chars.len() { chars[j].0 } else { text.len() };
        out.push(WordToken {
            text: &text[start..end],
            span: start..end,
        });
        i = j;
    }
    out
}

/// Whitespace-delimited word count. Punctuation is not split off.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Splits text into sentences, returned as trimmed byte spans.
pub trait SentenceSegmenter: Send + Sync {
    fn sentence_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.sentence_spans(text)
            .into_iter()
            .map(|r| &text[r])
            .collect()
    }
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "u.s", "u.k",
    "no", "vol", "fig", "gen", "col", "lt", "sgt", "capt", "rev", "mt", "inc", "ltd", "co",
    "corp", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "approx", "dept", "est", "cf", "al",
];

/// Terminal-punctuation segmenter with an abbreviation allowlist.
///
/// A boundary is placed after a run of `.`, `!` or `?` (plus any closing
/// quotes or brackets) when it is followed by whitespace, unless the word
/// ending in `.` is a known abbreviation or a single-letter initial. A blank
/// line always ends a sentence.
#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl RuleSegmenter {
    pub fn new<'a>(abbreviations: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.trim_end_matches('.').to_lowercase())
                .collect(),
        }
    }

    fn is_abbreviation(&self, text: &str, dot: usize) -> bool {
        // word immediately preceding the dot, including internal dots ("e.g")
        let before = &text[..dot];
        let word_start = before
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_whitespace() || matches!(c, '(' | '"' | '\u{201c}'))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        let word = &before[word_start..];
        if word.is_empty() {
            return false;
        }
        let mut cs = word.chars();
        if let (Some(c), None) = (cs.next(), cs.next()) {
            if c.is_uppercase() {
                return true;
            }
        }
        self.abbreviations.contains(&word.to_lowercase())
    }
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

impl SentenceSegmenter for RuleSegmenter {
    fn sentence_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut boundaries = Vec::new();
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if c == '\n' {
                // blank line
                let mut j = i + 1;
                while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                    j += 1;
                }
                if j < chars.len() && chars[j].1 == '\n' {
                    boundaries.push(pos);
                    i = j + 1;
                    continue;
                }
            }
            if matches!(c, '.' | '!' | '?') {
                let mut j = i;
                while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                    j += 1;
                }
                let single_dot = c == '.' && j - i == 1;
                while j < chars.len() && is_closer(chars[j].1) {
                    j += 1;
                }
                let end = if j < chars.len() { chars[j].0 } else { text.len() };
                let followed_by_space = j >= chars.len() || chars[j].1.is_whitespace();
                let abbreviation = single_dot && self.is_abbreviation(text, pos);
                if followed_by_space && !abbreviation {
                    boundaries.push(end);
                }
                i = j;
                continue;
            }
            i += 1;
        }

        let mut spans = Vec::new();
        let mut start = 0;
        for b in boundaries.into_iter().chain(std::iter::once(text.len())) {
            if b < start {
                continue;
            }
            if let Some(span) = trim_span(text, start..b) {
                spans.push(span);
            }
            start = b;
        }
        spans
    }
}

fn trim_span(text: &str, r: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[r.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        Some(r.start + lead..r.start + lead + trimmed.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_keep_and_split_apostrophes() {
        let t = "I'm sure we don't-know it.";
        let keep: Vec<_> = words(t, Apostrophes::Keep).iter().map(|w| w.text).collect();
        assert_eq!(keep, ["I'm", "sure", "we", "don't-know", "it"]);
        let split: Vec<_> = words(t, Apostrophes::Split).iter().map(|w| w.text).collect();
        assert_eq!(split, ["I", "m", "sure", "we", "don", "t-know", "it"]);
    }

    #[test]
    fn word_spans_index_source() {
        let t = "  héllo, wörld ";
        for w in words(t, Apostrophes::Keep) {
            assert_eq!(&t[w.span.clone()], w.text);
        }
    }

    #[test]
    fn segments_on_terminal_punctuation() {
        let seg = RuleSegmenter::default();
        let s = seg.sentences("Hello there. How are you? I'm fine!  Great.");
        assert_eq!(s, ["Hello there.", "How are you?", "I'm fine!", "Great."]);
    }

    #[test]
    fn abbreviations_and_initials_do_not_split() {
        let seg = RuleSegmenter::default();
        let s = seg.sentences("Dr. Smith met J. Doe in the U.S. yesterday. Then he left.");
        assert_eq!(s, ["Dr. Smith met J. Doe in the U.S. yesterday.", "Then he left."]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let seg = RuleSegmenter::default();
        let s = seg.sentences("He said \"stop.\" We did.");
        assert_eq!(s, ["He said \"stop.\"", "We did."]);
    }

    #[test]
    fn blank_line_ends_sentence() {
        let seg = RuleSegmenter::default();
        let s = seg.sentences("A heading\n\nBody text here");
        assert_eq!(s, ["A heading", "Body text here"]);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(RuleSegmenter::default().sentences("   ").is_empty());
    }

    #[test]
    fn ellipsis_is_one_boundary() {
        let seg = RuleSegmenter::default();
        assert_eq!(seg.sentences("Wait... what?"), ["Wait...", "what?"]);
    }
}
