//! Span-annotated tokenization over a shared caption string.
//!
//! Every token carries a half-open byte range into the original caption
//! text. Special tokens (BOS, EOS, padding) have no surface text in the
//! caption and carry an empty range. All cross-tokenizer work is done in
//! these original-string coordinates, so tokenizers that normalize text only
//! need to report where each token came from.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    #[serde(rename = "caption_id")]
    pub id: String,
    pub text: String,
}

impl Caption {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token_id: u32,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(token_id: u32, surface: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            token_id,
            surface: surface.into(),
            start,
            end,
        }
    }

    pub fn special(token_id: u32, surface: impl Into<String>, at: usize) -> Self {
        Self::new(token_id, surface, at, at)
    }

    pub fn is_special(&self) -> bool {
        self.start == self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Non-empty byte intersection with `other`.
    pub fn intersects(&self, other: &TokenSpan) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

/// A validated tokenization of one caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenization {
    caption_id: String,
    tokenizer: String,
    text: String,
    spans: Vec<TokenSpan>,
}

impl Tokenization {
    /// Validates span ordering, bounds, overlap and coverage.
    ///
    /// Every non-whitespace character of `text` must lie inside some
    /// non-special span.
    pub fn new(
        caption_id: impl Into<String>,
        tokenizer: impl Into<String>,
        text: impl Into<String>,
        spans: Vec<TokenSpan>,
    ) -> Result<Self> {
        let caption_id = caption_id.into();
        let text = text.into();
        let fail = |reason: String| Error::Coverage {
            caption_id: caption_id.clone(),
            reason,
        };

        let mut prev_start = 0usize;
        let mut prev_end: Option<usize> = None;
        let mut covered = vec![false; text.len()];
        for (k, span) in spans.iter().enumerate() {
            if span.start > span.end || span.end > text.len() {
                return Err(fail(format!(
                    "token {k} span {}..{} outside text of {} bytes",
                    span.start,
                    span.end,
                    text.len()
                )));
            }
            if span.start < prev_start {
                return Err(fail(format!("token {k} is not ordered by start offset")));
            }
            prev_start = span.start;
            if span.is_special() {
                continue;
            }
            if let Some(end) = prev_end {
                if span.start < end {
                    return Err(fail(format!("token {k} overlaps its predecessor")));
                }
            }
            prev_end = Some(span.end);
            covered[span.start..span.end]
                .iter_mut()
                .for_each(|c| *c = true);
        }

        for (offset, ch) in text.char_indices() {
            if ch.is_whitespace() {
                continue;
            }
            if !covered[offset..offset + ch.len_utf8()].iter().all(|&c| c) {
                return Err(fail(format!("{ch:?} at byte {offset} is not covered")));
            }
        }

        Ok(Self {
            caption_id,
            tokenizer: tokenizer.into(),
            text,
            spans,
        })
    }

    pub fn caption_id(&self) -> &str {
        &self.caption_id
    }

    pub fn tokenizer(&self) -> &str {
        &self.tokenizer
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// The original bytes under token `k`, or its surface when the span does
    /// not fall on character boundaries.
    pub fn source_text(&self, k: usize) -> &str {
        let span = &self.spans[k];
        self.text
            .get(span.start..span.end)
            .unwrap_or(span.surface.as_str())
    }

    /// Rebuilds the caption from non-special tokens, copying the original
    /// text between consecutive tokens.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for (k, span) in self.spans.iter().enumerate() {
            if span.is_special() {
                continue;
            }
            out.push_str(&self.text[cursor..span.start]);
            out.push_str(self.source_text(k));
            cursor = span.end;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}

/// A tokenizer that reports byte spans over its input.
pub trait SpanTokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn tokenize(&self, caption: &Caption) -> Result<Tokenization>;
}

impl<T: SpanTokenizer + ?Sized> SpanTokenizer for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn tokenize(&self, caption: &Caption) -> Result<Tokenization> {
        (**self).tokenize(caption)
    }
}

fn fnv1a(s: &str) -> u32 {
    s.bytes().fold(0x811c_9dc5u32, |h, b| {
        (h ^ u32::from(b)).wrapping_mul(0x0100_0193)
    })
}

fn words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, ch)) = rest.peek() {
            if !ch.is_whitespace() {
                break;
            }
            rest.next();
        }
        let (start, _) = *rest.peek()?;
        let mut end = start;
        while let Some(&(i, ch)) = rest.peek() {
            if ch.is_whitespace() {
                break;
            }
            end = i + ch.len_utf8();
            rest.next();
        }
        Some((start, &text[start..end]))
    })
}

/// Splits on Unicode whitespace. Token ids are the 32-bit FNV-1a hash of
/// the surface, so the same word always gets the same id.
#[derive(Debug, Clone, Default)]
pub struct WhitespaceTokenizer;

impl SpanTokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokenize(&self, caption: &Caption) -> Result<Tokenization> {
        let spans = words(&caption.text)
            .map(|(start, w)| TokenSpan::new(fnv1a(w), w, start, start + w.len()))
            .collect();
        Tokenization::new(&caption.id, self.name(), &caption.text, spans)
    }
}

/// Greedy longest-match over a fixed vocabulary, applied independently to
/// each whitespace-separated word.
#[derive(Debug, Clone)]
pub struct GreedyTokenizer {
    name: String,
    vocab: HashMap<String, u32>,
    max_piece: usize,
}

impl GreedyTokenizer {
    /// Token ids are positions in `pieces`; duplicates keep their first id.
    pub fn new<I, P>(name: impl Into<String>, pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: Into<String>,
    {
        let mut vocab = HashMap::new();
        let mut max_piece = 0;
        for (id, piece) in pieces.into_iter().enumerate() {
            let piece = piece.into();
            if piece.is_empty() {
                return Err(Error::Config("empty vocabulary piece".into()));
            }
            max_piece = max_piece.max(piece.len());
            vocab.entry(piece).or_insert(id as u32);
        }
        if vocab.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        Ok(Self {
            name: name.into(),
            vocab,
            max_piece,
        })
    }

    /// Vocabulary file: one piece per line, id = line index.
    pub fn from_vocab_text(name: impl Into<String>, text: &str) -> Result<Self> {
        Self::new(name, text.lines().filter(|l| !l.is_empty()))
    }

    fn split_word(&self, word: &str, base: usize, out: &mut Vec<TokenSpan>) -> Result<()> {
        let mut pos = 0;
        while pos < word.len() {
            let rest = &word[pos..];
            let mut len = rest.len().min(self.max_piece);
            let hit = loop {
                if len == 0 {
                    break None;
                }
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.vocab.get(&rest[..len]) {
                        break Some((id, len));
                    }
                }
                len -= 1;
            };
            let Some((id, len)) = hit else {
                let ch = rest.chars().next().unwrap_or_default();
                return Err(Error::Vocab {
                    ch,
                    offset: base + pos,
                });
            };
            out.push(TokenSpan::new(
                id,
                &rest[..len],
                base + pos,
                base + pos + len,
            ));
            pos += len;
        }
        Ok(())
    }
}

impl SpanTokenizer for GreedyTokenizer {
    fn name(&self) -> &str {
        &self.name
    }

    fn tokenize(&self, caption: &Caption) -> Result<Tokenization> {
        let mut spans = Vec::new();
        for (start, w) in words(&caption.text) {
            self.split_word(w, start, &mut spans)?;
        }
        Tokenization::new(&caption.id, self.name(), &caption.text, spans)
    }
}

/// Wraps a tokenizer with BOS/EOS tokens carrying empty spans.
#[derive(Debug, Clone)]
pub struct WithSpecials<T> {
    inner: T,
    bos: Option<u32>,
    eos: Option<u32>,
}

impl<T> WithSpecials<T> {
    pub fn new(inner: T, bos: Option<u32>, eos: Option<u32>) -> Self {
        Self { inner, bos, eos }
    }
}

impl<T: SpanTokenizer> SpanTokenizer for WithSpecials<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn tokenize(&self, caption: &Caption) -> Result<Tokenization> {
        let base = self.inner.tokenize(caption)?;
        let mut spans = Vec::with_capacity(base.len() + 2);
        if let Some(id) = self.bos {
            spans.push(TokenSpan::special(id, "<s>", 0));
        }
        spans.extend(base.spans);
        if let Some(id) = self.eos {
            spans.push(TokenSpan::special(id, "</s>", caption.text.len()));
        }
        Tokenization::new(base.caption_id, base.tokenizer, base.text, spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(t: &Tokenization) -> Vec<(&str, usize, usize)> {
        t.spans()
            .iter()
            .map(|s| (s.surface.as_str(), s.start, s.end))
            .collect()
    }

    #[test]
    fn whitespace_split() {
        let t = WhitespaceTokenizer
            .tokenize(&Caption::new("c", "a red dog"))
            .unwrap();
        assert_eq!(triples(&t), vec![("a", 0, 1), ("red", 2, 5), ("dog", 6, 9)]);
        assert_eq!(t.reconstruct(), "a red dog");
    }

    #[test]
    fn empty_text_gives_no_tokens() {
        let t = WhitespaceTokenizer
            .tokenize(&Caption::new("c", ""))
            .unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn greedy_longest_match() {
        let tok = GreedyTokenizer::new("g", ["red", "cat", "r", "e", "d", "c", "a", "t"]).unwrap();
        let t = tok.tokenize(&Caption::new("c", "redcat")).unwrap();
        assert_eq!(triples(&t), vec![("red", 0, 3), ("cat", 3, 6)]);
        assert_eq!(t.spans()[0].token_id, 0);
        assert_eq!(t.spans()[1].token_id, 1);
    }

    #[test]
    fn greedy_missing_character() {
        let tok = GreedyTokenizer::new("g", ["a", "b"]).unwrap();
        let err = tok.tokenize(&Caption::new("c", "ab z")).unwrap_err();
        assert_eq!(err, Error::Vocab { ch: 'z', offset: 3 });
    }

    #[test]
    fn specials_have_empty_spans() {
        let tok = WithSpecials::new(WhitespaceTokenizer, Some(1), Some(2));
        let t = tok.tokenize(&Caption::new("c", "a b")).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.spans()[0].is_special());
        assert!(t.spans()[3].is_special());
        assert_eq!((t.spans()[3].start, t.spans()[3].end), (3, 3));
        assert_eq!(t.reconstruct(), "a b");
    }

    #[test]
    fn rejects_gap_over_text() {
        let spans = vec![TokenSpan::new(0, "a", 0, 1), TokenSpan::new(0, "dog", 6, 9)];
        let err = Tokenization::new("c", "x", "a red dog", spans).unwrap_err();
        assert!(matches!(err, Error::Coverage { .. }));
    }

    #[test]
    fn rejects_overlap_and_disorder() {
        let overlap = vec![TokenSpan::new(0, "ab", 0, 2), TokenSpan::new(0, "bc", 1, 3)];
        assert!(Tokenization::new("c", "x", "abc", overlap).is_err());
        let disorder = vec![TokenSpan::new(0, "bc", 1, 3), TokenSpan::new(0, "a", 0, 1)];
        assert!(Tokenization::new("c", "x", "abc", disorder).is_err());
        let oob = vec![TokenSpan::new(0, "abcd", 0, 4)];
        assert!(Tokenization::new("c", "x", "abc", oob).is_err());
    }

    #[test]
    fn whitespace_may_stay_uncovered_or_be_covered() {
        // sentencepiece-style tokens that absorb the leading space
        let spans = vec![
            TokenSpan::new(0, "a", 0, 1),
            TokenSpan::new(0, "▁red", 1, 5),
        ];
        let t = Tokenization::new("c", "sp", "a red", spans).unwrap();
        assert_eq!(t.source_text(1), " red");
    }

    #[test]
    fn multibyte_text() {
        let t = WhitespaceTokenizer
            .tokenize(&Caption::new("c", "café  au\tlait"))
            .unwrap();
        assert_eq!(
            triples(&t),
            vec![("café", 0, 5), ("au", 7, 9), ("lait", 10, 14)]
        );
    }
}
