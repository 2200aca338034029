//! Aspect/sentiment term tagging and one-to-one pair matching.
//!
//! Terms are tagged by lexicon lookup (longest match first, left to
//! right); a sentiment span is then paired with its nearest aspect span
//! inside the same sentence, greedily by ascending token gap.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Aspect,
    Sentiment,
}

impl std::fmt::Display for TermKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TermKind::Aspect => write!(f, "aspect"),
            TermKind::Sentiment => write!(f, "sentiment"),
        }
    }
}

/// Position of a sentence inside the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct SentenceId {
    pub doc: usize,
    pub sent: usize,
}

/// An inclusive token range of one kind within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TermSpan {
    pub sentence: SentenceId,
    pub first: usize,
    pub last: usize,
    pub kind: TermKind,
}

impl TermSpan {
    pub fn surface(&self, sentence: &Sentence) -> String {
        sentence.tokens[self.first..=self.last]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Token gap between two non-overlapping spans (0 when adjacent).
pub fn token_gap(a: &TermSpan, b: &TermSpan) -> usize {
    if a.last < b.first {
        b.first - a.last - 1
    } else if b.last < a.first {
        a.first - b.last - 1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectSentimentPair {
    pub aspect: TermSpan,
    pub sentiment: TermSpan,
    pub distance: usize,
}

/// Aspect and sentiment vocabularies, keyed by normalized phrase.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, TermKind>,
    max_phrase_len: usize,
}

impl Lexicon {
    pub fn new() -> Lexicon {
        Lexicon::default()
    }

    pub fn insert(&mut self, phrase: &str, kind: TermKind) -> Result<()> {
        let norm = normalize_phrase(phrase);
        if norm.is_empty() {
            return Err(Error::Invalid("empty lexicon phrase".into()));
        }
        match self.entries.get(&norm) {
            Some(existing) if *existing != kind => {
                return Err(Error::Invalid(format!(
                    "phrase {:?} defined as both {} and {}",
                    norm, existing, kind
                )))
            }
            _ => {}
        }
        self.max_phrase_len = self.max_phrase_len.max(norm.split(' ').count());
        self.entries.insert(norm, kind);
        Ok(())
    }

    /// Parse TSV `word_or_phrase \t kind`, kind in {aspect, sentiment}.
    /// Cross-kind duplicates are rejected with their line number.
    pub fn from_tsv(text: &str, path: &Path) -> Result<Lexicon> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, kind) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `phrase<TAB>kind`"))?;
            let kind = match kind.trim() {
                "aspect" => TermKind::Aspect,
                "sentiment" => TermKind::Sentiment,
                other => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        format!("unknown kind {:?} (want aspect|sentiment)", other),
                    ))
                }
            };
            lex.insert(phrase, kind)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        if lex.entries.is_empty() {
            return Err(Error::parse(path, 0, "lexicon has no entries"));
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_tsv(&text, path)
    }

    pub fn kind_of(&self, phrase: &str) -> Option<TermKind> {
        self.entries.get(&normalize_phrase(phrase)).copied()
    }

    pub fn words_of_kind(&self, kind: TermKind) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(w, _)| w.as_str())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_phrase(phrase: &str) -> String {
    phrase
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Tag maximal non-overlapping lexicon matches, longest match first,
/// scanning left to right.
pub fn tag_terms(sentence: &Sentence, sid: SentenceId, lexicon: &Lexicon) -> Vec<TermSpan> {
    let tokens = &sentence.tokens;
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut hit: Option<(usize, TermKind)> = None;
        let max_len = lexicon.max_phrase_len.min(tokens.len() - i);
        for len in (1..=max_len).rev() {
            let phrase = tokens[i..i + len]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if let Some(kind) = lexicon.kind_of(&phrase) {
                hit = Some((len, kind));
                break;
            }
        }
        match hit {
            Some((len, kind)) => {
                spans.push(TermSpan {
                    sentence: sid,
                    first: i,
                    last: i + len - 1,
                    kind,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

/// Greedy one-to-one matching: repeatedly take the remaining
/// aspect/sentiment pair with the smallest token gap; ties prefer the
/// leftmost sentiment span, then the leftmost aspect span. Each span is
/// used at most once and pairs never cross sentences.
pub fn match_pairs(spans: &[TermSpan]) -> Vec<AspectSentimentPair> {
    let aspects: Vec<&TermSpan> = spans
        .iter()
        .filter(|s| s.kind == TermKind::Aspect)
        .collect();
    let sentiments: Vec<&TermSpan> = spans
        .iter()
        .filter(|s| s.kind == TermKind::Sentiment)
        .collect();

    // All candidates sorted once; a linear sweep skipping used endpoints
    // is equivalent to repeatedly extracting the minimum.
    let mut candidates: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (ai, a) in aspects.iter().enumerate() {
        for (si, s) in sentiments.iter().enumerate() {
            if a.sentence != s.sentence {
                continue;
            }
            candidates.push((
                token_gap(a, s),
                s.first,
                a.first,
                ai * sentiments.len() + si,
            ));
        }
    }
    candidates.sort();

    let mut aspect_used = vec![false; aspects.len()];
    let mut sentiment_used = vec![false; sentiments.len()];
    let mut pairs = Vec::new();
    for (dist, _, _, key) in candidates {
        let (ai, si) = (key / sentiments.len(), key % sentiments.len());
        if aspect_used[ai] || sentiment_used[si] {
            continue;
        }
        aspect_used[ai] = true;
        sentiment_used[si] = true;
        pairs.push(AspectSentimentPair {
            aspect: *aspects[ai],
            sentiment: *sentiments[si],
            distance: dist,
        });
    }
    pairs
}
