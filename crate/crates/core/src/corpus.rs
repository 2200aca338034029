//! Corpus ingestion: review lines -> sentences -> tokens, plus the
//! vocabulary and word frequency table the rest of the pipeline consumes.
//!
//! Tokenization is word-level: lowercase, split on whitespace, and every
//! non-alphanumeric character becomes its own token. Detokenization
//! reproduces the lowercased sentence text byte for byte.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// One token of a sentence. `char_span` is a byte range into the owning
/// sentence's (lowercased) text; `surface` is exactly that byte slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub id: usize,
    pub char_span: (usize, usize),
}

/// A sentence with strictly increasing, non-overlapping token spans.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<Token>,
    pub doc_id: usize,
}

impl Sentence {
    pub fn token_ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Rebuild the sentence text from token surfaces and the original
    /// inter-token whitespace.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for tok in &self.tokens {
            out.push_str(&self.text[cursor..tok.char_span.0]);
            out.push_str(&tok.surface);
            cursor = tok.char_span.1;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub line_no: usize,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocab: Vocab,
}

/// Word frequency table over the corpus.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// Frequency for a node word that may be a multi-word phrase: the
    /// rarest constituent token governs.
    pub fn phrase_count(&self, phrase: &str) -> u64 {
        phrase
            .split_whitespace()
            .map(|w| self.count(w))
            .min()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Vocabulary with reserved ids for [PAD], [UNK], [CLS], [SEP], [MASK].
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocab {
    fn with_specials() -> Vocab {
        let words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab {
            words,
            index,
            counts: vec![0; SPECIALS.len()],
        }
    }

    /// Build from a frequency table: words sorted by count descending,
    /// ties alphabetical, after the reserved specials.
    pub fn from_frequencies(freq: &FrequencyTable) -> Vocab {
        let mut vocab = Vocab::with_specials();
        let mut entries: Vec<(&String, &u64)> = freq.counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (word, count) in entries {
            let id = vocab.words.len();
            vocab.index.insert(word.clone(), id);
            vocab.words.push(word.clone());
            vocab.counts.push(*count);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Id for a word, falling back to [UNK].
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Token ids for a word or space-separated phrase, [UNK] for OOV parts.
    pub fn phrase_ids(&self, phrase: &str) -> Vec<usize> {
        phrase.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, word) in self.words.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", word, id, self.counts[id]));
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Vocab> {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let word = parts
                .next()
                .ok_or_else(|| Error::parse(path, i + 1, "missing word"))?;
            let id: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, i + 1, "bad id"))?;
            let count: u64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, i + 1, "bad count"))?;
            if id != words.len() {
                return Err(Error::parse(path, i + 1, "ids must be dense and in order"));
            }
            words.push(word.to_string());
            counts.push(count);
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocab {
            words,
            index,
            counts,
        })
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Split lowercased text into (surface, byte span) pairs: runs of
/// alphanumeric characters are words, every other non-whitespace
/// character is a single-character token.
pub fn split_tokens(text: &str) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (pos, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(pos);
            }
        } else {
            if let Some(start) = word_start.take() {
                out.push((text[start..pos].to_string(), (start, pos)));
            }
            if !c.is_whitespace() {
                let end = pos + c.len_utf8();
                out.push((text[pos..end].to_string(), (pos, end)));
            }
        }
    }
    if let Some(start) = word_start {
        out.push((text[start..].to_string(), (start, text.len())));
    }
    out
}

/// Tokenize one sentence string against a vocabulary (OOV words map to
/// [UNK]). Lowercases first; spans index into the lowercased text.
pub fn tokenize(text: &str, vocab: &Vocab, doc_id: usize) -> Sentence {
    let lower = text.to_lowercase();
    let tokens = split_tokens(&lower)
        .into_iter()
        .map(|(surface, char_span)| Token {
            id: vocab.id(&surface),
            surface,
            char_span,
        })
        .collect();
    Sentence {
        text: lower,
        tokens,
        doc_id,
    }
}

const SENTENCE_DELIMS: [char; 8] = [
    '.', '!', '?', ';', '\u{3002}', '\u{ff01}', '\u{ff1f}', '\u{ff1b}',
];

/// Split a document line into sentence strings. The delimiter stays with
/// its sentence; a trailing undelimited fragment is kept as a sentence.
pub fn split_sentences(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for (pos, c) in line.char_indices() {
        if SENTENCE_DELIMS.contains(&c) {
            let end = pos + c.len_utf8();
            let piece = &line[start..end];
            if !piece.trim().is_empty() {
                out.push(piece.trim().to_string());
            }
            start = end;
        }
    }
    let tail = &line[start..];
    if !tail.trim().is_empty() {
        out.push(tail.trim().to_string());
    }
    out
}

/// Build tokenized documents plus vocabulary from raw lines. Blank lines
/// are skipped; `line_no` is the 1-based position in the input.
pub fn corpus_from_lines<I: IntoIterator<Item = String>>(lines: I) -> Corpus {
    // First pass: surfaces only, so the vocabulary covers every token.
    let mut raw_docs: Vec<(usize, Vec<String>)> = Vec::new();
    let mut freq = FrequencyTable::default();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentences = split_sentences(&line);
        for s in &sentences {
            for (surface, _) in split_tokens(&s.to_lowercase()) {
                *freq.counts.entry(surface).or_insert(0) += 1;
            }
        }
        raw_docs.push((i + 1, sentences));
    }
    let vocab = Vocab::from_frequencies(&freq);
    let documents = raw_docs
        .into_iter()
        .map(|(line_no, sentences)| Document {
            line_no,
            sentences: sentences
                .iter()
                .map(|s| tokenize(s, &vocab, line_no))
                .collect(),
        })
        .collect();
    Corpus { documents, vocab }
}

/// Read a UTF-8 review file, one review per line. Invalid UTF-8 is
/// rejected with the offending line number.
pub fn ingest(path: &Path) -> Result<Corpus> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        match std::str::from_utf8(raw) {
            Ok(s) => lines.push(s.to_string()),
            Err(_) => {
                return Err(Error::InvalidUtf8 {
                    path: path.to_path_buf(),
                    line: i + 1,
                })
            }
        }
    }
    Ok(corpus_from_lines(lines))
}

/// Exact token occurrence counts over an already-tokenized corpus.
pub fn build_frequency_table(corpus: &Corpus) -> FrequencyTable {
    let mut freq = FrequencyTable::default();
    for doc in &corpus.documents {
        for sentence in &doc.sentences {
            for tok in &sentence.tokens {
                *freq.counts.entry(tok.surface.clone()).or_insert(0) += 1;
            }
        }
    }
    freq
}

impl Corpus {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences().map(|s| s.tokens.len()).sum()
    }
}
