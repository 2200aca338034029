//! Synthetic review benchmark: templated reviews over aspect/sentiment
//! lexicons with polarity-coherent clauses, a configurable class
//! imbalance (default 10:1 positive:negative), and generators for all
//! three downstream tasks plus the unlabeled pretraining corpus.

use crate::downstream::{AspectExample, ClsExample, TaggedExample, TaskData};
use crate::rng::Rng;
use crate::terms::{Lexicon, TermKind};

pub const ASPECTS: [&str; 12] = [
    "color", "material", "price", "quality", "battery", "screen", "size", "weight", "design",
    "delivery", "handle", "finish",
];

pub const POSITIVE_WORDS: [&str; 32] = [
    "great",
    "good",
    "excellent",
    "wonderful",
    "fantastic",
    "amazing",
    "superb",
    "lovely",
    "perfect",
    "nice",
    "awesome",
    "brilliant",
    "solid",
    "splendid",
    "delightful",
    "impressive",
    "outstanding",
    "charming",
    "pleasant",
    "graceful",
    "marvelous",
    "stunning",
    "elegant",
    "remarkable",
    "radiant",
    "flawless",
    "exquisite",
    "sturdy",
    "gorgeous",
    "refined",
    "vibrant",
    "polished",
];

pub const NEGATIVE_WORDS: [&str; 32] = [
    "bad",
    "poor",
    "terrible",
    "awful",
    "horrible",
    "dreadful",
    "cheap",
    "flimsy",
    "disappointing",
    "broken",
    "ugly",
    "noisy",
    "faulty",
    "lousy",
    "mediocre",
    "defective",
    "shoddy",
    "pathetic",
    "miserable",
    "annoying",
    "useless",
    "clumsy",
    "crooked",
    "feeble",
    "warped",
    "scratched",
    "rusty",
    "leaky",
    "stained",
    "brittle",
    "bulky",
    "misaligned",
];

const POSITIVE_TAILS: [&str; 4] = [
    "totally recommended",
    "very happy with it",
    "would buy again",
    "love it",
];

const NEGATIVE_TAILS: [&str; 4] = [
    "want a refund",
    "really regret it",
    "would not buy again",
    "avoid it",
];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n_unlabeled: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// positive:negative ratio (10.0 means 10:1).
    pub imbalance: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_unlabeled: 4000,
            n_train: 2000,
            n_valid: 250,
            n_test: 500,
            imbalance: 10.0,
            seed: 7,
        }
    }
}

fn sentiment_word(positive: bool, rng: &mut Rng) -> &'static str {
    if positive {
        POSITIVE_WORDS[rng.below(POSITIVE_WORDS.len())]
    } else {
        NEGATIVE_WORDS[rng.below(NEGATIVE_WORDS.len())]
    }
}

fn clause(positive: bool, rng: &mut Rng) -> String {
    let aspect = ASPECTS[rng.below(ASPECTS.len())];
    let word = sentiment_word(positive, rng);
    match rng.below(4) {
        0 => format!("the {} is {}", aspect, word),
        1 => format!("{} {}", word, aspect),
        2 => format!("really {} {}", word, aspect),
        _ => format!("the {} looks {}", aspect, word),
    }
}

/// One unlabeled review: one to three same-polarity clauses, often
/// closed by a polarity tail phrase. Reviews are polarity-coherent so
/// same-polarity sentiment words share distributional contexts.
pub fn unlabeled_review(rng: &mut Rng) -> String {
    let positive = rng.chance(0.5);
    let n_clauses = 1 + rng.below(3);
    let mut parts: Vec<String> = (0..n_clauses).map(|_| clause(positive, rng)).collect();
    if rng.chance(0.6) {
        let tails = if positive {
            &POSITIVE_TAILS
        } else {
            &NEGATIVE_TAILS
        };
        parts.push(tails[rng.below(tails.len())].to_string());
    }
    format!("{} .", parts.join(" and "))
}

/// The unlabeled pretraining corpus.
pub fn generate_corpus(cfg: &SyntheticConfig) -> Vec<String> {
    let mut rng = Rng::for_stream(cfg.seed, 0xc0);
    (0..cfg.n_unlabeled)
        .map(|_| unlabeled_review(&mut rng))
        .collect()
}

fn labeled_sentence(positive: bool, rng: &mut Rng) -> String {
    // Task sentences carry no tail phrases: the sentiment word itself is
    // the signal a classifier has to pick up.
    format!("{} .", clause(positive, rng))
}

/// Sentence-level classification data at the configured imbalance
/// (label 1 = positive).
pub fn generate_sentence_cls(cfg: &SyntheticConfig, n: usize, stream: u64) -> TaskData {
    let mut rng = Rng::for_stream(cfg.seed, 0xc1 ^ stream);
    let p_pos = cfg.imbalance / (cfg.imbalance + 1.0);
    let rows = (0..n)
        .map(|_| {
            let positive = rng.chance(p_pos);
            ClsExample {
                text: labeled_sentence(positive, &mut rng),
                label: positive as usize,
            }
        })
        .collect();
    TaskData::Sentence(rows)
}

/// Aspect-level data: two clauses about different aspects with opposite
/// polarities half the time; the label follows the queried aspect.
pub fn generate_aspect_cls(cfg: &SyntheticConfig, n: usize, stream: u64) -> TaskData {
    let mut rng = Rng::for_stream(cfg.seed, 0xc2 ^ stream);
    let p_pos = cfg.imbalance / (cfg.imbalance + 1.0);
    let rows = (0..n)
        .map(|_| {
            let first_aspect = ASPECTS[rng.below(ASPECTS.len())];
            let mut second_aspect = ASPECTS[rng.below(ASPECTS.len())];
            while second_aspect == first_aspect {
                second_aspect = ASPECTS[rng.below(ASPECTS.len())];
            }
            let first_pos = rng.chance(p_pos);
            let second_pos = rng.chance(p_pos);
            let text = format!(
                "the {} is {} but the {} is {} .",
                first_aspect,
                sentiment_word(first_pos, &mut rng),
                second_aspect,
                sentiment_word(second_pos, &mut rng),
            );
            let query_first = rng.chance(0.5);
            AspectExample {
                text,
                aspect: if query_first {
                    first_aspect
                } else {
                    second_aspect
                }
                .to_string(),
                label: if query_first { first_pos } else { second_pos } as usize,
            }
        })
        .collect();
    TaskData::Aspect(rows)
}

/// Extraction data with gold BIO tags from the construction.
pub fn generate_extraction(cfg: &SyntheticConfig, n: usize, stream: u64) -> TaskData {
    let mut rng = Rng::for_stream(cfg.seed, 0xc3 ^ stream);
    let rows = (0..n)
        .map(|_| {
            let aspect = ASPECTS[rng.below(ASPECTS.len())];
            let word = sentiment_word(rng.chance(0.5), &mut rng);
            let (tokens, tags): (Vec<&str>, Vec<&str>) = match rng.below(3) {
                0 => (
                    vec!["the", aspect, "is", word],
                    vec!["O", "B-aspect", "O", "B-sentiment"],
                ),
                1 => (vec![word, aspect], vec!["B-sentiment", "B-aspect"]),
                _ => (
                    vec!["quite", word, aspect, "overall"],
                    vec!["O", "B-sentiment", "B-aspect", "O"],
                ),
            };
            TaggedExample {
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                tags: tags.iter().map(|s| s.to_string()).collect(),
            }
        })
        .collect();
    TaskData::Extraction(rows)
}

/// The benchmark lexicon: all template aspects and sentiment words.
pub fn benchmark_lexicon() -> Lexicon {
    let mut lex = Lexicon::new();
    for a in ASPECTS {
        lex.insert(a, TermKind::Aspect).unwrap();
    }
    for s in POSITIVE_WORDS.iter().chain(NEGATIVE_WORDS.iter()) {
        lex.insert(s, TermKind::Sentiment).unwrap();
    }
    lex
}

pub fn lexicon_tsv() -> String {
    let mut out = String::new();
    for a in ASPECTS {
        out.push_str(&format!("{}\taspect\n", a));
    }
    for s in POSITIVE_WORDS.iter().chain(NEGATIVE_WORDS.iter()) {
        out.push_str(&format!("{}\tsentiment\n", s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_deterministic() {
        let cfg = SyntheticConfig::default();
        assert_eq!(generate_corpus(&cfg), generate_corpus(&cfg));
    }

    #[test]
    fn imbalance_close_to_configured() {
        let cfg = SyntheticConfig {
            n_train: 3000,
            ..Default::default()
        };
        let TaskData::Sentence(rows) = generate_sentence_cls(&cfg, 3000, 0) else {
            unreachable!()
        };
        let pos = rows.iter().filter(|r| r.label == 1).count() as f64;
        let ratio = pos / (rows.len() as f64 - pos);
        assert!(ratio > 6.0 && ratio < 16.0, "ratio {}", ratio);
    }

    #[test]
    fn sentences_contain_their_signal_word() {
        let cfg = SyntheticConfig::default();
        let TaskData::Sentence(rows) = generate_sentence_cls(&cfg, 200, 1) else {
            unreachable!()
        };
        for r in rows {
            let pool: &[&str] = if r.label == 1 {
                &POSITIVE_WORDS
            } else {
                &NEGATIVE_WORDS
            };
            assert!(
                pool.iter().any(|w| r.text.contains(w)),
                "no signal word in {:?}",
                r.text
            );
        }
    }

    #[test]
    fn extraction_tags_align() {
        let cfg = SyntheticConfig::default();
        let TaskData::Extraction(rows) = generate_extraction(&cfg, 50, 2) else {
            unreachable!()
        };
        for r in rows {
            assert_eq!(r.tokens.len(), r.tags.len());
        }
    }

    #[test]
    fn lexicon_covers_pools() {
        let lex = benchmark_lexicon();
        assert_eq!(lex.kind_of("color"), Some(TermKind::Aspect));
        assert_eq!(lex.kind_of("dreadful"), Some(TermKind::Sentiment));
    }
}
