//! Skip-gram word embeddings with negative sampling.

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// Row-major `vocab_size x dim`, indexed by vocab id.
    pub vectors: Vec<f64>,
    /// Average loss per epoch, recorded during training.
    pub epoch_losses: Vec<f64>,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        cosine(self.vector(a), self.vector(b))
    }

    /// Epoch losses averaged over a trailing window of 5.
    pub fn smoothed_losses(&self) -> Vec<f64> {
        smooth(&self.epoch_losses, 5)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    xs.iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &xs[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy)]
pub struct Word2VecConfig {
    pub d_emb: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            d_emb: 32,
            window: 5,
            epochs: 10,
            negatives: 5,
            lr: 0.025,
            seed: 1,
        }
    }
}

/// Train skip-gram embeddings over the corpus token stream. One vector
/// per vocab id; ids that never occur keep their initialization.
pub fn train_embeddings(corpus: &Corpus, cfg: &Word2VecConfig) -> Result<EmbeddingTable> {
    if cfg.d_emb < 2 {
        return Err(Error::Invalid(format!(
            "d_emb must be >= 2, got {}",
            cfg.d_emb
        )));
    }
    let sentences: Vec<Vec<usize>> = corpus.sentences().map(|s| s.token_ids()).collect();
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::Invalid(
            "cannot train embeddings on an empty corpus".into(),
        ));
    }
    let vocab_size = corpus.vocab.len();
    let dim = cfg.d_emb;
    let mut rng = Rng::seed_from(cfg.seed);

    let mut input = vec![0.0; vocab_size * dim];
    for x in input.iter_mut() {
        *x = rng.range_f64(-0.5 / dim as f64, 0.5 / dim as f64);
    }
    let mut output = vec![0.0; vocab_size * dim];

    // Unigram^0.75 negative-sampling table.
    let mut counts = vec![0u64; vocab_size];
    for s in &sentences {
        for &id in s {
            counts[id] += 1;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total_weight: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(vocab_size);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let sample_negative = |rng: &mut Rng| -> usize {
        let x = rng.next_f64() * total_weight;
        match cumulative.binary_search_by(|c| c.partial_cmp(&x).unwrap()) {
            Ok(i) | Err(i) => i.min(vocab_size - 1),
        }
    };

    let total_positions: usize = sentences.iter().map(|s| s.len()).sum();
    let total_updates = (total_positions * cfg.epochs).max(1);
    let mut update = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0u64;
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = cfg.lr * (1.0 - update as f64 / total_updates as f64).max(1e-4);
                update += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window).min(sent.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sent[ctx_pos];
                    let mut grad_in = vec![0.0; dim];
                    // Positive update.
                    {
                        let vi = &input[center * dim..(center + 1) * dim];
                        let uo = &output[context * dim..(context + 1) * dim];
                        let score: f64 = vi.iter().zip(uo).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        loss_sum -= p.max(1e-12).ln();
                        let g = p - 1.0;
                        for d in 0..dim {
                            grad_in[d] += g * uo[d];
                        }
                        let vi_copy: Vec<f64> = vi.to_vec();
                        let uo = &mut output[context * dim..(context + 1) * dim];
                        for d in 0..dim {
                            uo[d] -= lr * g * vi_copy[d];
                        }
                    }
                    // Negative updates.
                    for _ in 0..cfg.negatives {
                        let neg = sample_negative(&mut rng);
                        if neg == context {
                            continue;
                        }
                        let vi = &input[center * dim..(center + 1) * dim];
                        let uo = &output[neg * dim..(neg + 1) * dim];
                        let score: f64 = vi.iter().zip(uo).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        loss_sum -= (1.0 - p).max(1e-12).ln();
                        let g = p;
                        for d in 0..dim {
                            grad_in[d] += g * uo[d];
                        }
                        let vi_copy: Vec<f64> = vi.to_vec();
                        let uo = &mut output[neg * dim..(neg + 1) * dim];
                        for d in 0..dim {
                            uo[d] -= lr * g * vi_copy[d];
                        }
                    }
                    let vi = &mut input[center * dim..(center + 1) * dim];
                    for d in 0..dim {
                        vi[d] -= lr * grad_in[d];
                    }
                    loss_count += 1;
                }
            }
        }
        epoch_losses.push(if loss_count == 0 {
            0.0
        } else {
            loss_sum / loss_count as f64
        });
    }

    Ok(EmbeddingTable {
        dim,
        vectors: input,
        epoch_losses,
    })
}
