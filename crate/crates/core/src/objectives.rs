//! Pretraining examples and the three objectives: sentiment-word
//! masking, aspect-sentiment pair prediction, and contrastive node
//! similarity. The joint loss is their unweighted sum.

use crate::corpus::FrequencyTable;
use crate::corpus::{Corpus, Vocab, CLS, MASK, SEP};
use crate::encoder::{softmax_in_place, EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, SamplingMode, SemanticGraph};
use crate::rng::Rng;
use crate::terms::{match_pairs, tag_terms, Lexicon, SentenceId, TermKind};

/// A packed input with sentiment-word masks. `originals` lists the
/// replaced token at each masked position; positions with `mask = false`
/// never contribute to the loss.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct MaskedSequence {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub originals: Vec<(usize, usize)>,
}

/// `[CLS] SA [SEP] SS [SEP]` with a pair/non-pair label.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct PairSequence {
    pub ids: Vec<usize>,
    pub label: bool,
}

/// Anchor word with synonym positives and same-kind non-neighbor
/// negatives, each as a token id sequence.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ContrastiveSet {
    pub anchor: Vec<usize>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

/// Everything generated from one packed sequence of sentences.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PretrainExample {
    pub masked: MaskedSequence,
    pub pairs: Vec<PairSequence>,
    pub contrastive: Vec<ContrastiveSet>,
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveConfig {
    /// Fraction of positions that may be masked (budget `floor(rate*len)`).
    pub masking_rate: f64,
    /// Pair sequences generated per packed sequence.
    pub n_pairs_max: usize,
    /// Contrastive sets generated per packed sequence.
    pub n_contrastive_max: usize,
    /// Negatives per contrastive set.
    pub n_negatives: usize,
    /// Similar-node sampling depth K and length cap L.
    pub sample_depth: usize,
    pub sample_len: usize,
    pub sampling_mode: SamplingMode,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            masking_rate: 0.2,
            n_pairs_max: 2,
            n_contrastive_max: 2,
            n_negatives: 4,
            sample_depth: 2,
            sample_len: 4,
            sampling_mode: SamplingMode::Union,
        }
    }
}

/// Mask sentiment-term positions, uniformly at random, up to the budget
/// `floor(rate * len)`. Only sentiment positions are ever masked; when
/// they run out the sequence stays partially unmasked.
pub fn make_masked_sequence(
    ids: &[usize],
    sentiment_positions: &[usize],
    rate: f64,
    rng: &mut Rng,
) -> MaskedSequence {
    let budget = (rate * ids.len() as f64).floor() as usize;
    let n_mask = budget.min(sentiment_positions.len());
    let mut masked_ids = ids.to_vec();
    let mut mask = vec![false; ids.len()];
    let mut originals = Vec::with_capacity(n_mask);
    if n_mask > 0 {
        let chosen = rng.sample_indices(sentiment_positions.len(), n_mask);
        let mut positions: Vec<usize> = chosen.iter().map(|&i| sentiment_positions[i]).collect();
        positions.sort_unstable();
        for pos in positions {
            originals.push((pos, masked_ids[pos]));
            masked_ids[pos] = MASK;
            mask[pos] = true;
        }
    }
    MaskedSequence {
        ids: masked_ids,
        mask,
        originals,
    }
}

/// Sentiment-word recovery loss: summed cross-entropy at masked
/// positions only (exactly zero when nothing is masked).
pub fn loss_sw(params: &EncoderParams, batch: &[MaskedSequence]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(&params.config);
    let mut loss = 0.0;
    let d = params.config.d_model;
    let v = params.config.vocab_size;
    for seq in batch {
        if seq.originals.iter().all(|&(pos, _)| !seq.mask[pos]) && seq.originals.is_empty() {
            continue;
        }
        let pass = params.forward(&seq.ids)?;
        let mut d_hidden = vec![0.0; seq.ids.len() * d];
        let mut touched = false;
        for &(pos, target) in &seq.originals {
            if !seq.mask[pos] {
                continue; // m_i = 0 contributes nothing
            }
            touched = true;
            let hidden = pass.hidden_at(pos);
            let mut probs = vec![0.0; v];
            probs.copy_from_slice(&params.mlm_b);
            for i in 0..d {
                let hi = hidden[i];
                let row = &params.mlm_w[i * v..(i + 1) * v];
                for o in 0..v {
                    probs[o] += hi * row[o];
                }
            }
            softmax_in_place(&mut probs);
            loss -= probs[target].max(1e-300).ln();
            // d_logits = probs - onehot(target)
            probs[target] -= 1.0;
            for o in 0..v {
                grads.mlm_b[o] += probs[o];
            }
            for i in 0..d {
                let row = &params.mlm_w[i * v..(i + 1) * v];
                let grow = &mut grads.mlm_w[i * v..(i + 1) * v];
                let mut acc = 0.0;
                for o in 0..v {
                    grow[o] += hidden[i] * probs[o];
                    acc += row[o] * probs[o];
                }
                d_hidden[pos * d + i] += acc;
            }
        }
        if touched {
            params.backward(&pass, &d_hidden, &mut grads);
        }
    }
    Ok((loss, grads))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pair prediction: binary cross-entropy of `sigmoid(u_cls . w + b)`
/// against the pair label, summed over the batch.
pub fn loss_ap(params: &EncoderParams, batch: &[PairSequence]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(&params.config);
    let mut loss = 0.0;
    let d = params.config.d_model;
    for seq in batch {
        let pass = params.forward(&seq.ids)?;
        let u_cls = pass.hidden_at(0);
        let logit = u_cls
            .iter()
            .zip(&params.pair_w)
            .map(|(u, w)| u * w)
            .sum::<f64>()
            + params.pair_b[0];
        let p_hat = sigmoid(logit);
        let p = if seq.label { 1.0 } else { 0.0 };
        loss -= p * p_hat.max(1e-300).ln() + (1.0 - p) * (1.0 - p_hat).max(1e-300).ln();
        let d_logit = p_hat - p;
        grads.pair_b[0] += d_logit;
        let mut d_hidden = vec![0.0; seq.ids.len() * d];
        for i in 0..d {
            grads.pair_w[i] += d_logit * u_cls[i];
            d_hidden[i] = d_logit * params.pair_w[i];
        }
        params.backward(&pass, &d_hidden, &mut grads);
    }
    Ok((loss, grads))
}

/// The contrastive score for one positive against a set of negatives:
/// `-log( e^{s+} / (e^{s+} + sum_j e^{s-_j}) )`.
pub fn infonce_from_scores(s_pos: f64, s_negs: &[f64]) -> f64 {
    let z = s_pos.exp() + s_negs.iter().map(|s| s.exp()).sum::<f64>();
    -s_pos + z.ln()
}

struct Rep {
    pass: crate::encoder::ForwardPass,
    mean: Vec<f64>,
    norm: f64,
}

fn encode_rep(params: &EncoderParams, ids: &[usize]) -> Result<Rep> {
    let pass = params.forward(ids)?;
    let mean = pass.mean_hidden();
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(Rep { pass, mean, norm })
}

fn cos_of(a: &Rep, b: &Rep) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    a.mean.iter().zip(&b.mean).map(|(x, y)| x * y).sum::<f64>() / (a.norm * b.norm)
}

/// d cos(u,v) / du, scaled by `coeff`, accumulated into `out`.
fn cos_backward(coeff: f64, u: &Rep, v: &Rep, cos: f64, out: &mut [f64]) {
    if u.norm == 0.0 || v.norm == 0.0 {
        return;
    }
    for i in 0..u.mean.len() {
        out[i] += coeff * (v.mean[i] / (u.norm * v.norm) - cos * u.mean[i] / (u.norm * u.norm));
    }
}

/// Node-similarity contrastive loss, averaged over the batch; with a
/// multi-positive set the per-positive losses are averaged. Word
/// representations are mean-pooled encoder states; zero-norm vectors
/// score cos = 0 and propagate no gradient.
pub fn loss_ns(params: &EncoderParams, batch: &[ContrastiveSet]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(&params.config);
    let mut total = 0.0;
    let d = params.config.d_model;
    for set in batch {
        if set.positives.is_empty() || set.negatives.is_empty() {
            return Err(Error::Invalid(
                "contrastive set needs at least one positive and one negative".into(),
            ));
        }
        let anchor = encode_rep(params, &set.anchor)?;
        let positives: Vec<Rep> = set
            .positives
            .iter()
            .map(|ids| encode_rep(params, ids))
            .collect::<Result<_>>()?;
        let negatives: Vec<Rep> = set
            .negatives
            .iter()
            .map(|ids| encode_rep(params, ids))
            .collect::<Result<_>>()?;
        let neg_scores: Vec<f64> = negatives.iter().map(|n| cos_of(&anchor, n)).collect();
        let neg_exp: Vec<f64> = neg_scores.iter().map(|s| s.exp()).collect();
        let neg_exp_sum: f64 = neg_exp.iter().sum();

        let scale = 1.0 / (batch.len() as f64 * positives.len() as f64);
        let mut d_anchor_mean = vec![0.0; d];
        let mut d_neg_means = vec![vec![0.0; d]; negatives.len()];
        for pos in &positives {
            let s_pos = cos_of(&anchor, pos);
            let z = s_pos.exp() + neg_exp_sum;
            total += scale * (-s_pos + z.ln());
            // dL/ds+ = -1 + e^{s+}/Z ; dL/ds-_j = e^{s-_j}/Z
            let d_spos = scale * (s_pos.exp() / z - 1.0);
            cos_backward(d_spos, &anchor, pos, s_pos, &mut d_anchor_mean);
            let mut d_pos_mean = vec![0.0; d];
            cos_backward(d_spos, pos, &anchor, s_pos, &mut d_pos_mean);
            backprop_mean(params, &pos.pass, &d_pos_mean, &mut grads);
            for (j, neg) in negatives.iter().enumerate() {
                let d_sneg = scale * (neg_exp[j] / z);
                cos_backward(d_sneg, &anchor, neg, neg_scores[j], &mut d_anchor_mean);
                cos_backward(d_sneg, neg, &anchor, neg_scores[j], &mut d_neg_means[j]);
            }
        }
        backprop_mean(params, &anchor.pass, &d_anchor_mean, &mut grads);
        for (neg, d_mean) in negatives.iter().zip(&d_neg_means) {
            backprop_mean(params, &neg.pass, d_mean, &mut grads);
        }
    }
    Ok((total, grads))
}

/// Distribute a gradient on the mean-pooled state across positions and
/// push it through the encoder.
fn backprop_mean(
    params: &EncoderParams,
    pass: &crate::encoder::ForwardPass,
    d_mean: &[f64],
    grads: &mut Gradients,
) {
    let n = pass.len();
    let d = d_mean.len();
    let mut d_hidden = vec![0.0; n * d];
    for pos in 0..n {
        for j in 0..d {
            d_hidden[pos * d + j] = d_mean[j] / n as f64;
        }
    }
    params.backward(pass, &d_hidden, grads);
}

/// Per-term values of one joint objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JointLoss {
    pub sw: f64,
    pub ap: f64,
    pub ns: f64,
}

impl JointLoss {
    pub fn total(&self) -> f64 {
        self.sw + self.ap + self.ns
    }
}

/// Joint objective: unweighted sum of the three losses; empty batches
/// contribute zero. Gradients are the sum of the per-term gradients.
pub fn joint_loss(
    params: &EncoderParams,
    masked: &[MaskedSequence],
    pairs: &[PairSequence],
    contrastive: &[ContrastiveSet],
) -> Result<(JointLoss, Gradients)> {
    let mut grads = Gradients::zeros(&params.config);
    let mut joint = JointLoss::default();
    if !masked.is_empty() {
        let (l, g) = loss_sw(params, masked)?;
        joint.sw = l;
        grads.add(&g);
    }
    if !pairs.is_empty() {
        let (l, g) = loss_ap(params, pairs)?;
        joint.ap = l;
        grads.add(&g);
    }
    if !contrastive.is_empty() {
        let (l, g) = loss_ns(params, contrastive)?;
        joint.ns = l;
        grads.add(&g);
    }
    Ok((joint, grads))
}

/// Builds pretraining examples from the corpus and semantic graph:
/// sentences packed to `max_len` with [CLS]/[SEP] framing, sentiment
/// positions masked, pair edges expanded to pair sequences (one
/// corrupted negative each), and contrastive sets for observed words.
pub struct ExampleBuilder<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a SemanticGraph,
    pub freq: &'a FrequencyTable,
    pub lexicon: &'a Lexicon,
    pub config: ObjectiveConfig,
    pub max_len: usize,
}

impl<'a> ExampleBuilder<'a> {
    pub fn build(&self, seed: u64) -> Vec<PretrainExample> {
        // Pack sentences: [CLS] s1 [SEP] s2 [SEP] ... up to max_len.
        struct Packed {
            ids: Vec<usize>,
            sentiment_positions: Vec<usize>,
            pair_words: Vec<(String, String)>, // (aspect word, sentiment word)
            words: Vec<(TermKind, String)>,
        }
        let mut packs: Vec<Packed> = Vec::new();
        let mut current = Packed {
            ids: vec![CLS],
            sentiment_positions: Vec::new(),
            pair_words: Vec::new(),
            words: Vec::new(),
        };
        for (doc_idx, doc) in self.corpus.documents.iter().enumerate() {
            for (sent_idx, sentence) in doc.sentences.iter().enumerate() {
                if sentence.tokens.is_empty() {
                    continue;
                }
                let sid = SentenceId {
                    doc: doc_idx,
                    sent: sent_idx,
                };
                let spans = tag_terms(sentence, sid, self.lexicon);
                let n = sentence.tokens.len().min(self.max_len.saturating_sub(2));
                if current.ids.len() + n + 1 > self.max_len && current.ids.len() > 1 {
                    packs.push(current);
                    current = Packed {
                        ids: vec![CLS],
                        sentiment_positions: Vec::new(),
                        pair_words: Vec::new(),
                        words: Vec::new(),
                    };
                }
                let offset = current.ids.len();
                for tok in sentence.tokens.iter().take(n) {
                    current.ids.push(tok.id);
                }
                current.ids.push(SEP);
                for span in &spans {
                    if span.last >= n {
                        continue;
                    }
                    if span.kind == TermKind::Sentiment {
                        for pos in span.first..=span.last {
                            current.sentiment_positions.push(offset + pos);
                        }
                    }
                    current.words.push((span.kind, span.surface(sentence)));
                }
                for pair in match_pairs(&spans) {
                    if pair.aspect.last >= n || pair.sentiment.last >= n {
                        continue;
                    }
                    current.pair_words.push((
                        pair.aspect.surface(sentence),
                        pair.sentiment.surface(sentence),
                    ));
                }
            }
        }
        if current.ids.len() > 1 {
            packs.push(current);
        }

        packs
            .iter()
            .enumerate()
            .map(|(idx, pack)| {
                let mut rng = Rng::for_stream(seed, idx as u64);
                let masked = make_masked_sequence(
                    &pack.ids,
                    &pack.sentiment_positions,
                    self.config.masking_rate,
                    &mut rng,
                );
                let pairs = self.make_pair_sequences(pack.pair_words.as_slice(), &mut rng);
                let contrastive = self.make_contrastive_sets(&pack.words, &mut rng);
                PretrainExample {
                    masked,
                    pairs,
                    contrastive,
                }
            })
            .collect()
    }

    /// Positive sequence per observed pair edge plus one corrupted
    /// negative (sentiment endpoint replaced by a sentiment node with no
    /// pair edge to the aspect), keeping labels balanced 1:1.
    fn make_pair_sequences(
        &self,
        pair_words: &[(String, String)],
        rng: &mut Rng,
    ) -> Vec<PairSequence> {
        let vocab = &self.corpus.vocab;
        let sentiment_nodes: Vec<usize> = self
            .graph
            .nodes_of_kind(TermKind::Sentiment)
            .map(|n| n.id)
            .collect();
        let mut out = Vec::new();
        for (aspect_word, sentiment_word) in pair_words.iter().take(self.config.n_pairs_max) {
            let (Some(a), Some(s)) = (
                self.graph.node_id(TermKind::Aspect, aspect_word),
                self.graph.node_id(TermKind::Sentiment, sentiment_word),
            ) else {
                continue;
            };
            if !self.graph.has_edge(a.min(s), a.max(s), EdgeKind::Pair) {
                continue;
            }
            let corruptible: Vec<usize> = sentiment_nodes
                .iter()
                .copied()
                .filter(|&n| n != s && !self.graph.has_edge(a.min(n), a.max(n), EdgeKind::Pair))
                .collect();
            if corruptible.is_empty() {
                continue; // no valid negative would unbalance the labels
            }
            let sa = self.neighborhood_words(a);
            let ss = self.neighborhood_words(s);
            out.push(PairSequence {
                ids: pair_sequence_ids(vocab, &sa, &ss),
                label: true,
            });
            let corrupt = *rng.choose(&corruptible);
            let ss_neg = self.neighborhood_words(corrupt);
            out.push(PairSequence {
                ids: pair_sequence_ids(vocab, &sa, &ss_neg),
                label: false,
            });
        }
        out
    }

    /// Algorithm-1 neighborhood of a node as words, singleton fallback.
    fn neighborhood_words(&self, node: usize) -> Vec<String> {
        let members = crate::graph::sample_similar_nodes(
            self.graph,
            node,
            self.config.sample_depth,
            self.config.sample_len,
            self.freq,
            self.config.sampling_mode,
        )
        .map(|nb| nb.members)
        .unwrap_or_default();
        if members.is_empty() {
            vec![self.graph.node(node).word.clone()]
        } else {
            members
                .iter()
                .map(|&id| self.graph.node(id).word.clone())
                .collect()
        }
    }

    fn make_contrastive_sets(
        &self,
        words: &[(TermKind, String)],
        rng: &mut Rng,
    ) -> Vec<ContrastiveSet> {
        let vocab = &self.corpus.vocab;
        let mut seen = std::collections::BTreeSet::new();
        let mut candidates: Vec<usize> = Vec::new();
        for (kind, word) in words {
            if let Some(id) = self.graph.node_id(*kind, word) {
                if seen.insert(id) {
                    candidates.push(id);
                }
            }
        }
        rng.shuffle(&mut candidates);
        let mut out = Vec::new();
        for anchor in candidates {
            if out.len() >= self.config.n_contrastive_max {
                break;
            }
            let kind = self.graph.node(anchor).kind;
            let positives: Vec<usize> = self
                .neighborhood_ids(anchor)
                .into_iter()
                .filter(|&id| id != anchor)
                .collect();
            if positives.is_empty() {
                continue;
            }
            let same_kind_non_neighbors: Vec<usize> = self
                .graph
                .nodes_of_kind(kind)
                .map(|n| n.id)
                .filter(|&id| {
                    id != anchor
                        && !self.graph.has_edge(
                            id.min(anchor),
                            id.max(anchor),
                            EdgeKind::Similarity,
                        )
                })
                .collect();
            if same_kind_non_neighbors.is_empty() {
                continue;
            }
            let positive = *rng.choose(&positives);
            let k = self.config.n_negatives.min(same_kind_non_neighbors.len());
            let negatives: Vec<Vec<usize>> = rng
                .sample_indices(same_kind_non_neighbors.len(), k)
                .into_iter()
                .map(|i| vocab.phrase_ids(&self.graph.node(same_kind_non_neighbors[i]).word))
                .collect();
            out.push(ContrastiveSet {
                anchor: vocab.phrase_ids(&self.graph.node(anchor).word),
                positives: vec![vocab.phrase_ids(&self.graph.node(positive).word)],
                negatives,
            });
        }
        out
    }

    fn neighborhood_ids(&self, node: usize) -> Vec<usize> {
        crate::graph::sample_similar_nodes(
            self.graph,
            node,
            self.config.sample_depth,
            self.config.sample_len + 1, // room for the anchor itself
            self.freq,
            self.config.sampling_mode,
        )
        .map(|nb| nb.members)
        .unwrap_or_default()
    }
}

fn pair_sequence_ids(vocab: &Vocab, sa: &[String], ss: &[String]) -> Vec<usize> {
    let mut ids = vec![CLS];
    for w in sa {
        ids.extend(vocab.phrase_ids(w));
    }
    ids.push(SEP);
    for w in ss {
        ids.extend(vocab.phrase_ids(w));
    }
    ids.push(SEP);
    ids
}

/// Render generated examples as JSON lines with words resolved, for
/// inspection.
pub fn examples_to_jsonl(examples: &[PretrainExample], vocab: &Vocab) -> String {
    let mut out = String::new();
    for ex in examples {
        let resolve = |ids: &[usize]| -> Vec<&str> { ids.iter().map(|&i| vocab.word(i)).collect() };
        let row = serde_json::json!({
            "masked_tokens": resolve(&ex.masked.ids),
            "masked_positions": ex.masked.originals.iter().map(|&(p, id)| {
                serde_json::json!({"position": p, "original": vocab.word(id)})
            }).collect::<Vec<_>>(),
            "pairs": ex.pairs.iter().map(|p| serde_json::json!({
                "tokens": resolve(&p.ids),
                "label": p.label as u8,
            })).collect::<Vec<_>>(),
            "contrastive": ex.contrastive.iter().map(|c| serde_json::json!({
                "anchor": resolve(&c.anchor),
                "positives": c.positives.iter().map(|p| resolve(p)).collect::<Vec<_>>(),
                "negatives": c.negatives.iter().map(|n| resolve(n)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_from_lines;
    use crate::encoder::EncoderConfig;
    use crate::graph::build_graph;
    use crate::similarity::SynonymCluster;
    use std::collections::BTreeMap;

    fn tiny_params(vocab_size: usize) -> EncoderParams {
        EncoderParams::init(EncoderConfig {
            vocab_size,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            max_len: 24,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn budget_forces_single_sentiment_word() {
        let ids: Vec<usize> = (5..15).collect(); // 10 tokens
        let mut rng = Rng::seed_from(1);
        let m = make_masked_sequence(&ids, &[4], 0.2, &mut rng);
        assert_eq!(m.originals, vec![(4, 9)]);
        assert_eq!(m.ids[4], MASK);
        assert_eq!(m.mask.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn no_sentiment_terms_identity() {
        let ids: Vec<usize> = (5..15).collect();
        let mut rng = Rng::seed_from(1);
        let m = make_masked_sequence(&ids, &[], 0.2, &mut rng);
        assert_eq!(m.ids, ids);
        assert!(m.mask.iter().all(|&b| !b));
    }

    #[test]
    fn masking_frequency_monte_carlo() {
        // 10 sentiment positions, rate 0.2: exactly 2 masked each draw,
        // each position at frequency 0.2 +- 0.03 over 1000 seeds.
        let ids: Vec<usize> = (5..15).collect();
        let positions: Vec<usize> = (0..10).collect();
        let mut hits = vec![0usize; 10];
        for seed in 0..1000 {
            let mut rng = Rng::seed_from(seed);
            let m = make_masked_sequence(&ids, &positions, 0.2, &mut rng);
            assert_eq!(m.originals.len(), 2);
            for &(pos, _) in &m.originals {
                hits[pos] += 1;
            }
        }
        for &h in &hits {
            let freq = h as f64 / 1000.0;
            assert!((freq - 0.2).abs() <= 0.03, "position frequency {}", freq);
        }
    }

    #[test]
    fn loss_sw_zero_when_unmasked() {
        let params = tiny_params(20);
        let seq = MaskedSequence {
            ids: vec![2, 5, 6, 3],
            mask: vec![false; 4],
            originals: vec![],
        };
        let (loss, grads) = loss_sw(&params, &[seq]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn all_pad_input_contributes_exactly_zero() {
        // Padding never holds sentiment terms, so nothing gets masked
        // and the loss is exactly zero.
        let params = tiny_params(20);
        let ids = vec![crate::corpus::PAD; 6];
        let mut rng = Rng::seed_from(1);
        let masked = make_masked_sequence(&ids, &[], 0.2, &mut rng);
        let (loss, grads) = loss_sw(&params, &[masked]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn loss_sw_uniform_is_ln_v() {
        let mut params = tiny_params(20);
        params.mlm_w.iter_mut().for_each(|x| *x = 0.0);
        params.mlm_b.iter_mut().for_each(|x| *x = 0.0);
        let seq = MaskedSequence {
            ids: vec![2, MASK, 6, 3],
            mask: vec![false, true, false, false],
            originals: vec![(1, 5)],
        };
        let (loss, _) = loss_sw(&params, &[seq]).unwrap();
        assert!((loss - (20.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_sw_ignores_unmasked_targets() {
        // Eq-3 locality: a target at an m_i = 0 position contributes nothing.
        let params = tiny_params(20);
        let base = MaskedSequence {
            ids: vec![2, MASK, 6, 3],
            mask: vec![false, true, false, false],
            originals: vec![(1, 5)],
        };
        let mut with_extra = base.clone();
        with_extra.originals.push((2, 9)); // unmasked position
        let (a, _) = loss_sw(&params, &[base]).unwrap();
        let (b, _) = loss_sw(&params, &[with_extra]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_ap_zero_logits_is_ln2() {
        let mut params = tiny_params(20);
        params.pair_w.iter_mut().for_each(|x| *x = 0.0);
        params.pair_b[0] = 0.0;
        let seq = PairSequence {
            ids: vec![2, 7, 3, 8, 3],
            label: true,
        };
        let (loss, _) = loss_ap(&params, &[seq]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_closed_forms() {
        // Equal scores, one negative: ln 2.
        assert!((infonce_from_scores(0.3, &[0.3]) - 2.0f64.ln()).abs() < 1e-12);
        // (cos+, cos-) = (1, -1): ln(1 + e^-2).
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((infonce_from_scores(1.0, &[-1.0]) - expected).abs() < 1e-12);
        // n equal scores: ln(n+1).
        assert!((infonce_from_scores(0.0, &[0.0; 4]) - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_monotone_in_positive_score() {
        let negs = [0.1, -0.4];
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let s = -1.0 + i as f64 * 0.04;
            let l = infonce_from_scores(s, &negs);
            assert!(l < prev);
            assert!(l > 0.0);
            prev = l;
        }
    }

    #[test]
    fn loss_ns_zero_norm_guard() {
        // Zeroed final norm gain+bias makes every representation the
        // zero vector; the guard scores cos = 0 everywhere, so the loss
        // is ln 2 with one negative and the gradients stay zero/finite.
        let mut params = tiny_params(20);
        params.final_gain.iter_mut().for_each(|x| *x = 0.0);
        params.final_bias.iter_mut().for_each(|x| *x = 0.0);
        let set = ContrastiveSet {
            anchor: vec![7],
            positives: vec![vec![8]],
            negatives: vec![vec![9]],
        };
        let (loss, grads) = loss_ns(&params, &[set]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
        assert!(grads.to_flat().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn loss_ns_identical_words_is_ln2() {
        // Anchor, positive, and negative all the same word: every cosine
        // is exactly 1, so the loss is exactly ln 2.
        let params = tiny_params(20);
        let set = ContrastiveSet {
            anchor: vec![7],
            positives: vec![vec![7]],
            negatives: vec![vec![7]],
        };
        let (loss, _) = loss_ns(&params, &[set]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn joint_additivity() {
        let params = tiny_params(24);
        let masked = vec![MaskedSequence {
            ids: vec![2, MASK, 6, 3],
            mask: vec![false, true, false, false],
            originals: vec![(1, 5)],
        }];
        let pairs = vec![PairSequence {
            ids: vec![2, 7, 3, 8, 3],
            label: false,
        }];
        let sets = vec![ContrastiveSet {
            anchor: vec![9],
            positives: vec![vec![10]],
            negatives: vec![vec![11], vec![12]],
        }];
        let (joint, joint_grads) = joint_loss(&params, &masked, &pairs, &sets).unwrap();
        let (sw, g1) = loss_sw(&params, &masked).unwrap();
        let (ap, g2) = loss_ap(&params, &pairs).unwrap();
        let (ns, g3) = loss_ns(&params, &sets).unwrap();
        assert!((joint.total() - (sw + ap + ns)).abs() < 1e-10);
        let mut sum = g1;
        sum.add(&g2);
        sum.add(&g3);
        let a = joint_grads.to_flat();
        let b = sum.to_flat();
        let max_diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "joint grads differ by {}", max_diff);
    }

    #[test]
    fn joint_empty_batches_zero() {
        let params = tiny_params(20);
        let (joint, grads) = joint_loss(&params, &[], &[], &[]).unwrap();
        assert_eq!(joint.total(), 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    fn builder_fixture() -> (Corpus, SemanticGraph, FrequencyTable, Lexicon) {
        let lines: Vec<String> = (0..30)
            .map(|i| {
                if i % 2 == 0 {
                    "the color is great . good material overall .".to_string()
                } else {
                    "bad color today . the material is poor .".to_string()
                }
            })
            .collect();
        let corpus = corpus_from_lines(lines);
        let freq = crate::corpus::build_frequency_table(&corpus);
        let mut lexicon = Lexicon::new();
        for a in ["color", "material"] {
            lexicon.insert(a, TermKind::Aspect).unwrap();
        }
        for s in ["great", "good", "bad", "poor"] {
            lexicon.insert(s, TermKind::Sentiment).unwrap();
        }
        let clusters = vec![
            SynonymCluster::new(TermKind::Sentiment, vec!["great".into(), "good".into()]),
            SynonymCluster::new(TermKind::Sentiment, vec!["bad".into(), "poor".into()]),
        ];
        let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (a, s) in [
            ("color", "great"),
            ("material", "good"),
            ("color", "bad"),
            ("material", "poor"),
        ] {
            pair_counts.insert((a.to_string(), s.to_string()), 15);
        }
        let graph = build_graph(&clusters, &pair_counts, 1);
        (corpus, graph, freq, lexicon)
    }

    #[test]
    fn builder_respects_budgets_and_framing() {
        let (corpus, graph, freq, lexicon) = builder_fixture();
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 24,
        };
        let examples = builder.build(7);
        assert!(!examples.is_empty());
        for ex in &examples {
            assert!(ex.masked.ids.len() <= 24);
            assert_eq!(ex.masked.ids[0], CLS);
            let budget = (0.2 * ex.masked.ids.len() as f64).floor() as usize;
            assert!(ex.masked.originals.len() <= budget);
            assert!(ex.pairs.len() <= 2 * ObjectiveConfig::default().n_pairs_max);
            for p in &ex.pairs {
                assert_eq!(p.ids.iter().filter(|&&id| id == SEP).count(), 2);
                assert_eq!(p.ids[0], CLS);
            }
            for c in &ex.contrastive {
                assert!(!c.positives.is_empty());
                assert!(!c.negatives.is_empty());
                assert!(c.positives.iter().all(|p| *p != c.anchor));
            }
        }
    }

    #[test]
    fn pair_sequence_follows_template_with_sampled_sets() {
        // For a (color, great) pair edge with the sentiment cluster
        // {great, good}: SA is the aspect-side neighborhood [color], SS
        // the sentiment-side [good, great] (equal frequency, id order).
        let (corpus, graph, freq, lexicon) = builder_fixture();
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 24,
        };
        let examples = builder.build(7);
        let vocab = &corpus.vocab;
        let expected = vec![
            CLS,
            vocab.id("color"),
            SEP,
            vocab.id("good"),
            vocab.id("great"),
            SEP,
        ];
        let found = examples
            .iter()
            .flat_map(|ex| ex.pairs.iter())
            .any(|p| p.label && p.ids == expected);
        assert!(
            found,
            "no positive pair sequence matched [CLS] SA [SEP] SS [SEP]"
        );
    }

    #[test]
    fn builder_labels_balanced() {
        let (corpus, graph, freq, lexicon) = builder_fixture();
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 24,
        };
        let examples = builder.build(7);
        let (mut pos, mut neg) = (0usize, 0usize);
        for ex in &examples {
            for p in &ex.pairs {
                if p.label {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        }
        assert!(pos > 0);
        let frac = pos as f64 / (pos + neg) as f64;
        assert!((frac - 0.5).abs() <= 0.02, "positive fraction {}", frac);
    }

    #[test]
    fn builder_deterministic() {
        let (corpus, graph, freq, lexicon) = builder_fixture();
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 24,
        };
        let a = builder.build(7);
        let b = builder.build(7);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.masked, y.masked);
            assert_eq!(x.pairs, y.pairs);
            assert_eq!(x.contrastive, y.contrastive);
        }
    }

    #[test]
    fn example_jsonl_resolves_words() {
        let (corpus, graph, freq, lexicon) = builder_fixture();
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 24,
        };
        let examples = builder.build(7);
        let jsonl = examples_to_jsonl(&examples[..1], &corpus.vocab);
        assert!(jsonl.contains("[CLS]"));
        serde_json::from_str::<serde_json::Value>(jsonl.lines().next().unwrap()).unwrap();
    }
}
