//! The standard desk-scale benchmark: synthetic corpus plus mined graph
//! plus pinned model/training configurations, shared by the acceptance
//! suite and the sweep examples.

use super::synthetic::{
    benchmark_lexicon, generate_corpus, generate_sentence_cls, SyntheticConfig,
};
use super::ExperimentContext;
use crate::corpus::{corpus_from_lines, Corpus};
use crate::downstream::{FinetuneConfig, Splits};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::pipeline::{mine, MinedArtifacts, MiningConfig};
use crate::pretrain::PretrainConfig;
use crate::similarity::Word2VecConfig;
use crate::terms::Lexicon;

/// Owned artifacts for the standard benchmark run.
pub struct BenchmarkSetup {
    pub synthetic: SyntheticConfig,
    pub corpus: Corpus,
    pub lexicon: Lexicon,
    pub mined: MinedArtifacts,
    pub splits: Splits,
    pub encoder_cfg: EncoderConfig,
    pub pretrain_cfg: PretrainConfig,
    pub finetune_cfg: FinetuneConfig,
    pub subset_seed: u64,
}

pub fn benchmark_mining_config() -> MiningConfig {
    MiningConfig {
        word2vec: Word2VecConfig {
            d_emb: 24,
            window: 5,
            epochs: 6,
            negatives: 5,
            lr: 0.025,
            seed: 13,
        },
        dbscan_eps: 0.35,
        dbscan_min_pts: 2,
        ..Default::default()
    }
}

impl BenchmarkSetup {
    /// Generate the corpus and task data, mine the graph, and pin the
    /// desk-scale model and training configurations.
    pub fn build(synthetic: SyntheticConfig) -> Result<BenchmarkSetup> {
        let corpus = corpus_from_lines(generate_corpus(&synthetic));
        let lexicon = benchmark_lexicon();
        let mined = mine(&corpus, &lexicon, &benchmark_mining_config())?;
        let splits = Splits {
            train: generate_sentence_cls(&synthetic, synthetic.n_train, 1),
            valid: generate_sentence_cls(&synthetic, synthetic.n_valid, 2),
            test: generate_sentence_cls(&synthetic, synthetic.n_test, 3),
        };
        let encoder_cfg = EncoderConfig {
            vocab_size: corpus.vocab.len(),
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            max_len: 40,
            seed: 17,
        };
        Ok(BenchmarkSetup {
            synthetic,
            corpus,
            lexicon,
            mined,
            splits,
            encoder_cfg,
            pretrain_cfg: PretrainConfig {
                batch_size: 16,
                lr: 2e-3,
                warmup_ratio: 0.1,
                total_steps: 600,
                seed: 19,
                ..Default::default()
            },
            finetune_cfg: FinetuneConfig {
                epochs: 8,
                batch_size: 32,
                lr: 1e-3,
                ..Default::default()
            },
            subset_seed: 23,
        })
    }

    pub fn context(&self) -> ExperimentContext<'_> {
        ExperimentContext {
            corpus: &self.corpus,
            graph: &self.mined.graph,
            freq: &self.mined.freq,
            lexicon: &self.lexicon,
            splits: &self.splits,
            encoder_cfg: self.encoder_cfg,
            pretrain_cfg: self.pretrain_cfg,
            finetune_cfg: self.finetune_cfg,
            subset_seed: self.subset_seed,
            scale_epochs: true,
        }
    }
}
