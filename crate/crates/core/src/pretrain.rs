//! The joint pretraining loop: deterministic batching over generated
//! examples, Adam with warmup, per-step loss logging, checkpoint/resume.

use crate::encoder::checkpoint::OptimizerState;
use crate::encoder::{Adam, EncoderParams};
use crate::error::Result;
use crate::objectives::{joint_loss, ObjectiveConfig, PretrainExample};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub struct PretrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
    pub seed: u64,
    /// Objective switches for the ablation variants: sentiment masking
    /// always runs; pair prediction and node similarity are optional.
    pub use_pairs: bool,
    pub use_contrastive: bool,
    pub objectives: ObjectiveConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            batch_size: 32,
            lr: 1e-5,
            warmup_ratio: 0.1,
            total_steps: 200,
            seed: 1,
            use_pairs: true,
            use_contrastive: true,
            objectives: ObjectiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub sw: f64,
    pub ap: f64,
    pub ns: f64,
    pub total: f64,
}

pub fn loss_log_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("step,L_sw,L_ap,L_ns,L\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.sw, r.ap, r.ns, r.total
        ));
    }
    out
}

/// Batch indices for a step: a per-epoch permutation of the example
/// list, derived from the seed, consumed in contiguous slices. Pure in
/// (seed, step), so a resumed run continues bit-identically.
fn batch_indices(n_examples: usize, batch_size: usize, seed: u64, step: usize) -> Vec<usize> {
    let steps_per_epoch = n_examples.div_ceil(batch_size).max(1);
    let epoch = (step - 1) / steps_per_epoch;
    let offset = ((step - 1) % steps_per_epoch) * batch_size;
    let mut perm: Vec<usize> = (0..n_examples).collect();
    Rng::for_stream(seed ^ 0x9d5c_f00d, epoch as u64).shuffle(&mut perm);
    perm[offset..(offset + batch_size).min(n_examples)].to_vec()
}

/// Run (or resume) pretraining. `on_step` fires after every optimizer
/// step with the freshly updated parameters and optimizer state, so the
/// caller can checkpoint at any cadence.
pub fn run_pretrain(
    params: &mut EncoderParams,
    examples: &[PretrainExample],
    cfg: &PretrainConfig,
    resume: Option<&OptimizerState>,
    mut on_step: impl FnMut(&EncoderParams, &Adam, &LossRow) -> Result<()>,
) -> Result<Vec<LossRow>> {
    let mut adam = Adam::new(params.n_params(), cfg.lr, cfg.warmup_ratio, cfg.total_steps);
    let start_step = match resume {
        Some(state) => {
            state.restore_into(&mut adam);
            state.step as usize + 1
        }
        None => 1,
    };
    let mut rows = Vec::new();
    for step in start_step..=cfg.total_steps {
        let idx = batch_indices(examples.len(), cfg.batch_size, cfg.seed, step);
        let mut masked = Vec::new();
        let mut pairs = Vec::new();
        let mut sets = Vec::new();
        for &i in &idx {
            let ex = &examples[i];
            masked.push(ex.masked.clone());
            if cfg.use_pairs {
                pairs.extend(ex.pairs.iter().cloned());
            }
            if cfg.use_contrastive {
                sets.extend(ex.contrastive.iter().cloned());
            }
        }
        let (joint, grads) = joint_loss(params, &masked, &pairs, &sets)?;
        adam.step(params, &grads, step);
        let row = LossRow {
            step,
            sw: joint.sw,
            ap: joint.ap,
            ns: joint.ns,
            total: joint.total(),
        };
        on_step(params, &adam, &row)?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_frequency_table, corpus_from_lines};
    use crate::encoder::EncoderConfig;
    use crate::graph::build_graph;
    use crate::objectives::ExampleBuilder;
    use crate::similarity::SynonymCluster;
    use crate::terms::{Lexicon, TermKind};
    use std::collections::BTreeMap;

    fn fixture() -> (EncoderParams, Vec<PretrainExample>) {
        let lines: Vec<String> = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    "the color is great . good material .".to_string()
                } else {
                    "bad color . poor material .".to_string()
                }
            })
            .collect();
        let corpus = corpus_from_lines(lines);
        let freq = build_frequency_table(&corpus);
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
        for (a, s) in [("color", "great"), ("material", "good"), ("color", "bad")] {
            pair_counts.insert((a.to_string(), s.to_string()), 5);
        }
        let graph = build_graph(&clusters, &pair_counts, 1);
        let builder = ExampleBuilder {
            corpus: &corpus,
            graph: &graph,
            freq: &freq,
            lexicon: &lexicon,
            config: ObjectiveConfig::default(),
            max_len: 20,
        };
        let examples = builder.build(3);
        let params = EncoderParams::init(EncoderConfig {
            vocab_size: corpus.vocab.len(),
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            max_len: 20,
            seed: 5,
        })
        .unwrap();
        (params, examples)
    }

    #[test]
    fn rows_satisfy_joint_sum() {
        let (mut params, examples) = fixture();
        let cfg = PretrainConfig {
            batch_size: 4,
            lr: 1e-3,
            total_steps: 5,
            ..Default::default()
        };
        let rows = run_pretrain(&mut params, &examples, &cfg, None, |_, _, _| Ok(())).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert!((r.total - (r.sw + r.ap + r.ns)).abs() < 1e-9);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (params0, examples) = fixture();
        let cfg = PretrainConfig {
            batch_size: 4,
            lr: 1e-3,
            total_steps: 8,
            ..Default::default()
        };

        let mut full = params0.clone();
        let full_rows = run_pretrain(&mut full, &examples, &cfg, None, |_, _, _| Ok(())).unwrap();

        // Interrupt after step 4, capture optimizer state, then resume.
        let mut first = params0.clone();
        let mut snapshot: Option<OptimizerState> = None;
        let cfg_half = PretrainConfig {
            total_steps: 4,
            ..cfg
        };
        run_pretrain(&mut first, &examples, &cfg_half, None, |_, adam, row| {
            if row.step == 4 {
                snapshot = Some(OptimizerState::capture(adam, 4));
            }
            Ok(())
        })
        .unwrap();
        let resumed_rows =
            run_pretrain(&mut first, &examples, &cfg, snapshot.as_ref(), |_, _, _| {
                Ok(())
            })
            .unwrap();

        assert_eq!(first.to_flat(), full.to_flat());
        assert_eq!(&full_rows[4..], &resumed_rows[..]);
    }

    #[test]
    fn loss_csv_format() {
        let rows = vec![LossRow {
            step: 1,
            sw: 1.5,
            ap: 0.5,
            ns: 0.25,
            total: 2.25,
        }];
        let csv = loss_log_csv(&rows);
        assert!(csv.starts_with("step,L_sw,L_ap,L_ns,L\n"));
        assert!(csv.contains("1,1.5,0.5,0.25,2.25"));
    }

    #[test]
    fn joint_loss_halves_in_200_steps_on_fixed_batch() {
        let (mut params, examples) = fixture();
        let small: Vec<PretrainExample> = examples.into_iter().take(4).collect();
        let cfg = PretrainConfig {
            batch_size: 4,
            lr: 1e-2,
            warmup_ratio: 0.0,
            total_steps: 200,
            ..Default::default()
        };
        let rows = run_pretrain(&mut params, &small, &cfg, None, |_, _, _| Ok(())).unwrap();
        let first = rows.first().unwrap().total;
        let last = rows.last().unwrap().total;
        assert!(
            last <= 0.5 * first,
            "joint loss did not halve: {} -> {}",
            first,
            last
        );
        assert!(params.all_finite());
    }
}
