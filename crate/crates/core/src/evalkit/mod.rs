//! Experiment harness: baseline-vs-pretrained comparisons, objective
//! ablations, and the data-scale sweep, emitted as CSV rows.

pub mod benchmark;
pub mod synthetic;

use std::collections::BTreeMap;

use crate::corpus::{Corpus, FrequencyTable};
use crate::downstream::{finetune, FinetuneConfig, Report, Splits, TaskKind};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::SemanticGraph;
use crate::objectives::{ExampleBuilder, PretrainExample};
use crate::pretrain::{run_pretrain, PretrainConfig};
use crate::rng::Rng;
use crate::terms::Lexicon;

/// Pretraining variant for ablations. `NoneInit` fine-tunes from random
/// initialization; all pretrained variants include sentiment masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    NoneInit,
    SwOnly,
    SwAp,
    SwNs,
    Full,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::NoneInit => "none",
            Variant::SwOnly => "sw_only",
            Variant::SwAp => "sw+ap",
            Variant::SwNs => "sw+ns",
            Variant::Full => "full",
        }
    }

    /// (pair prediction on, node similarity on)
    fn objectives(&self) -> (bool, bool) {
        match self {
            Variant::NoneInit | Variant::SwOnly => (false, false),
            Variant::SwAp => (true, false),
            Variant::SwNs => (false, true),
            Variant::Full => (true, true),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "none" => Ok(Variant::NoneInit),
            "sw_only" => Ok(Variant::SwOnly),
            "sw+ap" => Ok(Variant::SwAp),
            "sw+ns" => Ok(Variant::SwNs),
            "full" => Ok(Variant::Full),
            other => Err(Error::Config(format!(
                "unknown variant {:?} (want none|sw_only|sw+ap|sw+ns|full)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub variants: Vec<Variant>,
    pub task: TaskKind,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("need at least one variant".into()));
        }
        for f in &self.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::Config(format!("fraction {} outside (0, 1]", f)));
            }
        }
        Ok(())
    }
}

/// One measurement: `variant,task,fraction,seed,metric,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub variant: String,
    pub task: String,
    pub fraction: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from("variant,task,fraction,seed,metric,value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant, r.task, r.fraction, r.seed, r.metric, r.value
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub variant: String,
    pub task: String,
    pub fraction: f64,
    pub metric: String,
    pub mean: f64,
    pub stdev: f64,
    pub n: usize,
}

/// Mean and (population) standard deviation over seeds.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((
                r.variant.clone(),
                r.task.clone(),
                format!("{}", r.fraction),
                r.metric.clone(),
            ))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((variant, task, fraction, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            Aggregate {
                variant,
                task,
                fraction: fraction.parse().unwrap(),
                metric,
                mean,
                stdev: var.sqrt(),
                n,
            }
        })
        .collect()
}

/// Nested fraction subset: a fixed permutation is cut at `fraction` and
/// the chosen indices are restored to corpus order, so 10% ⊂ 20% ⊂ …
/// and fraction 1.0 is exactly the original training list.
pub fn nested_subset_indices(n: usize, fraction: f64, subset_seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::for_stream(subset_seed, 0xda7a).shuffle(&mut perm);
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut chosen = perm[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Prebuilt context shared by every experiment cell.
pub struct ExperimentContext<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a SemanticGraph,
    pub freq: &'a FrequencyTable,
    pub lexicon: &'a Lexicon,
    pub splits: &'a Splits,
    pub encoder_cfg: EncoderConfig,
    pub pretrain_cfg: PretrainConfig,
    pub finetune_cfg: FinetuneConfig,
    /// Seed for the nested data-fraction subsets (shared by all cells so
    /// comparisons are paired).
    pub subset_seed: u64,
    /// Scale fine-tune epochs by 1/fraction so every cell gets a
    /// comparable optimizer-step budget. Fraction 1.0 is unaffected.
    pub scale_epochs: bool,
}

impl<'a> ExperimentContext<'a> {
    fn build_examples(&self) -> Vec<PretrainExample> {
        ExampleBuilder {
            corpus: self.corpus,
            graph: self.graph,
            freq: self.freq,
            lexicon: self.lexicon,
            config: self.pretrain_cfg.objectives,
            max_len: self.encoder_cfg.max_len,
        }
        .build(self.pretrain_cfg.seed)
    }

    /// Pretrain one variant from the shared initialization.
    pub fn pretrain_variant(
        &self,
        variant: Variant,
        examples: &[PretrainExample],
    ) -> Result<EncoderParams> {
        let mut params = EncoderParams::init(self.encoder_cfg)?;
        if variant == Variant::NoneInit {
            return Ok(params);
        }
        let (use_pairs, use_contrastive) = variant.objectives();
        let cfg = PretrainConfig {
            use_pairs,
            use_contrastive,
            ..self.pretrain_cfg
        };
        run_pretrain(&mut params, examples, &cfg, None, |_, _, _| Ok(()))?;
        Ok(params)
    }

    fn splits_for_fraction(&self, fraction: f64) -> Splits {
        let idx = nested_subset_indices(self.splits.train.len(), fraction, self.subset_seed);
        Splits {
            train: self.splits.train.subset(&idx),
            valid: self.splits.valid.clone(),
            test: self.splits.test.clone(),
        }
    }

    fn run_cell(
        &self,
        init: &EncoderParams,
        variant: Variant,
        fraction: f64,
        seed: u64,
    ) -> Result<(Report, Vec<Row>)> {
        let splits = self.splits_for_fraction(fraction);
        // The random-init arm draws a fresh encoder per seed; pretrained
        // arms share their checkpoint and vary only the fine-tune seed.
        let mut params = if variant == Variant::NoneInit {
            EncoderParams::init(EncoderConfig {
                seed: self.encoder_cfg.seed ^ seed.wrapping_mul(0x9e37),
                ..self.encoder_cfg
            })?
        } else {
            init.clone()
        };
        let epochs = if self.scale_epochs {
            (self.finetune_cfg.epochs as f64 / fraction).ceil() as usize
        } else {
            self.finetune_cfg.epochs
        };
        let cfg = FinetuneConfig {
            seed,
            epochs,
            ..self.finetune_cfg
        };
        let report = finetune(&mut params, &self.corpus.vocab, &splits, &cfg)?.report;
        let rows = vec![
            Row {
                variant: variant.name().into(),
                task: report.task.clone(),
                fraction,
                seed,
                metric: "macro_f1".into(),
                value: report.macro_f1,
            },
            Row {
                variant: variant.name().into(),
                task: report.task.clone(),
                fraction,
                seed,
                metric: "accuracy".into(),
                value: report.accuracy,
            },
        ];
        Ok((report, rows))
    }

    /// Run every (variant, fraction, seed) cell. Cells execute in
    /// parallel threads; each cell is internally single-threaded and the
    /// output order is independent of scheduling.
    pub fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>> {
        spec.validate()?;
        let examples = self.build_examples();
        let mut inits: BTreeMap<Variant, EncoderParams> = BTreeMap::new();
        for &variant in &spec.variants {
            if !inits.contains_key(&variant) {
                inits.insert(variant, self.pretrain_variant(variant, &examples)?);
            }
        }

        let mut cells = Vec::new();
        for &variant in &spec.variants {
            for &fraction in &spec.fractions {
                for &seed in &spec.seeds {
                    cells.push((variant, fraction, seed));
                }
            }
        }

        let n_threads = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(cells.len().max(1));
        let results: Vec<Result<Vec<Row>>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for tid in 0..n_threads {
                let cells = &cells;
                let inits = &inits;
                let this = &*self;
                handles.push(scope.spawn(move || {
                    let mut out: Vec<(usize, Result<Vec<Row>>)> = Vec::new();
                    let mut i = tid;
                    while i < cells.len() {
                        let (variant, fraction, seed) = cells[i];
                        let res = this
                            .run_cell(&inits[&variant], variant, fraction, seed)
                            .map(|(_, rows)| rows);
                        out.push((i, res));
                        i += n_threads;
                    }
                    out
                }));
            }
            let mut indexed: Vec<(usize, Result<Vec<Row>>)> = Vec::new();
            for h in handles {
                indexed.extend(h.join().expect("experiment cell thread panicked"));
            }
            indexed.sort_by_key(|(i, _)| *i);
            indexed.into_iter().map(|(_, r)| r).collect()
        });

        let mut rows = Vec::new();
        for r in results {
            rows.extend(r?);
        }
        Ok(rows)
    }

    /// Ablation at the full data fraction.
    pub fn run_ablation(
        &self,
        variants: &[Variant],
        task: TaskKind,
        seeds: &[u64],
    ) -> Result<Vec<Row>> {
        self.run(&ExperimentSpec {
            variants: variants.to_vec(),
            task,
            fractions: vec![1.0],
            seeds: seeds.to_vec(),
        })
    }

    /// Data-scale sweep over nested fractions.
    pub fn run_data_scale(
        &self,
        variants: &[Variant],
        task: TaskKind,
        fractions: &[f64],
        seeds: &[u64],
    ) -> Result<Vec<Row>> {
        self.run(&ExperimentSpec {
            variants: variants.to_vec(),
            task,
            fractions: fractions.to_vec(),
            seeds: seeds.to_vec(),
        })
    }
}
