//! End-to-end wiring: mining configuration and the mine step shared by
//! the CLI, the experiment harness, and the examples.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{build_frequency_table, Corpus, FrequencyTable};
use crate::error::Result;
use crate::graph::{build_graph, SemanticGraph};
use crate::similarity::{
    apply_overrides, cluster_words, recycle_clusters, train_embeddings, EmbeddingTable,
    RecycleConfig, SynonymCluster, Word2VecConfig,
};
use crate::terms::{match_pairs, tag_terms, Lexicon, SentenceId, TermKind, TermSpan};

#[derive(Debug, Clone)]
pub struct MiningConfig {
    pub word2vec: Word2VecConfig,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub recycle: RecycleConfig,
    pub min_pair_count: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            word2vec: Word2VecConfig::default(),
            dbscan_eps: 0.3,
            dbscan_min_pts: 2,
            recycle: RecycleConfig::default(),
            min_pair_count: 1,
        }
    }
}

/// Everything the mine step produces.
pub struct MinedArtifacts {
    pub freq: FrequencyTable,
    pub embeddings: EmbeddingTable,
    pub clusters: Vec<SynonymCluster>,
    pub cluster_noise: Vec<String>,
    pub tagged_spans: Vec<(SentenceId, Vec<TermSpan>)>,
    pub pair_counts: BTreeMap<(String, String), u64>,
    pub graph: SemanticGraph,
}

/// Tag terms, match pairs, train embeddings, cluster synonyms (with the
/// recycling pass) and assemble the semantic graph.
pub fn mine(corpus: &Corpus, lexicon: &Lexicon, cfg: &MiningConfig) -> Result<MinedArtifacts> {
    mine_with_overrides(corpus, lexicon, cfg, None)
}

/// `mine`, with a manual override file applied to the clusters between
/// the recycling pass and graph assembly.
pub fn mine_with_overrides(
    corpus: &Corpus,
    lexicon: &Lexicon,
    cfg: &MiningConfig,
    overrides: Option<(&str, &Path)>,
) -> Result<MinedArtifacts> {
    let freq = build_frequency_table(corpus);

    let mut tagged_spans = Vec::new();
    let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut observed: BTreeMap<TermKind, std::collections::BTreeSet<String>> = BTreeMap::new();
    for (doc_idx, doc) in corpus.documents.iter().enumerate() {
        for (sent_idx, sentence) in doc.sentences.iter().enumerate() {
            let sid = SentenceId {
                doc: doc_idx,
                sent: sent_idx,
            };
            let spans = tag_terms(sentence, sid, lexicon);
            if spans.is_empty() {
                continue;
            }
            for span in &spans {
                observed
                    .entry(span.kind)
                    .or_default()
                    .insert(span.surface(sentence));
            }
            for pair in match_pairs(&spans) {
                let key = (
                    pair.aspect.surface(sentence),
                    pair.sentiment.surface(sentence),
                );
                *pair_counts.entry(key).or_insert(0) += 1;
            }
            tagged_spans.push((sid, spans));
        }
    }

    let embeddings = train_embeddings(corpus, &cfg.word2vec)?;

    // Single observed words of each kind feed the clustering (phrases
    // have no single embedding row).
    let mut clusters = Vec::new();
    let mut cluster_noise = Vec::new();
    for kind in [TermKind::Aspect, TermKind::Sentiment] {
        let words: Vec<String> = observed
            .get(&kind)
            .map(|set| {
                set.iter()
                    .filter(|w| !w.contains(' ') && corpus.vocab.lookup(w).is_some())
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        if words.len() < 2 {
            continue;
        }
        let vectors: Vec<Vec<f64>> = words
            .iter()
            .map(|w| embeddings.vector(corpus.vocab.id(w)).to_vec())
            .collect();
        let (kind_clusters, noise) =
            cluster_words(&words, &vectors, kind, cfg.dbscan_eps, cfg.dbscan_min_pts);
        clusters.extend(kind_clusters);
        cluster_noise.extend(noise);
    }
    let vocab = &corpus.vocab;
    let lookup = |w: &str| vocab.lookup(w).map(|id| embeddings.vector(id).to_vec());
    let mut clusters = recycle_clusters(clusters, &lookup, &cfg.recycle);
    if let Some((text, path)) = overrides {
        let known: std::collections::BTreeSet<String> = corpus
            .vocab
            .to_tsv()
            .lines()
            .filter_map(|l| l.split('\t').next())
            .map(|w| w.to_string())
            .collect();
        clusters = apply_overrides(clusters, text, path, &known)?;
    }

    let graph = build_graph(&clusters, &pair_counts, cfg.min_pair_count);
    graph.check_invariants()?;

    Ok(MinedArtifacts {
        freq,
        embeddings,
        clusters,
        cluster_noise,
        tagged_spans,
        pair_counts,
        graph,
    })
}

impl MinedArtifacts {
    /// `aspect \t sentiment \t count`, sorted.
    pub fn pairs_tsv(&self) -> String {
        let mut out = String::new();
        for ((a, s), c) in &self.pair_counts {
            out.push_str(&format!("{}\t{}\t{}\n", a, s, c));
        }
        out
    }

    /// Tagged spans as JSON lines for inspection.
    pub fn tagged_jsonl(&self, corpus: &Corpus) -> String {
        let mut out = String::new();
        for (sid, spans) in &self.tagged_spans {
            let sentence = &corpus.documents[sid.doc].sentences[sid.sent];
            let row = serde_json::json!({
                "doc": sid.doc,
                "sent": sid.sent,
                "text": sentence.text,
                "spans": spans.iter().map(|s| serde_json::json!({
                    "first": s.first,
                    "last": s.last,
                    "kind": s.kind,
                    "surface": s.surface(sentence),
                })).collect::<Vec<_>>(),
            });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------
// Pipeline configuration and the CLI-facing commands.
// ---------------------------------------------------------------------

use crate::downstream::{finetune, FinetuneConfig, Splits, TaskData, TaskKind};
use crate::encoder::checkpoint::{self, OptimizerState};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::Error;
use crate::evalkit::synthetic::{
    generate_aspect_cls, generate_corpus, generate_extraction, generate_sentence_cls, lexicon_tsv,
    SyntheticConfig,
};
use crate::evalkit::{rows_to_csv, ExperimentContext, ExperimentSpec, Variant};
use crate::graph::SamplingMode;
use crate::objectives::{examples_to_jsonl, ExampleBuilder, ObjectiveConfig};
use crate::pretrain::{loss_log_csv, run_pretrain, LossRow, PretrainConfig};
use std::path::PathBuf;
use std::str::FromStr;

/// Every knob of the pipeline in one flat, serializable bag. Defaults
/// follow the published pretraining parameters (masking rate 0.2, two
/// pairs, batch 32, lr 1e-5, warmup 0.1, no weight decay), scaled-down
/// sequence length for desk runs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    // Paths.
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub valid_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub pred: Option<PathBuf>,

    pub seed: u64,

    // Mining.
    pub d_emb: usize,
    pub window: usize,
    pub w2v_epochs: usize,
    pub w2v_negatives: usize,
    pub w2v_lr: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub recycle_max_size: usize,
    pub min_pair_count: u64,

    // Encoder.
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,

    // Pretraining.
    pub masking_rate: f64,
    pub n_pairs_max: usize,
    pub n_contrastive_max: usize,
    pub n_negatives: usize,
    pub sample_depth: usize,
    pub sample_len: usize,
    pub sampling_mode: SamplingMode,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
    pub checkpoint_every: usize,
    pub resume: bool,
    pub dump_examples: bool,
    pub use_pairs: bool,
    pub use_contrastive: bool,

    // Fine-tuning / evaluation.
    pub task: TaskKind,
    pub ft_epochs: usize,
    pub ft_batch_size: usize,
    pub ft_lr: f64,
    pub freeze_encoder: bool,

    // Experiments.
    pub variants: Vec<Variant>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_unlabeled: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub imbalance: f64,
    pub scale_epochs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            lexicon: None,
            overrides: None,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            train_data: None,
            valid_data: None,
            test_data: None,
            gold: None,
            pred: None,
            seed: 1,
            d_emb: 32,
            window: 5,
            w2v_epochs: 10,
            w2v_negatives: 5,
            w2v_lr: 0.025,
            dbscan_eps: 0.3,
            dbscan_min_pts: 2,
            recycle_max_size: 30,
            min_pair_count: 1,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_len: 128,
            masking_rate: 0.2,
            n_pairs_max: 2,
            n_contrastive_max: 2,
            n_negatives: 4,
            sample_depth: 2,
            sample_len: 4,
            sampling_mode: SamplingMode::Union,
            batch_size: 32,
            lr: 1e-5,
            warmup_ratio: 0.1,
            total_steps: 200,
            checkpoint_every: 50,
            resume: false,
            dump_examples: false,
            use_pairs: true,
            use_contrastive: true,
            task: TaskKind::SentenceCls,
            ft_epochs: 10,
            ft_batch_size: 32,
            ft_lr: 1e-5,
            freeze_encoder: false,
            variants: vec![Variant::NoneInit, Variant::Full],
            fractions: vec![1.0],
            seeds: vec![1, 2, 3],
            n_unlabeled: 4000,
            n_train: 2000,
            n_valid: 250,
            n_test: 500,
            imbalance: 10.0,
            scale_epochs: true,
        }
    }
}

impl PipelineConfig {
    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {:?} for {}", value, key)))
        }
        fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse(key, s.trim()))
                .collect()
        }
        match key {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "lexicon" => self.lexicon = Some(PathBuf::from(value)),
            "overrides" => self.overrides = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "train_data" => self.train_data = Some(PathBuf::from(value)),
            "valid_data" => self.valid_data = Some(PathBuf::from(value)),
            "test_data" => self.test_data = Some(PathBuf::from(value)),
            "gold" => self.gold = Some(PathBuf::from(value)),
            "pred" => self.pred = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "d_emb" => self.d_emb = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "w2v_epochs" => self.w2v_epochs = parse(key, value)?,
            "w2v_negatives" => self.w2v_negatives = parse(key, value)?,
            "w2v_lr" => self.w2v_lr = parse(key, value)?,
            "dbscan_eps" => self.dbscan_eps = parse(key, value)?,
            "dbscan_min_pts" => self.dbscan_min_pts = parse(key, value)?,
            "recycle_max_size" => self.recycle_max_size = parse(key, value)?,
            "min_pair_count" => self.min_pair_count = parse(key, value)?,
            "d_model" => self.d_model = parse(key, value)?,
            "n_layers" => self.n_layers = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "masking_rate" => self.masking_rate = parse(key, value)?,
            "n_pairs_max" => self.n_pairs_max = parse(key, value)?,
            "n_contrastive_max" => self.n_contrastive_max = parse(key, value)?,
            "n_negatives" => self.n_negatives = parse(key, value)?,
            "sample_depth" => self.sample_depth = parse(key, value)?,
            "sample_len" => self.sample_len = parse(key, value)?,
            "sampling_mode" => {
                self.sampling_mode = match value {
                    "union" => SamplingMode::Union,
                    "as_written" => SamplingMode::AsWritten,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad sampling_mode {:?} (want union|as_written)",
                            value
                        )))
                    }
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "warmup_ratio" => self.warmup_ratio = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "resume" => self.resume = parse(key, value)?,
            "dump_examples" => self.dump_examples = parse(key, value)?,
            "use_pairs" => self.use_pairs = parse(key, value)?,
            "use_contrastive" => self.use_contrastive = parse(key, value)?,
            "task" => self.task = value.parse()?,
            "ft_epochs" => self.ft_epochs = parse(key, value)?,
            "ft_batch_size" => self.ft_batch_size = parse(key, value)?,
            "ft_lr" => self.ft_lr = parse(key, value)?,
            "freeze_encoder" => self.freeze_encoder = parse(key, value)?,
            "variants" => {
                self.variants = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "fractions" => self.fractions = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "n_unlabeled" => self.n_unlabeled = parse(key, value)?,
            "n_train" => self.n_train = parse(key, value)?,
            "n_valid" => self.n_valid = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "imbalance" => self.imbalance = parse(key, value)?,
            "scale_epochs" => self.scale_epochs = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {:?}", key))),
        }
        Ok(())
    }

    /// Load from a `key = value` file (# comments), then apply overrides
    /// in order; later settings win.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
                cfg.set(key.trim(), value.trim())
                    .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// The serialized snapshot written next to every run's outputs.
    pub fn snapshot(&self) -> String {
        let path_or = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{} = {}\n", k, v));
        kv("corpus", path_or(&self.corpus));
        kv("lexicon", path_or(&self.lexicon));
        kv("overrides", path_or(&self.overrides));
        kv("out_dir", self.out_dir.display().to_string());
        kv("checkpoint", path_or(&self.checkpoint));
        kv("train_data", path_or(&self.train_data));
        kv("valid_data", path_or(&self.valid_data));
        kv("test_data", path_or(&self.test_data));
        kv("gold", path_or(&self.gold));
        kv("pred", path_or(&self.pred));
        kv("seed", self.seed.to_string());
        kv("d_emb", self.d_emb.to_string());
        kv("window", self.window.to_string());
        kv("w2v_epochs", self.w2v_epochs.to_string());
        kv("w2v_negatives", self.w2v_negatives.to_string());
        kv("w2v_lr", self.w2v_lr.to_string());
        kv("dbscan_eps", self.dbscan_eps.to_string());
        kv("dbscan_min_pts", self.dbscan_min_pts.to_string());
        kv("recycle_max_size", self.recycle_max_size.to_string());
        kv("min_pair_count", self.min_pair_count.to_string());
        kv("d_model", self.d_model.to_string());
        kv("n_layers", self.n_layers.to_string());
        kv("n_heads", self.n_heads.to_string());
        kv("max_len", self.max_len.to_string());
        kv("masking_rate", self.masking_rate.to_string());
        kv("n_pairs_max", self.n_pairs_max.to_string());
        kv("n_contrastive_max", self.n_contrastive_max.to_string());
        kv("n_negatives", self.n_negatives.to_string());
        kv("sample_depth", self.sample_depth.to_string());
        kv("sample_len", self.sample_len.to_string());
        kv(
            "sampling_mode",
            match self.sampling_mode {
                SamplingMode::Union => "union".into(),
                SamplingMode::AsWritten => "as_written".into(),
            },
        );
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.lr.to_string());
        kv("warmup_ratio", self.warmup_ratio.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("resume", self.resume.to_string());
        kv("dump_examples", self.dump_examples.to_string());
        kv("use_pairs", self.use_pairs.to_string());
        kv("use_contrastive", self.use_contrastive.to_string());
        kv("task", self.task.to_string());
        kv("ft_epochs", self.ft_epochs.to_string());
        kv("ft_batch_size", self.ft_batch_size.to_string());
        kv("ft_lr", self.ft_lr.to_string());
        kv("freeze_encoder", self.freeze_encoder.to_string());
        kv(
            "variants",
            self.variants
                .iter()
                .map(|v| v.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "fractions",
            self.fractions
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "seeds",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("n_unlabeled", self.n_unlabeled.to_string());
        kv("n_train", self.n_train.to_string());
        kv("n_valid", self.n_valid.to_string());
        kv("n_test", self.n_test.to_string());
        kv("imbalance", self.imbalance.to_string());
        kv("scale_epochs", self.scale_epochs.to_string());
        s
    }

    pub fn mining_config(&self) -> MiningConfig {
        MiningConfig {
            word2vec: Word2VecConfig {
                d_emb: self.d_emb,
                window: self.window,
                epochs: self.w2v_epochs,
                negatives: self.w2v_negatives,
                lr: self.w2v_lr,
                seed: self.seed,
            },
            dbscan_eps: self.dbscan_eps,
            dbscan_min_pts: self.dbscan_min_pts,
            recycle: RecycleConfig {
                max_size: self.recycle_max_size,
                ..Default::default()
            },
            min_pair_count: self.min_pair_count,
        }
    }

    pub fn objective_config(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            masking_rate: self.masking_rate,
            n_pairs_max: self.n_pairs_max,
            n_contrastive_max: self.n_contrastive_max,
            n_negatives: self.n_negatives,
            sample_depth: self.sample_depth,
            sample_len: self.sample_len,
            sampling_mode: self.sampling_mode,
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            max_len: self.max_len,
            seed: self.seed,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            warmup_ratio: self.warmup_ratio,
            total_steps: self.total_steps,
            seed: self.seed,
            use_pairs: self.use_pairs,
            use_contrastive: self.use_contrastive,
            objectives: self.objective_config(),
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.ft_epochs,
            batch_size: self.ft_batch_size,
            lr: self.ft_lr,
            seed: self.seed,
            freeze_encoder: self.freeze_encoder,
        }
    }

    fn require(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| Error::Config(format!("{} path not set", what)))?;
        if !p.exists() {
            return Err(Error::Config(format!(
                "{} path {} does not exist",
                what,
                p.display()
            )));
        }
        Ok(p)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn write_snapshot(cfg: &PipelineConfig) -> Result<()> {
    write_file(&cfg.out_dir.join("run_config.txt"), &cfg.snapshot())
}

/// Mine the semantic graph and write every artifact under `out_dir`.
/// All inputs are validated before anything is written.
pub fn cmd_mine(cfg: &PipelineConfig) -> Result<GraphStatsSummary> {
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let lexicon_path = cfg.require(&cfg.lexicon, "lexicon")?;
    let lexicon = Lexicon::load(&lexicon_path)?;
    let override_text = match &cfg.overrides {
        Some(_) => {
            let p = cfg.require(&cfg.overrides, "overrides")?;
            Some((
                std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
                p,
            ))
        }
        None => None,
    };
    let corpus = crate::corpus::ingest(&corpus_path)?;

    let mined = mine_with_overrides(
        &corpus,
        &lexicon,
        &cfg.mining_config(),
        override_text
            .as_ref()
            .map(|(t, p)| (t.as_str(), p.as_path())),
    )?;

    ensure_out_dir(cfg)?;
    write_snapshot(cfg)?;
    write_file(&cfg.out_dir.join("vocab.tsv"), &corpus.vocab.to_tsv())?;
    mined.embeddings.save(&cfg.out_dir.join("embeddings.bin"))?;
    write_file(
        &cfg.out_dir.join("clusters.json"),
        &crate::similarity::clusters_to_json(&mined.clusters)?,
    )?;
    write_file(&cfg.out_dir.join("pairs.tsv"), &mined.pairs_tsv())?;
    write_file(
        &cfg.out_dir.join("tagged.jsonl"),
        &mined.tagged_jsonl(&corpus),
    )?;
    write_file(&cfg.out_dir.join("graph.json"), &mined.graph.to_json()?)?;

    let stats = mined.graph.stats();
    Ok(GraphStatsSummary {
        aspect_nodes: stats.aspect_nodes,
        sentiment_nodes: stats.sentiment_nodes,
        similarity_edges: stats.similarity_edges,
        pair_edges: stats.pair_edges,
        clusters: mined.clusters.len(),
        pairs: mined.pair_counts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStatsSummary {
    pub aspect_nodes: usize,
    pub sentiment_nodes: usize,
    pub similarity_edges: usize,
    pub pair_edges: usize,
    pub clusters: usize,
    pub pairs: usize,
}

impl std::fmt::Display for GraphStatsSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "nodes: {} aspect, {} sentiment",
            self.aspect_nodes, self.sentiment_nodes
        )?;
        writeln!(
            f,
            "edges: {} similarity, {} pair",
            self.similarity_edges, self.pair_edges
        )?;
        write!(
            f,
            "clusters: {}; distinct pairs: {}",
            self.clusters, self.pairs
        )
    }
}

/// Continue-pretrain the encoder against the mined graph. Needs the
/// corpus/lexicon plus the graph.json produced by `mine`. Writes the
/// checkpoint, the per-step loss log, and (optionally) the generated
/// examples as JSON lines.
pub fn cmd_pretrain(cfg: &PipelineConfig) -> Result<Vec<LossRow>> {
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let lexicon_path = cfg.require(&cfg.lexicon, "lexicon")?;
    let graph_path = cfg.out_dir.join("graph.json");
    if !graph_path.exists() {
        return Err(Error::Config(format!(
            "{} not found; run `mine` first",
            graph_path.display()
        )));
    }
    let corpus = crate::corpus::ingest(&corpus_path)?;
    let lexicon = Lexicon::load(&lexicon_path)?;
    let graph = SemanticGraph::from_json(
        &std::fs::read_to_string(&graph_path).map_err(|e| Error::io(&graph_path, e))?,
    )?;
    let freq = build_frequency_table(&corpus);

    ensure_out_dir(cfg)?;
    write_snapshot(cfg)?;

    let builder = ExampleBuilder {
        corpus: &corpus,
        graph: &graph,
        freq: &freq,
        lexicon: &lexicon,
        config: cfg.objective_config(),
        max_len: cfg.max_len,
    };
    let examples = builder.build(cfg.seed);
    if examples.is_empty() {
        return Err(Error::Invalid("no pretraining examples generated".into()));
    }
    if cfg.dump_examples {
        write_file(
            &cfg.out_dir.join("examples.jsonl"),
            &examples_to_jsonl(&examples, &corpus.vocab),
        )?;
    }

    let ckpt_path = cfg.out_dir.join("encoder.ckpt");
    let mut prior_rows: Vec<LossRow> = Vec::new();
    let (mut params, resume_state) = if cfg.resume && ckpt_path.exists() {
        let (params, opt) = checkpoint::load(&ckpt_path)?;
        let state = opt.ok_or_else(|| {
            Error::Checkpoint("checkpoint has no optimizer state; cannot resume".into())
        })?;
        // Keep the already-logged rows up to the resume step.
        let log_path = cfg.out_dir.join("loss_log.csv");
        if log_path.exists() {
            let text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
            for line in text.lines().skip(1) {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() == 5 {
                    let row = LossRow {
                        step: fields[0].parse().unwrap_or(0),
                        sw: fields[1].parse().unwrap_or(0.0),
                        ap: fields[2].parse().unwrap_or(0.0),
                        ns: fields[3].parse().unwrap_or(0.0),
                        total: fields[4].parse().unwrap_or(0.0),
                    };
                    if row.step as u64 <= state.step {
                        prior_rows.push(row);
                    }
                }
            }
        }
        (params, Some(state))
    } else {
        (
            EncoderParams::init(cfg.encoder_config(corpus.vocab.len()))?,
            None,
        )
    };

    let pretrain_cfg = cfg.pretrain_config();
    let every = cfg.checkpoint_every.max(1);
    let rows = run_pretrain(
        &mut params,
        &examples,
        &pretrain_cfg,
        resume_state.as_ref(),
        |params, adam, row| {
            if row.step % every == 0 || row.step == pretrain_cfg.total_steps {
                let state = OptimizerState::capture(adam, row.step as u64);
                checkpoint::save(&ckpt_path, params, Some(&state))?;
            }
            Ok(())
        },
    )?;

    let mut all_rows = prior_rows;
    all_rows.extend(rows.iter().copied());
    write_file(&cfg.out_dir.join("loss_log.csv"), &loss_log_csv(&all_rows))?;
    Ok(all_rows)
}

fn load_splits(cfg: &PipelineConfig) -> Result<Splits> {
    let train_path = cfg.require(&cfg.train_data, "train_data")?;
    let train = TaskData::load_jsonl(cfg.task, &train_path)?;
    match (&cfg.valid_data, &cfg.test_data) {
        (Some(_), Some(_)) => {
            let valid_path = cfg.require(&cfg.valid_data, "valid_data")?;
            let test_path = cfg.require(&cfg.test_data, "test_data")?;
            Ok(Splits {
                valid: TaskData::load_jsonl(cfg.task, &valid_path)?,
                test: TaskData::load_jsonl(cfg.task, &test_path)?,
                train,
            })
        }
        // Single file: deterministic 7:1:2 split.
        _ => Ok(crate::downstream::split_712(&train, cfg.seed)),
    }
}

/// Fine-tune from a checkpoint (or random init) and write the report.
pub fn cmd_finetune(cfg: &PipelineConfig) -> Result<crate::downstream::Report> {
    let splits = load_splits(cfg)?;
    let mut params = match &cfg.checkpoint {
        Some(_) => {
            let p = cfg.require(&cfg.checkpoint, "checkpoint")?;
            checkpoint::load(&p)?.0
        }
        None => {
            let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
            let corpus = crate::corpus::ingest(&corpus_path)?;
            EncoderParams::init(cfg.encoder_config(corpus.vocab.len()))?
        }
    };
    // The vocabulary must match the encoder; rebuild it from the corpus.
    let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
    let corpus = crate::corpus::ingest(&corpus_path)?;
    if corpus.vocab.len() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "corpus vocab size {} does not match checkpoint vocab size {}",
            corpus.vocab.len(),
            params.config.vocab_size
        )));
    }
    ensure_out_dir(cfg)?;
    write_snapshot(cfg)?;
    let report = finetune(&mut params, &corpus.vocab, &splits, &cfg.finetune_config())?.report;
    write_file(
        &cfg.out_dir.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

/// Score a prediction file against a gold file. For classification
/// tasks both files are JSON lines with a `label` field; for extraction
/// both carry a `tags` array. Rows align one to one.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<crate::downstream::Report> {
    let gold_path = cfg.require(&cfg.gold, "gold")?;
    let pred_path = cfg.require(&cfg.pred, "pred")?;
    let gold_text = std::fs::read_to_string(&gold_path).map_err(|e| Error::io(&gold_path, e))?;
    let pred_text = std::fs::read_to_string(&pred_path).map_err(|e| Error::io(&pred_path, e))?;
    let report = match cfg.task {
        TaskKind::Extraction => {
            let parse = |text: &str, path: &Path| -> Result<Vec<Vec<String>>> {
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, line)| {
                        let v: serde_json::Value = serde_json::from_str(line)
                            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                        let tags = v
                            .get("tags")
                            .and_then(|t| t.as_array())
                            .ok_or_else(|| Error::parse(path, i + 1, "missing tags array"))?;
                        Ok(tags
                            .iter()
                            .map(|t| t.as_str().unwrap_or_default().to_string())
                            .collect())
                    })
                    .collect()
            };
            let gold = parse(&gold_text, &gold_path)?;
            let pred = parse(&pred_text, &pred_path)?;
            if gold.len() != pred.len() {
                return Err(Error::Invalid(format!(
                    "gold has {} rows, pred has {}",
                    gold.len(),
                    pred.len()
                )));
            }
            crate::downstream::report_from_tags(&gold, &pred)
        }
        task => {
            let parse = |text: &str, path: &Path| -> Result<Vec<usize>> {
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, line)| {
                        let v: serde_json::Value = serde_json::from_str(line)
                            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                        v.get("label")
                            .and_then(|l| l.as_u64())
                            .map(|l| l as usize)
                            .ok_or_else(|| Error::parse(path, i + 1, "missing integer label"))
                    })
                    .collect()
            };
            let gold = parse(&gold_text, &gold_path)?;
            let pred = parse(&pred_text, &pred_path)?;
            if gold.len() != pred.len() {
                return Err(Error::Invalid(format!(
                    "gold has {} rows, pred has {}",
                    gold.len(),
                    pred.len()
                )));
            }
            crate::downstream::report_from_labels(task, &gold, &pred)
        }
    };
    ensure_out_dir(cfg)?;
    write_snapshot(cfg)?;
    write_file(
        &cfg.out_dir.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

/// Run the ablation / data-scale experiment on the synthetic benchmark
/// and write the per-cell CSV plus mean/stdev aggregates.
pub fn cmd_experiment(cfg: &PipelineConfig) -> Result<Vec<crate::evalkit::Row>> {
    let synthetic = SyntheticConfig {
        n_unlabeled: cfg.n_unlabeled,
        n_train: cfg.n_train,
        n_valid: cfg.n_valid,
        n_test: cfg.n_test,
        imbalance: cfg.imbalance,
        seed: cfg.seed,
    };
    let corpus = crate::corpus::corpus_from_lines(generate_corpus(&synthetic));
    let lexicon = Lexicon::from_tsv(&lexicon_tsv(), Path::new("<builtin lexicon>"))?;
    let mined = mine(&corpus, &lexicon, &cfg.mining_config())?;
    let make = |stream: u64, n: usize| match cfg.task {
        TaskKind::SentenceCls => generate_sentence_cls(&synthetic, n, stream),
        TaskKind::AspectCls => generate_aspect_cls(&synthetic, n, stream),
        TaskKind::Extraction => generate_extraction(&synthetic, n, stream),
    };
    let splits = Splits {
        train: make(1, cfg.n_train),
        valid: make(2, cfg.n_valid),
        test: make(3, cfg.n_test),
    };
    let ctx = ExperimentContext {
        corpus: &corpus,
        graph: &mined.graph,
        freq: &mined.freq,
        lexicon: &lexicon,
        splits: &splits,
        encoder_cfg: cfg.encoder_config(corpus.vocab.len()),
        pretrain_cfg: cfg.pretrain_config(),
        finetune_cfg: cfg.finetune_config(),
        subset_seed: cfg.seed ^ 0x5ca1e,
        scale_epochs: cfg.scale_epochs,
    };
    let spec = ExperimentSpec {
        variants: cfg.variants.clone(),
        task: cfg.task,
        fractions: cfg.fractions.clone(),
        seeds: cfg.seeds.clone(),
    };
    let rows = ctx.run(&spec)?;

    ensure_out_dir(cfg)?;
    write_snapshot(cfg)?;
    write_file(&cfg.out_dir.join("experiment.csv"), &rows_to_csv(&rows))?;
    let mut agg_csv = String::from("variant,task,fraction,metric,mean,stdev,n\n");
    for a in crate::evalkit::aggregate(&rows) {
        agg_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.variant, a.task, a.fraction, a.metric, a.mean, a.stdev, a.n
        ));
    }
    write_file(&cfg.out_dir.join("experiment_aggregate.csv"), &agg_csv)?;
    Ok(rows)
}
