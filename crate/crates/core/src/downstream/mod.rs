//! Fine-tuning heads and procedures for the three evaluation tasks:
//! sentence-level classification, aspect-level classification, and
//! aspect/sentiment term extraction (CRF head, BIO tags).

pub mod crf;
pub mod metrics;

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{tokenize, Vocab, CLS, SEP};
use crate::encoder::{softmax_in_place, Adam, EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::rng::Rng;
pub use crf::{CrfGrads, CrfLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SentenceCls,
    AspectCls,
    Extraction,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<TaskKind> {
        match s {
            "sentence_cls" => Ok(TaskKind::SentenceCls),
            "aspect_cls" => Ok(TaskKind::AspectCls),
            "extraction" => Ok(TaskKind::Extraction),
            other => Err(Error::Config(format!(
                "unknown task {:?} (want sentence_cls|aspect_cls|extraction)",
                other
            ))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::SentenceCls => "sentence_cls",
            TaskKind::AspectCls => "aspect_cls",
            TaskKind::Extraction => "extraction",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClsExample {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AspectExample {
    pub text: String,
    pub aspect: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TaggedExample {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Task datasets, one variant per task shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskData {
    Sentence(Vec<ClsExample>),
    Aspect(Vec<AspectExample>),
    Extraction(Vec<TaggedExample>),
}

impl TaskData {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskData::Sentence(_) => TaskKind::SentenceCls,
            TaskData::Aspect(_) => TaskKind::AspectCls,
            TaskData::Extraction(_) => TaskKind::Extraction,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TaskData::Sentence(v) => v.len(),
            TaskData::Aspect(v) => v.len(),
            TaskData::Extraction(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, indices: &[usize]) -> TaskData {
        match self {
            TaskData::Sentence(v) => {
                TaskData::Sentence(indices.iter().map(|&i| v[i].clone()).collect())
            }
            TaskData::Aspect(v) => {
                TaskData::Aspect(indices.iter().map(|&i| v[i].clone()).collect())
            }
            TaskData::Extraction(v) => {
                TaskData::Extraction(indices.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    pub fn load_jsonl(kind: TaskKind, path: &Path) -> Result<TaskData> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_all = |f: &mut dyn FnMut(&str, usize) -> Result<()>| -> Result<()> {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                f(line, i + 1)?;
            }
            Ok(())
        };
        match kind {
            TaskKind::SentenceCls => {
                let mut rows = Vec::new();
                parse_all(&mut |line, no| {
                    rows.push(
                        serde_json::from_str::<ClsExample>(line)
                            .map_err(|e| Error::parse(path, no, e.to_string()))?,
                    );
                    Ok(())
                })?;
                Ok(TaskData::Sentence(rows))
            }
            TaskKind::AspectCls => {
                let mut rows = Vec::new();
                parse_all(&mut |line, no| {
                    rows.push(
                        serde_json::from_str::<AspectExample>(line)
                            .map_err(|e| Error::parse(path, no, e.to_string()))?,
                    );
                    Ok(())
                })?;
                Ok(TaskData::Aspect(rows))
            }
            TaskKind::Extraction => {
                let mut rows = Vec::new();
                parse_all(&mut |line, no| {
                    rows.push(
                        serde_json::from_str::<TaggedExample>(line)
                            .map_err(|e| Error::parse(path, no, e.to_string()))?,
                    );
                    Ok(())
                })?;
                Ok(TaskData::Extraction(rows))
            }
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&v.to_string());
            out.push('\n');
        };
        match self {
            TaskData::Sentence(v) => v
                .iter()
                .for_each(|e| push(serde_json::to_value(e).unwrap())),
            TaskData::Aspect(v) => v
                .iter()
                .for_each(|e| push(serde_json::to_value(e).unwrap())),
            TaskData::Extraction(v) => v
                .iter()
                .for_each(|e| push(serde_json::to_value(e).unwrap())),
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TaskData,
    pub valid: TaskData,
    pub test: TaskData,
}

/// Deterministic 7:1:2 split after a seeded shuffle.
pub fn split_712(data: &TaskData, seed: u64) -> Splits {
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::for_stream(seed, 0x712).shuffle(&mut idx);
    let n_train = n * 7 / 10;
    let n_valid = n / 10;
    Splits {
        train: data.subset(&idx[..n_train]),
        valid: data.subset(&idx[n_train..n_train + n_valid]),
        test: data.subset(&idx[n_train + n_valid..]),
    }
}

/// Linear classification head over the [CLS] state.
#[derive(Debug, Clone)]
pub struct ClsHead {
    pub d_model: usize,
    pub n_classes: usize,
    /// `d_model x n_classes`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ClsHead {
    pub fn init(d_model: usize, n_classes: usize, rng: &mut Rng) -> ClsHead {
        ClsHead {
            d_model,
            n_classes,
            w: (0..d_model * n_classes)
                .map(|_| 0.02 * rng.next_gaussian())
                .collect(),
            b: vec![0.0; n_classes],
        }
    }

    pub fn probabilities(&self, hidden_cls: &[f64]) -> Vec<f64> {
        let mut logits = self.b.clone();
        for (i, &h) in hidden_cls.iter().enumerate() {
            let row = &self.w[i * self.n_classes..(i + 1) * self.n_classes];
            for c in 0..self.n_classes {
                logits[c] += h * row[c];
            }
        }
        softmax_in_place(&mut logits);
        logits
    }
}

/// `[CLS] text-tokens`, truncated to `max_len`.
pub fn classification_input(vocab: &Vocab, text: &str, max_len: usize) -> Vec<usize> {
    let sentence = tokenize(text, vocab, 0);
    let mut ids = vec![CLS];
    ids.extend(sentence.tokens.iter().map(|t| t.id));
    ids.truncate(max_len);
    ids
}

/// `[CLS] context [SEP] aspect [SEP]`, truncated to `max_len` with the
/// trailing separator preserved.
pub fn aspect_input(vocab: &Vocab, text: &str, aspect: &str, max_len: usize) -> Vec<usize> {
    let context = tokenize(text, vocab, 0);
    let aspect_toks = tokenize(aspect, vocab, 0);
    let mut ids = vec![CLS];
    ids.extend(context.tokens.iter().map(|t| t.id));
    ids.push(SEP);
    ids.extend(aspect_toks.tokens.iter().map(|t| t.id));
    ids.push(SEP);
    if ids.len() > max_len {
        ids.truncate(max_len - 1);
        ids.push(SEP);
    }
    ids
}

/// Class probabilities for a [CLS]-prefixed input.
pub fn sentence_classify(
    params: &EncoderParams,
    head: &ClsHead,
    ids: &[usize],
) -> Result<Vec<f64>> {
    let pass = params.forward(ids)?;
    Ok(head.probabilities(pass.hidden_at(0)))
}

pub const BIO_TAGS: [&str; 5] = ["O", "B-aspect", "I-aspect", "B-sentiment", "I-sentiment"];

pub fn tag_index(tag: &str) -> Result<usize> {
    BIO_TAGS
        .iter()
        .position(|t| *t == tag)
        .ok_or_else(|| Error::Invalid(format!("unknown BIO tag {:?}", tag)))
}

#[derive(Debug, Clone, Copy)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-5,
            seed: 1,
            freeze_encoder: false,
        }
    }
}

/// Metrics report emitted by fine-tuning and by `eval`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub task: String,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, f64>,
}

/// Adam over one flat parameter vector (heads, CRF potentials).
struct VecAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl VecAdam {
    fn new(n: usize) -> VecAdam {
        VecAdam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], t: usize, lr: f64) {
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}

enum PreparedExample {
    Labeled { ids: Vec<usize>, label: usize },
    Tagged { ids: Vec<usize>, tags: Vec<usize> },
}

fn prepare(data: &TaskData, vocab: &Vocab, max_len: usize) -> Result<Vec<PreparedExample>> {
    let mut out = Vec::with_capacity(data.len());
    match data {
        TaskData::Sentence(rows) => {
            for r in rows {
                out.push(PreparedExample::Labeled {
                    ids: classification_input(vocab, &r.text, max_len),
                    label: r.label,
                });
            }
        }
        TaskData::Aspect(rows) => {
            for r in rows {
                out.push(PreparedExample::Labeled {
                    ids: aspect_input(vocab, &r.text, &r.aspect, max_len),
                    label: r.label,
                });
            }
        }
        TaskData::Extraction(rows) => {
            for r in rows {
                let n = r.tokens.len().min(max_len);
                let ids: Vec<usize> = r.tokens[..n]
                    .iter()
                    .map(|t| vocab.id(&t.to_lowercase()))
                    .collect();
                let tags = r.tags[..n]
                    .iter()
                    .map(|t| tag_index(t))
                    .collect::<Result<Vec<usize>>>()?;
                if !ids.is_empty() {
                    out.push(PreparedExample::Tagged { ids, tags });
                }
            }
        }
    }
    Ok(out)
}

fn n_classes_of(data: &TaskData) -> usize {
    match data {
        TaskData::Sentence(rows) => rows.iter().map(|r| r.label + 1).max().unwrap_or(2).max(2),
        TaskData::Aspect(rows) => rows.iter().map(|r| r.label + 1).max().unwrap_or(2).max(2),
        TaskData::Extraction(_) => BIO_TAGS.len(),
    }
}

/// The trained task head produced by fine-tuning.
#[derive(Debug, Clone)]
pub enum TaskHead {
    Cls(ClsHead),
    Crf(CrfLayer),
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub report: Report,
    pub head: TaskHead,
}

/// Fine-tune the encoder plus a task head on the train split and report
/// test-set metrics. Deterministic given the seed; `freeze_encoder`
/// restricts updates to the head.
pub fn finetune(
    params: &mut EncoderParams,
    vocab: &Vocab,
    splits: &Splits,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let kind = splits.train.kind();
    let max_len = params.config.max_len;
    let train = prepare(&splits.train, vocab, max_len)?;
    if train.is_empty() {
        return Err(Error::Invalid("empty training split".into()));
    }
    let n_classes = n_classes_of(&splits.train).max(n_classes_of(&splits.test));
    let mut rng = Rng::for_stream(cfg.seed, 0xf1e7);
    let d = params.config.d_model;

    let mut cls_head = ClsHead::init(d, n_classes, &mut rng);
    let mut crf_head = CrfLayer::init(d, BIO_TAGS.len(), &mut rng);

    let mut enc_adam = Adam::new(params.n_params(), cfg.lr, 0.0, 1);
    let mut cls_adam = VecAdam::new(cls_head.w.len() + cls_head.b.len());
    let mut crf_adam = VecAdam::new(
        crf_head.emission_w.len()
            + crf_head.emission_b.len()
            + crf_head.transition.len()
            + crf_head.start.len()
            + crf_head.end.len(),
    );

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::for_stream(cfg.seed ^ 0xe90c, epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let mut enc_grads = Gradients::zeros(&params.config);
            let mut cls_w_grads = vec![0.0; cls_head.w.len()];
            let mut cls_b_grads = vec![0.0; cls_head.b.len()];
            let mut crf_grads = crf_head.grads();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                match &train[i] {
                    PreparedExample::Labeled { ids, label } => {
                        let pass = params.forward(ids)?;
                        let hidden = pass.hidden_at(0);
                        let mut probs = cls_head.probabilities(hidden);
                        // d_logits = probs - onehot
                        probs[*label] -= 1.0;
                        let mut d_hidden = vec![0.0; ids.len() * d];
                        for j in 0..d {
                            let row = &cls_head.w[j * n_classes..(j + 1) * n_classes];
                            let grow = &mut cls_w_grads[j * n_classes..(j + 1) * n_classes];
                            let mut acc = 0.0;
                            for c in 0..n_classes {
                                grow[c] += scale * hidden[j] * probs[c];
                                acc += row[c] * probs[c];
                            }
                            d_hidden[j] = scale * acc;
                        }
                        for c in 0..n_classes {
                            cls_b_grads[c] += scale * probs[c];
                        }
                        if !cfg.freeze_encoder {
                            params.backward(&pass, &d_hidden, &mut enc_grads);
                        }
                    }
                    PreparedExample::Tagged { ids, tags } => {
                        let pass = params.forward(ids)?;
                        let n = ids.len();
                        let emissions = crf_head.emissions(&pass.hidden, n);
                        let mut d_emissions = vec![0.0; emissions.len()];
                        crf_head.nll(&emissions, tags, &mut crf_grads, &mut d_emissions);
                        d_emissions.iter_mut().for_each(|x| *x *= scale);
                        let d_hidden = crf_head.emission_backward(
                            &pass.hidden,
                            &d_emissions,
                            n,
                            &mut crf_grads,
                        );
                        if !cfg.freeze_encoder {
                            params.backward(&pass, &d_hidden, &mut enc_grads);
                        }
                    }
                }
            }
            if !cfg.freeze_encoder {
                enc_adam.step(params, &enc_grads, step);
            }
            match kind {
                TaskKind::Extraction => {
                    // Emission grads were scaled via d_emissions; the
                    // potentials accumulated raw and are scaled here.
                    let mut flat_params: Vec<f64> = Vec::new();
                    flat_params.extend(&crf_head.emission_w);
                    flat_params.extend(&crf_head.emission_b);
                    flat_params.extend(&crf_head.transition);
                    flat_params.extend(&crf_head.start);
                    flat_params.extend(&crf_head.end);
                    let mut flat_grads: Vec<f64> = Vec::new();
                    flat_grads.extend(crf_grads.emission_w.iter());
                    flat_grads.extend(crf_grads.emission_b.iter());
                    flat_grads.extend(crf_grads.transition.iter().map(|g| g * scale));
                    flat_grads.extend(crf_grads.start.iter().map(|g| g * scale));
                    flat_grads.extend(crf_grads.end.iter().map(|g| g * scale));
                    crf_adam.step(&mut flat_params, &flat_grads, step, cfg.lr);
                    let mut off = 0;
                    for dst in [
                        &mut crf_head.emission_w,
                        &mut crf_head.emission_b,
                        &mut crf_head.transition,
                        &mut crf_head.start,
                        &mut crf_head.end,
                    ] {
                        let len = dst.len();
                        dst.copy_from_slice(&flat_params[off..off + len]);
                        off += len;
                    }
                }
                _ => {
                    let mut flat_params: Vec<f64> = Vec::new();
                    flat_params.extend(&cls_head.w);
                    flat_params.extend(&cls_head.b);
                    let mut flat_grads = cls_w_grads;
                    flat_grads.extend(cls_b_grads);
                    cls_adam.step(&mut flat_params, &flat_grads, step, cfg.lr);
                    let w_len = cls_head.w.len();
                    cls_head.w.copy_from_slice(&flat_params[..w_len]);
                    cls_head.b.copy_from_slice(&flat_params[w_len..]);
                }
            }
        }
    }

    let report = evaluate(params, vocab, &splits.test, &cls_head, &crf_head)?;
    let head = match kind {
        TaskKind::Extraction => TaskHead::Crf(crf_head),
        _ => TaskHead::Cls(cls_head),
    };
    Ok(FinetuneOutcome { report, head })
}

/// Decode BIO tags for one tokenized sentence with a trained CRF head.
pub fn predict_tags(
    params: &EncoderParams,
    crf: &CrfLayer,
    vocab: &Vocab,
    tokens: &[String],
) -> Result<Vec<String>> {
    let n = tokens.len().min(params.config.max_len);
    let ids: Vec<usize> = tokens[..n]
        .iter()
        .map(|t| vocab.id(&t.to_lowercase()))
        .collect();
    let pass = params.forward(&ids)?;
    let emissions = crf.emissions(&pass.hidden, n);
    let (path, _) = crf.viterbi(&emissions);
    Ok(path.iter().map(|&y| BIO_TAGS[y].to_string()).collect())
}

fn evaluate(
    params: &EncoderParams,
    vocab: &Vocab,
    test: &TaskData,
    cls_head: &ClsHead,
    crf_head: &CrfLayer,
) -> Result<Report> {
    let kind = test.kind();
    let max_len = params.config.max_len;
    match kind {
        TaskKind::Extraction => {
            let TaskData::Extraction(rows) = test else {
                unreachable!()
            };
            let mut gold: Vec<Vec<String>> = Vec::new();
            let mut pred: Vec<Vec<String>> = Vec::new();
            let mut correct = 0usize;
            let mut total = 0usize;
            for r in rows {
                let n = r.tokens.len().min(max_len);
                if n == 0 {
                    continue;
                }
                let ids: Vec<usize> = r.tokens[..n]
                    .iter()
                    .map(|t| vocab.id(&t.to_lowercase()))
                    .collect();
                let pass = params.forward(&ids)?;
                let emissions = crf_head.emissions(&pass.hidden, n);
                let (path, _) = crf_head.viterbi(&emissions);
                let tags: Vec<String> = path.iter().map(|&y| BIO_TAGS[y].to_string()).collect();
                for (g, p) in r.tags[..n].iter().zip(&tags) {
                    total += 1;
                    if g == p {
                        correct += 1;
                    }
                }
                gold.push(r.tags[..n].to_vec());
                pred.push(tags);
            }
            let (per_kind, macro_avg) = metrics::span_f1(&gold, &pred);
            Ok(Report {
                task: kind.to_string(),
                macro_f1: macro_avg,
                accuracy: if total == 0 {
                    0.0
                } else {
                    correct as f64 / total as f64
                },
                per_class: per_kind,
            })
        }
        _ => {
            let prepared = prepare(test, vocab, max_len)?;
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for ex in &prepared {
                let PreparedExample::Labeled { ids, label } = ex else {
                    unreachable!()
                };
                let probs = sentence_classify(params, cls_head, ids)?;
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                gold.push(*label);
                pred.push(argmax);
            }
            Ok(report_from_labels(kind, &gold, &pred))
        }
    }
}

/// Metrics report from gold/predicted label vectors.
pub fn report_from_labels(kind: TaskKind, gold: &[usize], pred: &[usize]) -> Report {
    let per_class = metrics::per_class_f1(gold, pred)
        .into_iter()
        .map(|(c, f)| (c.to_string(), f))
        .collect();
    Report {
        task: kind.to_string(),
        macro_f1: metrics::macro_f1(gold, pred),
        accuracy: metrics::accuracy(gold, pred),
        per_class,
    }
}

/// Metrics report from gold/predicted BIO tag sequences.
pub fn report_from_tags(gold: &[Vec<String>], pred: &[Vec<String>]) -> Report {
    let (per_kind, macro_avg) = metrics::span_f1(gold, pred);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        for (a, b) in g.iter().zip(p) {
            total += 1;
            if a == b {
                correct += 1;
            }
        }
    }
    Report {
        task: TaskKind::Extraction.to_string(),
        macro_f1: macro_avg,
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        per_class: per_kind,
    }
}
