//! Evaluation metrics: macro-F1 over class labels, span-level F1 for
//! extraction, accuracy, per-class breakdowns.

use std::collections::{BTreeMap, BTreeSet};

/// Per-class F1 over observed classes (union of gold and predicted).
pub fn per_class_f1(gold: &[usize], pred: &[usize]) -> BTreeMap<usize, f64> {
    assert_eq!(gold.len(), pred.len());
    let classes: BTreeSet<usize> = gold.iter().chain(pred.iter()).copied().collect();
    let mut out = BTreeMap::new();
    for &c in &classes {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(&g, &p)| g == c && p == c)
            .count() as f64;
        let fp = gold
            .iter()
            .zip(pred)
            .filter(|(&g, &p)| g != c && p == c)
            .count() as f64;
        let fn_ = gold
            .iter()
            .zip(pred)
            .filter(|(&g, &p)| g == c && p != c)
            .count() as f64;
        out.insert(c, f1(tp, fp, fn_));
    }
    out
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    2.0 * precision * recall / (precision + recall)
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(gold: &[usize], pred: &[usize]) -> f64 {
    let per_class = per_class_f1(gold, pred);
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.values().sum::<f64>() / per_class.len() as f64
}

pub fn accuracy(gold: &[usize], pred: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64
}

/// Decode `(start, end_inclusive, kind)` spans from BIO tags like
/// `B-aspect`/`I-aspect`/`O`. An `I-` without a matching open span
/// starts one (conventional lenient decoding).
pub fn bio_spans(tags: &[String]) -> Vec<(usize, usize, String)> {
    let mut out: Vec<(usize, usize, String)> = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (prefix, kind) = match tag.split_once('-') {
            Some((p, k)) => (p, k.to_string()),
            None => ("O", String::new()),
        };
        match prefix {
            "B" => {
                if let Some((start, k)) = open.take() {
                    out.push((start, i - 1, k));
                }
                open = Some((i, kind));
            }
            "I" => match &open {
                Some((_, k)) if *k == kind => {}
                _ => {
                    if let Some((start, k)) = open.take() {
                        out.push((start, i - 1, k));
                    }
                    open = Some((i, kind));
                }
            },
            _ => {
                if let Some((start, k)) = open.take() {
                    out.push((start, i - 1, k));
                }
            }
        }
    }
    if let Some((start, k)) = open {
        out.push((start, tags.len() - 1, k));
    }
    out
}

/// Span-level F1 per kind over a corpus of tag sequences; exact span
/// match required. Returns (per-kind F1, macro mean).
pub fn span_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> (BTreeMap<String, f64>, f64) {
    assert_eq!(gold.len(), pred.len());
    let mut tp: BTreeMap<String, f64> = BTreeMap::new();
    let mut fp: BTreeMap<String, f64> = BTreeMap::new();
    let mut fn_: BTreeMap<String, f64> = BTreeMap::new();
    for (g_tags, p_tags) in gold.iter().zip(pred) {
        let g_spans: BTreeSet<_> = bio_spans(g_tags).into_iter().collect();
        let p_spans: BTreeSet<_> = bio_spans(p_tags).into_iter().collect();
        for span in g_spans.intersection(&p_spans) {
            *tp.entry(span.2.clone()).or_insert(0.0) += 1.0;
        }
        for span in p_spans.difference(&g_spans) {
            *fp.entry(span.2.clone()).or_insert(0.0) += 1.0;
        }
        for span in g_spans.difference(&p_spans) {
            *fn_.entry(span.2.clone()).or_insert(0.0) += 1.0;
        }
    }
    let kinds: BTreeSet<String> = tp
        .keys()
        .chain(fp.keys())
        .chain(fn_.keys())
        .cloned()
        .collect();
    let mut per_kind = BTreeMap::new();
    for k in &kinds {
        per_kind.insert(
            k.clone(),
            f1(
                tp.get(k).copied().unwrap_or(0.0),
                fp.get(k).copied().unwrap_or(0.0),
                fn_.get(k).copied().unwrap_or(0.0),
            ),
        );
    }
    let macro_avg = if per_kind.is_empty() {
        0.0
    } else {
        per_kind.values().sum::<f64>() / per_kind.len() as f64
    };
    (per_kind, macro_avg)
}
