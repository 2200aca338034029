//! Synonym discovery: distributional embeddings, density clustering with
//! a recycling pass for oversized clusters, and a manual override file.

pub mod dbscan;
pub mod word2vec;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::terms::TermKind;
pub use dbscan::{cosine_distance, dbscan, dbscan_reference, DbscanResult};
pub use word2vec::{cosine, train_embeddings, EmbeddingTable, Word2VecConfig};

/// A set of coarse-grained synonyms of one kind. `oversize` marks a
/// cluster the recycling pass could not split below `max_size`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SynonymCluster {
    pub kind: TermKind,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversize: bool,
}

impl SynonymCluster {
    pub fn new(kind: TermKind, mut members: Vec<String>) -> SynonymCluster {
        members.sort();
        members.dedup();
        SynonymCluster {
            kind,
            members,
            oversize: false,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.members
            .binary_search_by(|m| m.as_str().cmp(word))
            .is_ok()
    }
}

/// Check size and same-kind-disjointness invariants.
pub fn validate_clusters(clusters: &[SynonymCluster]) -> Result<()> {
    let mut seen: BTreeSet<(TermKind, &str)> = BTreeSet::new();
    for c in clusters {
        if c.members.len() < 2 {
            return Err(Error::Invalid(format!(
                "cluster {:?} has fewer than 2 members",
                c.members
            )));
        }
        for m in &c.members {
            if !seen.insert((c.kind, m)) {
                return Err(Error::Invalid(format!(
                    "word {:?} appears in two {} clusters",
                    m, c.kind
                )));
            }
        }
    }
    Ok(())
}

/// Cluster the words of one kind by DBSCAN over their embedding vectors.
/// Returns the clusters plus the words left as noise.
pub fn cluster_words(
    words: &[String],
    vectors: &[Vec<f64>],
    kind: TermKind,
    eps: f64,
    min_pts: usize,
) -> (Vec<SynonymCluster>, Vec<String>) {
    let res = dbscan(vectors, eps, min_pts);
    let clusters = res
        .clusters
        .iter()
        .map(|idx| SynonymCluster::new(kind, idx.iter().map(|&i| words[i].clone()).collect()))
        .collect();
    let noise = res.noise.iter().map(|&i| words[i].clone()).collect();
    (clusters, noise)
}

/// Grid for the recycling pass.
#[derive(Debug, Clone)]
pub struct RecycleConfig {
    pub max_size: usize,
    pub eps_grid: Vec<f64>,
    pub min_pts_grid: Vec<usize>,
}

impl Default for RecycleConfig {
    fn default() -> Self {
        RecycleConfig {
            max_size: 30,
            eps_grid: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
            min_pts_grid: vec![2, 3, 5],
        }
    }
}

fn mean_intra_similarity(groups: &[Vec<usize>], vectors: &[Vec<f64>]) -> f64 {
    if groups.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for g in groups {
        let mut sim_sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..g.len() {
            for j in (i + 1)..g.len() {
                sim_sum += cosine(&vectors[g[i]], &vectors[g[j]]);
                pairs += 1;
            }
        }
        total += if pairs == 0 {
            1.0
        } else {
            sim_sum / pairs as f64
        };
    }
    total / groups.len() as f64
}

/// Re-cluster every cluster larger than `max_size` by grid search,
/// keeping the parameterization with the highest mean intra-cluster
/// cosine similarity among those whose sub-clusters all fit. If only
/// splits with oversized parts exist, the best of those is taken and the
/// oversized parts are recycled again. Irreducible clusters are kept
/// with the `oversize` flag set.
pub fn recycle_clusters(
    clusters: Vec<SynonymCluster>,
    lookup: &dyn Fn(&str) -> Option<Vec<f64>>,
    cfg: &RecycleConfig,
) -> Vec<SynonymCluster> {
    let mut done = Vec::new();
    let mut work: Vec<SynonymCluster> = clusters;
    while let Some(cluster) = work.pop() {
        if cluster.members.len() <= cfg.max_size {
            done.push(cluster);
            continue;
        }
        let vectors: Vec<Vec<f64>> = cluster
            .members
            .iter()
            .map(|w| lookup(w).unwrap_or_default())
            .collect();

        // A proper split makes progress: several parts, or one strictly
        // smaller part (the rest became noise and drops out).
        let mut best_fitting: Option<(f64, Vec<Vec<usize>>)> = None;
        let mut best_any: Option<(f64, Vec<Vec<usize>>)> = None;
        for &eps in &cfg.eps_grid {
            for &min_pts in &cfg.min_pts_grid {
                let res = dbscan(&vectors, eps, min_pts);
                let proper = res.clusters.len() >= 2
                    || (res.clusters.len() == 1 && res.clusters[0].len() < cluster.members.len());
                if !proper {
                    continue;
                }
                let score = mean_intra_similarity(&res.clusters, &vectors);
                let fits = res.clusters.iter().all(|c| c.len() <= cfg.max_size);
                if fits && best_fitting.as_ref().map_or(true, |(s, _)| score > *s) {
                    best_fitting = Some((score, res.clusters.clone()));
                }
                if best_any.as_ref().map_or(true, |(s, _)| score > *s) {
                    best_any = Some((score, res.clusters));
                }
            }
        }

        match best_fitting.or(best_any) {
            Some((_, groups)) => {
                for g in groups {
                    if g.len() < 2 {
                        continue;
                    }
                    let members = g.iter().map(|&i| cluster.members[i].clone()).collect();
                    work.push(SynonymCluster::new(cluster.kind, members));
                }
            }
            None => {
                let mut flagged = cluster;
                flagged.oversize = true;
                done.push(flagged);
            }
        }
    }
    // Canonical order regardless of the work-stack traversal.
    done.sort_by(|a, b| (a.kind, &a.members).cmp(&(b.kind, &b.members)));
    done
}

/// Apply a manual override file to the cluster list. Line format, one
/// directive per line (`#` comments allowed), applied in order against
/// the current list:
///
/// ```text
/// add cluster_<i> <word>
/// remove cluster_<i> <word>
/// merge cluster_<i> cluster_<j>
/// ```
///
/// `cluster_<i>` indexes the current list; a merge removes cluster j and
/// renumbers the tail. Words may be double-quoted. Clusters that shrink
/// below 2 members are dropped at the end.
pub fn apply_overrides(
    mut clusters: Vec<SynonymCluster>,
    text: &str,
    path: &Path,
    known_words: &BTreeSet<String>,
) -> Result<Vec<SynonymCluster>> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let op = parts.next().unwrap();
        let args: Vec<&str> = parts.collect();
        let lineno = lineno + 1;

        let parse_cluster = |token: &str| -> Result<usize> {
            let idx: usize = token
                .strip_prefix("cluster_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, lineno, format!("bad cluster id {:?}", token)))?;
            if idx >= clusters.len() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown cluster cluster_{} (have {})", idx, clusters.len()),
                ));
            }
            Ok(idx)
        };
        let parse_word = |token: &str| token.trim_matches('"').to_lowercase();

        match (op, args.as_slice()) {
            ("add", [cluster, word]) => {
                let idx = parse_cluster(cluster)?;
                let word = parse_word(word);
                if !known_words.contains(&word) {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unknown word {:?}", word),
                    ));
                }
                if !clusters[idx].contains(&word) {
                    clusters[idx].members.push(word);
                    clusters[idx].members.sort();
                }
            }
            ("remove", [cluster, word]) => {
                let idx = parse_cluster(cluster)?;
                let word = parse_word(word);
                let before = clusters[idx].members.len();
                clusters[idx].members.retain(|m| *m != word);
                if clusters[idx].members.len() == before {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("word {:?} not in cluster_{}", word, idx),
                    ));
                }
            }
            ("merge", [a, b]) => {
                let (ia, ib) = (parse_cluster(a)?, parse_cluster(b)?);
                if ia == ib {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "cannot merge a cluster with itself",
                    ));
                }
                if clusters[ia].kind != clusters[ib].kind {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "cannot merge clusters of different kinds",
                    ));
                }
                let absorbed = clusters.remove(ib);
                let target = if ib < ia { ia - 1 } else { ia };
                clusters[target].members.extend(absorbed.members);
                clusters[target].members.sort();
                clusters[target].members.dedup();
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown directive {:?} (want add|remove|merge)", line),
                ))
            }
        }
    }
    clusters.retain(|c| c.members.len() >= 2);
    validate_clusters(&clusters)?;
    Ok(clusters)
}

pub fn clusters_to_json(clusters: &[SynonymCluster]) -> Result<String> {
    Ok(serde_json::to_string_pretty(clusters)?)
}

pub fn clusters_from_json(text: &str) -> Result<Vec<SynonymCluster>> {
    Ok(serde_json::from_str(text)?)
}

const EMBEDDING_MAGIC: &[u8; 4] = b"SGE1";

impl EmbeddingTable {
    /// Binary layout: magic, vocab_size u64, dim u64, row-major f64 LE
    /// matrix, fnv1a64 checksum of everything before it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&(self.vocab_size() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for x in &self.vectors {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let checksum = fnv1a64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        if buf.len() < 28 || &buf[0..4] != EMBEDDING_MAGIC {
            return Err(Error::Checkpoint("bad embedding file header".into()));
        }
        let body = &buf[..buf.len() - 8];
        let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
        if fnv1a64(body) != stored {
            return Err(Error::Checkpoint("embedding file checksum mismatch".into()));
        }
        let vocab_size = u64::from_le_bytes(buf[4..12].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
        let expected = 20 + vocab_size * dim * 8;
        if body.len() != expected {
            return Err(Error::Checkpoint("embedding file truncated".into()));
        }
        let vectors = buf[20..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(EmbeddingTable {
            dim,
            vectors,
            epoch_losses: Vec::new(),
        })
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn words(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recycle_identity_when_small() {
        let clusters = vec![SynonymCluster::new(
            TermKind::Sentiment,
            words(&["good", "great"]),
        )];
        let lookup = |_: &str| Some(vec![1.0, 0.0]);
        let out = recycle_clusters(clusters.clone(), &lookup, &RecycleConfig::default());
        assert_eq!(out, clusters);
    }

    #[test]
    fn recycle_splits_two_blobs() {
        // 8 words in two well-separated direction blobs, max_size between
        // blob size and total.
        let mut rng = Rng::seed_from(4);
        let mut names = Vec::new();
        let mut table: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for i in 0..8 {
            let name = format!("w{}", i);
            let base = if i < 4 { [1.0, 0.0] } else { [0.0, 1.0] };
            let vec = vec![
                base[0] + 0.01 * rng.next_gaussian(),
                base[1] + 0.01 * rng.next_gaussian(),
            ];
            table.insert(name.clone(), vec);
            names.push(name);
        }
        let clusters = vec![SynonymCluster::new(TermKind::Aspect, names.clone())];
        let cfg = RecycleConfig {
            max_size: 5,
            ..Default::default()
        };
        let lookup = |w: &str| table.get(w).cloned();
        let out = recycle_clusters(clusters, &lookup, &cfg);
        assert_eq!(out.len(), 2);
        let mut blob_a: Vec<String> = names[0..4].to_vec();
        blob_a.sort();
        assert!(out.iter().any(|c| c.members == blob_a));
        assert!(out.iter().all(|c| !c.oversize));
    }

    #[test]
    fn recycle_flags_irreducible() {
        // Identical vectors cannot be split by any grid point.
        let names: Vec<String> = (0..6).map(|i| format!("w{}", i)).collect();
        let clusters = vec![SynonymCluster::new(TermKind::Aspect, names)];
        let cfg = RecycleConfig {
            max_size: 3,
            ..Default::default()
        };
        let lookup = |_: &str| Some(vec![1.0, 0.0]);
        let out = recycle_clusters(clusters, &lookup, &cfg);
        assert_eq!(out.len(), 1);
        assert!(out[0].oversize);
        assert_eq!(out[0].members.len(), 6);
    }

    fn known(wordlist: &[&str]) -> BTreeSet<String> {
        wordlist.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_empty_file_unchanged() {
        let clusters = vec![SynonymCluster::new(
            TermKind::Sentiment,
            words(&["good", "great"]),
        )];
        let out = apply_overrides(
            clusters.clone(),
            "",
            Path::new("o.txt"),
            &known(&["good", "great"]),
        )
        .unwrap();
        assert_eq!(out, clusters);
    }

    #[test]
    fn overrides_remove_word() {
        let clusters = vec![SynonymCluster::new(
            TermKind::Sentiment,
            words(&["bad", "cheap", "poor"]),
        )];
        let out = apply_overrides(
            clusters,
            "remove cluster_0 \"cheap\"\n",
            Path::new("o.txt"),
            &known(&["bad", "cheap", "poor"]),
        )
        .unwrap();
        assert!(!out[0].contains("cheap"));
        assert_eq!(out[0].members.len(), 2);
    }

    #[test]
    fn overrides_merge_union() {
        let clusters = vec![
            SynonymCluster::new(TermKind::Sentiment, words(&["good", "great"])),
            SynonymCluster::new(TermKind::Sentiment, words(&["fine", "nice"])),
        ];
        let out = apply_overrides(
            clusters,
            "merge cluster_0 cluster_1\n",
            Path::new("o.txt"),
            &known(&["good", "great", "fine", "nice"]),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].members, words(&["fine", "good", "great", "nice"]));
    }

    #[test]
    fn overrides_unknown_word_rejected_with_line() {
        let clusters = vec![SynonymCluster::new(
            TermKind::Sentiment,
            words(&["good", "great"]),
        )];
        let err = apply_overrides(
            clusters,
            "# comment\nadd cluster_0 zzz\n",
            Path::new("o.txt"),
            &known(&["good", "great"]),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("o.txt:2"), "got {}", msg);
    }

    #[test]
    fn clusters_json_round_trip() {
        let clusters = vec![SynonymCluster::new(
            TermKind::Aspect,
            words(&["color", "colour"]),
        )];
        let json = clusters_to_json(&clusters).unwrap();
        assert_eq!(clusters_from_json(&json).unwrap(), clusters);
    }

    #[test]
    fn embedding_file_round_trip() {
        let table = EmbeddingTable {
            dim: 3,
            vectors: vec![0.1, -0.2, 0.3, 1.5, 2.5, -3.5],
            epoch_losses: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        table.save(&path).unwrap();
        let back = EmbeddingTable::load(&path).unwrap();
        assert_eq!(back.dim, 3);
        assert_eq!(back.vectors, table.vectors);
    }
}
