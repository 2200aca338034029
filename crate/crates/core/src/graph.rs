//! The heterogeneous semantic graph: aspect and sentiment word nodes,
//! similarity edges between same-kind nodes, pair edges across kinds,
//! and depth-bounded similar-node sampling.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::FrequencyTable;
use crate::error::{Error, Result};
use crate::similarity::SynonymCluster;
use crate::terms::TermKind;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Similarity,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Node {
    pub id: usize,
    pub word: String,
    pub kind: TermKind,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct SemanticGraph {
    pub nodes: Vec<Node>,
    /// Canonical storage: u < v, sorted, deduplicated.
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, EdgeKind)>>,
    #[serde(skip)]
    word_index: BTreeMap<(TermKind, String), usize>,
}

/// How the sampled layers combine: `Union` collects every node reachable
/// within K similarity hops (the evident intent); `AsWritten` intersects
/// the layers, reproducing the literal procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Union,
    AsWritten,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledNeighborhood {
    pub center: usize,
    pub members: Vec<usize>,
}

impl SemanticGraph {
    pub fn node_id(&self, kind: TermKind, word: &str) -> Option<usize> {
        self.word_index.get(&(kind, word.to_string())).copied()
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes_of_kind(&self, kind: TermKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn neighbors(&self, id: usize, kind: EdgeKind) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[id]
            .iter()
            .filter(move |(_, k)| *k == kind)
            .map(|(n, _)| *n)
    }

    pub fn has_edge(&self, a: usize, b: usize, kind: EdgeKind) -> bool {
        self.adjacency[a].iter().any(|&(n, k)| n == b && k == kind)
    }

    fn rebuild_indexes(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            self.adjacency[e.u].push((e.v, e.kind));
            self.adjacency[e.v].push((e.u, e.kind));
        }
        for adj in self.adjacency.iter_mut() {
            adj.sort_unstable();
        }
        self.word_index = self
            .nodes
            .iter()
            .map(|n| ((n.kind, n.word.clone()), n.id))
            .collect();
    }

    /// Kind discipline: similarity edges connect same-kind nodes, pair
    /// edges connect aspect to sentiment, no self loops, u < v.
    pub fn check_invariants(&self) -> Result<()> {
        for e in &self.edges {
            if e.u >= e.v {
                return Err(Error::Invalid(format!("edge not canonical: {:?}", e)));
            }
            let (ku, kv) = (self.nodes[e.u].kind, self.nodes[e.v].kind);
            match e.kind {
                EdgeKind::Similarity if ku != kv => {
                    return Err(Error::Invalid(format!(
                        "similarity edge across kinds: {:?}",
                        e
                    )))
                }
                EdgeKind::Pair if ku == kv => {
                    return Err(Error::Invalid(format!(
                        "pair edge within one kind: {:?}",
                        e
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SemanticGraph> {
        let mut g: SemanticGraph = serde_json::from_str(text)?;
        g.rebuild_indexes();
        g.check_invariants()?;
        Ok(g)
    }

    pub fn stats(&self) -> GraphStats {
        let mut s = GraphStats::default();
        for n in &self.nodes {
            match n.kind {
                TermKind::Aspect => s.aspect_nodes += 1,
                TermKind::Sentiment => s.sentiment_nodes += 1,
            }
        }
        for e in &self.edges {
            match e.kind {
                EdgeKind::Similarity => s.similarity_edges += 1,
                EdgeKind::Pair => s.pair_edges += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub aspect_nodes: usize,
    pub sentiment_nodes: usize,
    pub similarity_edges: usize,
    pub pair_edges: usize,
}

/// Lowercase and strip one plural/inflection suffix; two words are
/// "literally similar" when their stems agree.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    for suffix in ["ing", "est", "ed", "es", "er", "ly", "s"] {
        if let Some(base) = w.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    w
}

/// Build the graph from synonym clusters plus extracted pair counts.
/// Similarity edges join every intra-cluster word pair and every
/// same-kind pair with a shared stem; pair edges join (aspect word,
/// sentiment word) combinations observed at least `min_pair_count` times.
pub fn build_graph(
    clusters: &[SynonymCluster],
    pair_counts: &BTreeMap<(String, String), u64>,
    min_pair_count: u64,
) -> SemanticGraph {
    // Collect the node set first: cluster members plus the endpoints of
    // pair edges that pass the threshold.
    let mut node_words: BTreeSet<(TermKind, String)> = BTreeSet::new();
    for c in clusters {
        for m in &c.members {
            node_words.insert((c.kind, m.clone()));
        }
    }
    let passing: Vec<(&String, &String)> = pair_counts
        .iter()
        .filter(|(_, &count)| count >= min_pair_count)
        .map(|((a, s), _)| (a, s))
        .collect();
    for (aspect, sentiment) in &passing {
        node_words.insert((TermKind::Aspect, (*aspect).clone()));
        node_words.insert((TermKind::Sentiment, (*sentiment).clone()));
    }

    let nodes: Vec<Node> = node_words
        .iter()
        .enumerate()
        .map(|(id, (kind, word))| Node {
            id,
            word: word.clone(),
            kind: *kind,
        })
        .collect();
    let index: BTreeMap<(TermKind, String), usize> = nodes
        .iter()
        .map(|n| ((n.kind, n.word.clone()), n.id))
        .collect();

    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    let mut add = |a: usize, b: usize, kind: EdgeKind| {
        if a != b {
            edges.insert(Edge {
                u: a.min(b),
                v: a.max(b),
                kind,
            });
        }
    };

    for c in clusters {
        for i in 0..c.members.len() {
            for j in (i + 1)..c.members.len() {
                let a = index[&(c.kind, c.members[i].clone())];
                let b = index[&(c.kind, c.members[j].clone())];
                add(a, b, EdgeKind::Similarity);
            }
        }
    }

    // Literal similarity between same-kind nodes sharing a stem.
    for kind in [TermKind::Aspect, TermKind::Sentiment] {
        let of_kind: Vec<&Node> = nodes.iter().filter(|n| n.kind == kind).collect();
        for i in 0..of_kind.len() {
            for j in (i + 1)..of_kind.len() {
                if stem(&of_kind[i].word) == stem(&of_kind[j].word) {
                    add(of_kind[i].id, of_kind[j].id, EdgeKind::Similarity);
                }
            }
        }
    }

    for (aspect, sentiment) in passing {
        let a = index[&(TermKind::Aspect, aspect.clone())];
        let s = index[&(TermKind::Sentiment, sentiment.clone())];
        add(a, s, EdgeKind::Pair);
    }

    let mut graph = SemanticGraph {
        nodes,
        edges: edges.into_iter().collect(),
        adjacency: Vec::new(),
        word_index: BTreeMap::new(),
    };
    graph.rebuild_indexes();
    graph
}

/// Similar-node sampling: BFS layers S_0..S_K over similarity edges from
/// `center`, combined per `mode`, sorted by corpus frequency ascending
/// (ties by node id), truncated to the top `max_len` nodes.
pub fn sample_similar_nodes(
    graph: &SemanticGraph,
    center: usize,
    max_depth: usize,
    max_len: usize,
    freq: &FrequencyTable,
    mode: SamplingMode,
) -> Result<SampledNeighborhood> {
    if center >= graph.nodes.len() {
        return Err(Error::Invalid(format!("node {} not in graph", center)));
    }
    if max_depth == 0 || max_len == 0 {
        return Err(Error::Invalid("max_depth and max_len must be >= 1".into()));
    }

    let mut layers: Vec<BTreeSet<usize>> = Vec::with_capacity(max_depth + 1);
    layers.push(BTreeSet::from([center]));
    for k in 1..=max_depth {
        let mut layer = BTreeSet::new();
        for &node in &layers[k - 1] {
            for next in graph.neighbors(node, EdgeKind::Similarity) {
                layer.insert(next);
            }
        }
        layers.push(layer);
    }

    let combined: BTreeSet<usize> = match mode {
        SamplingMode::Union => layers.iter().flatten().copied().collect(),
        SamplingMode::AsWritten => {
            let mut it = layers.iter();
            let first = it.next().unwrap().clone();
            it.fold(first, |acc, layer| {
                acc.intersection(layer).copied().collect()
            })
        }
    };

    let mut candidates: Vec<usize> = combined.into_iter().collect();
    candidates.sort_by_key(|&id| (freq.phrase_count(&graph.nodes[id].word), id));
    candidates.truncate(max_len);
    Ok(SampledNeighborhood {
        center,
        members: candidates,
    })
}
