//! Similar-node sampling over a toy semantic graph, in both modes: the
//! depth-bounded union (default) and the literal layer intersection.
//!
//! ```bash
//! cargo run -p sentigraph --example sample_neighbors
//! ```

use std::collections::BTreeMap;

use sentigraph::corpus::FrequencyTable;
use sentigraph::graph::{build_graph, sample_similar_nodes, SamplingMode};
use sentigraph::similarity::SynonymCluster;
use sentigraph::terms::TermKind;

fn main() -> sentigraph::Result<()> {
    // Chain of overlapping synonym clusters:
    // great - good - fine - okay, plus an isolated pair nice - lovely.
    let clusters = vec![
        SynonymCluster::new(TermKind::Sentiment, vec!["great".into(), "good".into()]),
        SynonymCluster::new(TermKind::Sentiment, vec!["good".into(), "fine".into()]),
        SynonymCluster::new(TermKind::Sentiment, vec!["fine".into(), "okay".into()]),
        SynonymCluster::new(TermKind::Sentiment, vec!["nice".into(), "lovely".into()]),
    ];
    let graph = build_graph(&clusters, &BTreeMap::new(), 1);
    println!("graph: {:?}", graph.stats());

    let freq = FrequencyTable {
        counts: [
            ("great", 120u64),
            ("good", 300),
            ("fine", 45),
            ("okay", 80),
            ("nice", 200),
            ("lovely", 15),
        ]
        .iter()
        .map(|(w, c)| (w.to_string(), *c))
        .collect(),
    };

    let center = graph.node_id(TermKind::Sentiment, "great").unwrap();
    for depth in 1..=3 {
        let nb = sample_similar_nodes(&graph, center, depth, 10, &freq, SamplingMode::Union)?;
        let words: Vec<&str> = nb
            .members
            .iter()
            .map(|&i| graph.node(i).word.as_str())
            .collect();
        println!("union  K={} -> {:?} (rarest words first)", depth, words);
    }

    // The literal procedure intersects the layers; on a chain that is
    // empty as soon as K exceeds the center's own layer overlap.
    let literal = sample_similar_nodes(&graph, center, 2, 10, &freq, SamplingMode::AsWritten)?;
    println!("as_written K=2 -> {:?}", literal.members);

    let top1 = sample_similar_nodes(&graph, center, 2, 1, &freq, SamplingMode::Union)?;
    println!(
        "union  K=2 L=1 -> {:?} (frequency {} is the minimum)",
        graph.node(top1.members[0]).word,
        freq.count(&graph.node(top1.members[0]).word)
    );
    Ok(())
}
