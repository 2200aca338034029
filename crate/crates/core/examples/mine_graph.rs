//! Mine a semantic graph from a handful of review lines: tag terms,
//! match nearest aspect-sentiment pairs, cluster synonyms, build the
//! graph, and print what came out.
//!
//! ```bash
//! cargo run -p sentigraph --example mine_graph
//! ```

use sentigraph::corpus::corpus_from_lines;
use sentigraph::pipeline::{mine, MiningConfig};
use sentigraph::similarity::Word2VecConfig;
use sentigraph::terms::{Lexicon, TermKind};

fn main() -> sentigraph::Result<()> {
    let reviews = [
        "The cloth is overall good, with great color, but bad material.",
        "lovely color and great finish , totally recommended .",
        "bad quality , poor material . want a refund .",
        "the price is great and the quality is lovely .",
        "poor color today . the finish is bad .",
        "great material and lovely price , would buy again .",
        "the color is lovely and the material is great .",
        "bad price . poor finish overall .",
    ];
    let corpus = corpus_from_lines(reviews.iter().map(|s| s.to_string()));

    let mut lexicon = Lexicon::new();
    for aspect in ["color", "material", "quality", "finish", "price"] {
        lexicon.insert(aspect, TermKind::Aspect)?;
    }
    for sentiment in ["good", "great", "bad", "lovely", "poor"] {
        lexicon.insert(sentiment, TermKind::Sentiment)?;
    }

    let cfg = MiningConfig {
        word2vec: Word2VecConfig {
            d_emb: 8,
            epochs: 20,
            ..Default::default()
        },
        dbscan_eps: 0.4,
        ..Default::default()
    };
    let mined = mine(&corpus, &lexicon, &cfg)?;

    println!("extracted pairs (aspect <- sentiment):");
    for ((aspect, sentiment), count) in &mined.pair_counts {
        println!("  {:10} <- {:10} x{}", aspect, sentiment, count);
    }
    println!("\nsynonym clusters:");
    for cluster in &mined.clusters {
        println!("  [{}] {:?}", cluster.kind, cluster.members);
    }
    println!("\ngraph: {:?}", mined.graph.stats());
    println!("\ngraph JSON (first lines):");
    for line in mined.graph.to_json()?.lines().take(12) {
        println!("  {}", line);
    }
    Ok(())
}
