//! Train skip-gram embeddings on a synthetic corpus, cluster them with
//! DBSCAN over cosine distance, and show the recycling pass splitting an
//! oversized cluster.
//!
//! ```bash
//! cargo run -p sentigraph --example cluster_synonyms
//! ```

use sentigraph::corpus::corpus_from_lines;
use sentigraph::evalkit::synthetic::{generate_corpus, SyntheticConfig};
use sentigraph::similarity::{
    cluster_words, recycle_clusters, train_embeddings, RecycleConfig, Word2VecConfig,
};
use sentigraph::terms::TermKind;

fn main() -> sentigraph::Result<()> {
    let synthetic = SyntheticConfig {
        n_unlabeled: 1500,
        ..Default::default()
    };
    let corpus = corpus_from_lines(generate_corpus(&synthetic));
    println!(
        "corpus: {} documents, vocab {}",
        corpus.documents.len(),
        corpus.vocab.len()
    );

    let table = train_embeddings(
        &corpus,
        &Word2VecConfig {
            d_emb: 24,
            epochs: 6,
            ..Default::default()
        },
    )?;
    println!("trained embeddings, epoch losses: {:?}", table.epoch_losses);

    let words: Vec<String> = sentigraph::evalkit::synthetic::POSITIVE_WORDS
        .iter()
        .chain(sentigraph::evalkit::synthetic::NEGATIVE_WORDS.iter())
        .map(|w| w.to_string())
        .collect();
    let vectors: Vec<Vec<f64>> = words
        .iter()
        .map(|w| table.vector(corpus.vocab.id(w)).to_vec())
        .collect();

    let (clusters, noise) = cluster_words(&words, &vectors, TermKind::Sentiment, 0.35, 2);
    println!("\nDBSCAN at eps 0.35:");
    for c in &clusters {
        println!(
            "  cluster of {}: {:?}",
            c.members.len(),
            &c.members[..c.members.len().min(8)]
        );
    }
    println!("  noise: {:?}", noise);

    // Force the recycling path: cap clusters at 20 members.
    let lookup = |w: &str| {
        words
            .iter()
            .position(|x| x == w)
            .map(|i| vectors[i].clone())
    };
    let recycled = recycle_clusters(
        clusters,
        &lookup,
        &RecycleConfig {
            max_size: 20,
            ..Default::default()
        },
    );
    println!("\nafter recycling with max_size 20:");
    for c in &recycled {
        println!(
            "  cluster of {}{}: {:?}",
            c.members.len(),
            if c.oversize {
                " (flagged oversize)"
            } else {
                ""
            },
            &c.members[..c.members.len().min(8)]
        );
    }
    Ok(())
}
