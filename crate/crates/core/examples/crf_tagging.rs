//! Aspect/sentiment term extraction with the CRF head: train on
//! synthetic BIO-tagged sentences, then decode a few with Viterbi.
//!
//! ```bash
//! cargo run --release -p sentigraph --example crf_tagging
//! ```

use sentigraph::corpus::corpus_from_lines;
use sentigraph::downstream::{finetune, predict_tags, FinetuneConfig, Splits, TaskData, TaskHead};
use sentigraph::encoder::{EncoderConfig, EncoderParams};
use sentigraph::evalkit::synthetic::{generate_corpus, generate_extraction, SyntheticConfig};

fn main() -> sentigraph::Result<()> {
    let synthetic = SyntheticConfig {
        n_unlabeled: 600,
        ..Default::default()
    };
    // The corpus only provides the vocabulary here.
    let corpus = corpus_from_lines(generate_corpus(&synthetic));

    let test = generate_extraction(&synthetic, 120, 2);
    let splits = Splits {
        train: generate_extraction(&synthetic, 400, 1),
        valid: generate_extraction(&synthetic, 40, 3),
        test: test.clone(),
    };

    let mut params = EncoderParams::init(EncoderConfig {
        vocab_size: corpus.vocab.len(),
        d_model: 32,
        n_layers: 1,
        n_heads: 2,
        max_len: 16,
        seed: 5,
    })?;
    let cfg = FinetuneConfig {
        epochs: 6,
        batch_size: 16,
        lr: 2e-3,
        seed: 3,
        freeze_encoder: false,
    };
    let outcome = finetune(&mut params, &corpus.vocab, &splits, &cfg)?;
    println!(
        "extraction report: {}",
        serde_json::to_string_pretty(&outcome.report).unwrap()
    );

    let TaskHead::Crf(crf) = &outcome.head else {
        unreachable!("extraction fine-tuning returns a CRF head")
    };
    let TaskData::Extraction(rows) = &test else {
        unreachable!()
    };
    println!("\nViterbi decodes:");
    for row in rows.iter().take(4) {
        let predicted = predict_tags(&params, crf, &corpus.vocab, &row.tokens)?;
        println!("  tokens:    {:?}", row.tokens);
        println!("  gold:      {:?}", row.tags);
        println!("  predicted: {:?}", predicted);
    }
    Ok(())
}
