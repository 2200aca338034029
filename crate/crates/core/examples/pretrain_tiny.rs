//! Joint pretraining on a small synthetic benchmark: generate the
//! corpus, mine the graph, build examples, train for a few hundred
//! steps, and print the loss trajectory.
//!
//! ```bash
//! cargo run --release -p sentigraph --example pretrain_tiny
//! ```

use sentigraph::corpus::{build_frequency_table, corpus_from_lines};
use sentigraph::encoder::{EncoderConfig, EncoderParams};
use sentigraph::evalkit::benchmark::benchmark_mining_config;
use sentigraph::evalkit::synthetic::{benchmark_lexicon, generate_corpus, SyntheticConfig};
use sentigraph::objectives::{ExampleBuilder, ObjectiveConfig};
use sentigraph::pipeline::mine;
use sentigraph::pretrain::{run_pretrain, PretrainConfig};

fn main() -> sentigraph::Result<()> {
    let synthetic = SyntheticConfig {
        n_unlabeled: 1200,
        ..Default::default()
    };
    let corpus = corpus_from_lines(generate_corpus(&synthetic));
    let lexicon = benchmark_lexicon();
    let mined = mine(&corpus, &lexicon, &benchmark_mining_config())?;
    let freq = build_frequency_table(&corpus);
    println!("graph: {:?}", mined.graph.stats());

    let builder = ExampleBuilder {
        corpus: &corpus,
        graph: &mined.graph,
        freq: &freq,
        lexicon: &lexicon,
        config: ObjectiveConfig::default(),
        max_len: 40,
    };
    let examples = builder.build(11);
    println!("{} pretraining examples", examples.len());

    let mut params = EncoderParams::init(EncoderConfig {
        vocab_size: corpus.vocab.len(),
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        max_len: 40,
        seed: 17,
    })?;
    let cfg = PretrainConfig {
        batch_size: 16,
        lr: 2e-3,
        warmup_ratio: 0.1,
        total_steps: 200,
        seed: 19,
        ..Default::default()
    };
    println!("step     L_sw     L_ap     L_ns        L");
    let rows = run_pretrain(&mut params, &examples, &cfg, None, |_, _, row| {
        if row.step % 20 == 0 || row.step == 1 {
            println!(
                "{:4} {:8.3} {:8.3} {:8.3} {:8.3}",
                row.step, row.sw, row.ap, row.ns, row.total
            );
        }
        Ok(())
    })?;
    let first = rows.first().unwrap().total;
    let last = rows.last().unwrap().total;
    println!(
        "joint loss {:.3} -> {:.3} over {} steps",
        first,
        last,
        rows.len()
    );
    Ok(())
}
