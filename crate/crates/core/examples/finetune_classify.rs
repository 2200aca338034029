//! Fine-tune a pretrained encoder on imbalanced sentence classification
//! and compare it with a random-init baseline on the same data.
//!
//! ```bash
//! cargo run --release -p sentigraph --example finetune_classify
//! ```

use sentigraph::downstream::finetune;
use sentigraph::encoder::EncoderParams;
use sentigraph::evalkit::benchmark::BenchmarkSetup;
use sentigraph::evalkit::synthetic::SyntheticConfig;
use sentigraph::evalkit::Variant;

fn main() -> sentigraph::Result<()> {
    let mut setup = BenchmarkSetup::build(SyntheticConfig {
        n_unlabeled: 1500,
        n_train: 600,
        n_valid: 100,
        n_test: 300,
        ..Default::default()
    })?;
    setup.pretrain_cfg.total_steps = 300;
    println!(
        "benchmark: {} unlabeled lines, {} train sentences at ~10:1 imbalance",
        setup.synthetic.n_unlabeled, setup.synthetic.n_train
    );

    let ctx = setup.context();
    let examples = {
        use sentigraph::objectives::ExampleBuilder;
        ExampleBuilder {
            corpus: &setup.corpus,
            graph: &setup.mined.graph,
            freq: &setup.mined.freq,
            lexicon: &setup.lexicon,
            config: setup.pretrain_cfg.objectives,
            max_len: setup.encoder_cfg.max_len,
        }
        .build(setup.pretrain_cfg.seed)
    };

    println!(
        "pretraining the full variant ({} steps)...",
        setup.pretrain_cfg.total_steps
    );
    let pretrained = ctx.pretrain_variant(Variant::Full, &examples)?;

    let mut from_pretrained = pretrained.clone();
    let report = finetune(
        &mut from_pretrained,
        &setup.corpus.vocab,
        &setup.splits,
        &setup.finetune_cfg,
    )?
    .report;
    println!(
        "\npretrained init: {}",
        serde_json::to_string_pretty(&report).unwrap()
    );

    let mut from_random = EncoderParams::init(setup.encoder_cfg)?;
    let report = finetune(
        &mut from_random,
        &setup.corpus.vocab,
        &setup.splits,
        &setup.finetune_cfg,
    )?
    .report;
    println!(
        "\nrandom init:     {}",
        serde_json::to_string_pretty(&report).unwrap()
    );
    Ok(())
}
