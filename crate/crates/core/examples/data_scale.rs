//! Data-scale sweep: fine-tune pretrained vs random-init encoders on
//! nested fractions of the training data and emit the CSV rows.
//!
//! ```bash
//! cargo run --release -p sentigraph --example data_scale
//! ```

use sentigraph::downstream::TaskKind;
use sentigraph::evalkit::benchmark::BenchmarkSetup;
use sentigraph::evalkit::synthetic::SyntheticConfig;
use sentigraph::evalkit::{aggregate, rows_to_csv, ExperimentSpec, Variant};

fn main() -> sentigraph::Result<()> {
    // Smaller than the acceptance benchmark so the sweep stays quick.
    let mut setup = BenchmarkSetup::build(SyntheticConfig {
        n_unlabeled: 2000,
        n_train: 800,
        n_valid: 100,
        n_test: 300,
        ..Default::default()
    })?;
    setup.pretrain_cfg.total_steps = 300;
    setup.finetune_cfg.epochs = 6;
    let ctx = setup.context();

    let spec = ExperimentSpec {
        variants: vec![Variant::NoneInit, Variant::Full],
        task: TaskKind::SentenceCls,
        fractions: vec![0.1, 0.25, 0.5, 1.0],
        seeds: vec![1, 2, 3],
    };
    println!(
        "running {} cells (2 variants x 4 fractions x 3 seeds)...",
        spec.variants.len() * spec.fractions.len() * spec.seeds.len()
    );
    let rows = ctx.run(&spec)?;

    println!("\n{}", rows_to_csv(&rows));
    println!("aggregates (macro-F1):");
    for a in aggregate(&rows) {
        if a.metric == "macro_f1" {
            println!(
                "  {:>6} at {:>4}: {:.4} +- {:.4}",
                a.variant, a.fraction, a.mean, a.stdev
            );
        }
    }
    Ok(())
}
