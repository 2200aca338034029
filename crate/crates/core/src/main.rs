//! Thin CLI over the library pipeline: mine | pretrain | finetune |
//! eval | experiment. Settings come from an optional `key = value`
//! config file plus flag overrides; flags win. Exit codes: 0 success,
//! 1 runtime failure, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sentigraph::error::Error;
use sentigraph::pipeline::{
    cmd_eval, cmd_experiment, cmd_finetune, cmd_mine, cmd_pretrain, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "sentigraph",
    version,
    about = "Semantic-graph sentiment pretraining pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value config file; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the run_config.txt snapshot.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra overrides as KEY=VALUE (repeatable), applied after flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Mine the semantic graph from a review corpus.
    Mine {
        #[command(flatten)]
        common: Common,
        /// UTF-8 review file, one review per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// TSV lexicon `word_or_phrase<TAB>aspect|sentiment`.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Manual cluster override file (add|remove|merge directives).
        #[arg(long)]
        overrides: Option<PathBuf>,
    },
    /// Continue-pretrain the encoder with the three objectives.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Resume from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Also write the generated pretraining examples as JSON lines.
        #[arg(long)]
        dump_examples: bool,
        #[arg(long)]
        total_steps: Option<usize>,
    },
    /// Fine-tune on a downstream task and report metrics.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// sentence_cls | aspect_cls | extraction
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Encoder checkpoint to start from (omit for random init).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Train JSONL (split 7:1:2 unless valid/test also given).
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        valid_data: Option<PathBuf>,
        #[arg(long)]
        test_data: Option<PathBuf>,
    },
    /// Score a prediction file against a gold file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Ablation / data-scale sweep on the synthetic benchmark.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Comma list: none,sw_only,sw+ap,sw+ns,full
        #[arg(long)]
        variants: Option<String>,
        /// Comma list of data fractions in (0, 1].
        #[arg(long)]
        fractions: Option<String>,
        /// Comma list of seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        task: Option<String>,
    },
}

fn build_config(
    common: &Common,
    extra: Vec<(&str, Option<String>)>,
) -> Result<PipelineConfig, Error> {
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(out) = &common.out {
        overrides.push(("out_dir".into(), out.display().to_string()));
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    for (key, value) in extra.into_iter() {
        if let Some(v) = value {
            overrides.push((key.to_string(), v));
        }
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {:?}", kv)))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    PipelineConfig::from_sources(common.config.as_deref(), &overrides)
}

fn path_arg(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Mine {
            common,
            corpus,
            lexicon,
            overrides,
        } => {
            let cfg = build_config(
                &common,
                vec![
                    ("corpus", path_arg(&corpus)),
                    ("lexicon", path_arg(&lexicon)),
                    ("overrides", path_arg(&overrides)),
                ],
            )?;
            let stats = cmd_mine(&cfg)?;
            println!("{}", stats);
        }
        Command::Pretrain {
            common,
            corpus,
            lexicon,
            resume,
            dump_examples,
            total_steps,
        } => {
            let mut extra = vec![
                ("corpus", path_arg(&corpus)),
                ("lexicon", path_arg(&lexicon)),
                ("total_steps", total_steps.map(|s| s.to_string())),
            ];
            if resume {
                extra.push(("resume", Some("true".into())));
            }
            if dump_examples {
                extra.push(("dump_examples", Some("true".into())));
            }
            let cfg = build_config(&common, extra)?;
            let rows = cmd_pretrain(&cfg)?;
            if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
                println!(
                    "pretrained {} steps: joint loss {:.4} -> {:.4}",
                    rows.len(),
                    first.total,
                    last.total
                );
            }
        }
        Command::Finetune {
            common,
            task,
            corpus,
            checkpoint,
            train_data,
            valid_data,
            test_data,
        } => {
            let cfg = build_config(
                &common,
                vec![
                    ("task", task),
                    ("corpus", path_arg(&corpus)),
                    ("checkpoint", path_arg(&checkpoint)),
                    ("train_data", path_arg(&train_data)),
                    ("valid_data", path_arg(&valid_data)),
                    ("test_data", path_arg(&test_data)),
                ],
            )?;
            let report = cmd_finetune(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(Error::from)?
            );
        }
        Command::Eval {
            common,
            task,
            gold,
            pred,
        } => {
            let cfg = build_config(
                &common,
                vec![
                    ("task", task),
                    ("gold", path_arg(&gold)),
                    ("pred", path_arg(&pred)),
                ],
            )?;
            let report = cmd_eval(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(Error::from)?
            );
        }
        Command::Experiment {
            common,
            variants,
            fractions,
            seeds,
            task,
        } => {
            let cfg = build_config(
                &common,
                vec![
                    ("variants", variants),
                    ("fractions", fractions),
                    ("seeds", seeds),
                    ("task", task),
                ],
            )?;
            let rows = cmd_experiment(&cfg)?;
            println!(
                "wrote {} rows to {}",
                rows.len(),
                cfg.out_dir.join("experiment.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
