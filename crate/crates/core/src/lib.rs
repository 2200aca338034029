//! Semantic-graph sentiment pretraining at desk scale.
//!
//! The pipeline mines an aspect/sentiment semantic graph from raw review
//! text, continue-pretrains a small transformer encoder with three
//! sentiment objectives (sentiment-word masking, aspect-sentiment pair
//! prediction, contrastive node similarity), and fine-tunes the encoder
//! on sentence-level classification, aspect-level classification, and
//! aspect/sentiment term extraction.
//!
//! The runnable examples are the best starting point — one per major
//! capability:
//!
//! ```text
//! cargo run -p sentigraph --example mine_graph        # corpus -> pairs -> clusters -> graph
//! cargo run -p sentigraph --example cluster_synonyms  # embeddings + DBSCAN + recycling
//! cargo run -p sentigraph --example sample_neighbors  # similar-node sampling, both modes
//! cargo run -p sentigraph --example gradient_check    # analytic vs finite-difference grads
//! cargo run -p sentigraph --example pretrain_tiny     # joint pretraining loop + loss log
//! cargo run -p sentigraph --example finetune_classify # fine-tune + macro-F1 report
//! cargo run -p sentigraph --example crf_tagging       # CRF extraction head
//! cargo run -p sentigraph --example data_scale        # ablation / data-scale sweep CSV
//! ```
//!
//! The same capabilities are wired end to end behind a thin CLI:
//! `sentigraph mine | pretrain | finetune | eval | experiment`.

pub mod corpus;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod graph;
pub mod objectives;
pub mod pipeline;
pub mod pretrain;
pub mod rng;
pub mod similarity;
pub mod terms;

pub use error::{Error, Result};
