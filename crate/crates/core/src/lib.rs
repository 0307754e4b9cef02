//! Evaluation toolkit for scene graph generation.
//!
//! Loads ground-truth scene graphs and model prediction dumps, ranks and
//! matches candidate triplets, and reports Recall@K, mean Recall@K,
//! Independent Mean Recall@K and its diversity-weighted variant. Also builds
//! subject/object co-occurrence priors over predicates, rescores logits with
//! them, and runs the tail-replacement stress experiment.

pub mod analysis;
pub mod attack;
pub mod corpus;
pub mod error;
pub mod fmt;
pub mod matcher;
pub mod metrics;
pub mod pko;
pub mod stats;
pub mod synthgen;

pub use corpus::{
    load_ground_truth, load_predictions, load_vocab, BBox, Corpus, GroundTruthImage, GtCorpus,
    PredCorpus, PredictionImage, Relation, ScoreKind, Split, Vocab,
};
pub use error::{Error, Result};
pub use matcher::{ImrScore, MatchMode, Task};
pub use metrics::{evaluate, MetricConfig, MetricReport};
