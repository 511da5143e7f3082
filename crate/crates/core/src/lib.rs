//! Popularity-debiased recommendation with deconfounded training over a
//! conformity model driven by evolving personal popularity, plus a
//! moving-average forecasting intervention at inference time.
//!
//! The crate is organized bottom-up:
//!
//! - [`corpus`]: interaction logs, k-core filtering, chronological splits and
//!   the synthetic conformity-driven generator.
//! - [`popstats`]: local popularity, high-popularity thresholds, evolving
//!   personal popularity and per-item average popularity.
//! - [`forecast`]: moving averages, trend slopes and the intervention plan.
//! - [`backbone`]: learnable parameters, MF / LightGCN matching scores, the
//!   item MLP, consistency-weighted conformity and the prediction score.
//! - [`training`]: negative sampling, BPR + quality loss with analytic
//!   gradients, Adam, and the training loop (including the IPS baseline).
//! - [`inference`]: scoring with or without intervention and top-k ranking.
//! - [`evaluation`]: Recall / Precision / NDCG and the popularity bias report.

pub mod backbone;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod inference;
pub mod pipeline;
pub mod popstats;
pub mod rankstats;
pub mod training;

pub use backbone::{BackboneKind, InteractionGraph, ModelParams, PropagatedEmbeddings};
pub use corpus::synth::{SynthConfig, SynthGroundTruth};
pub use corpus::{Interaction, SplitDataset, TimeGrid};
pub use error::{Error, Result};
pub use evaluation::{BiasReport, MetricsReport};
pub use forecast::{InterventionPlan, SlopeEstimator};
pub use inference::{InterventionMode, RankingResult, Scorer};
pub use popstats::{PersonalPopularityTable, PopularityTable};
pub use training::{Ablation, TrainConfig, TrainMode, TrainReport};
