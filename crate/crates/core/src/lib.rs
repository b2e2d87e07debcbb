//! Fair re-ranking under noisy demographic labels.
//!
//! The crate bundles a constrained re-ranker ([`detconstsort`]), ranking
//! fairness and utility metrics ([`metrics`]), confusion-matrix label noise
//! ([`noise`]), a Monte Carlo harness ([`simulation`]) and CSV plumbing
//! ([`datasets`]).

pub mod datasets;
pub mod detconstsort;
pub mod error;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{
    empirical_distribution, sort_by_score, subgroup_product, Candidate, Distribution, LabelSource,
    Ranking, RankingSource, SubgroupLabel,
};
