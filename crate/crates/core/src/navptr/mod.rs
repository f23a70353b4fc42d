//! Interactive navigator-pointer: a co-grounding navigator with frontier
//! search, a modular object pointer, and the fusion that feeds pointer
//! choices back into navigation.

pub mod config;
pub mod data;
pub mod fixtures;
pub mod fusion;
pub mod loss;
pub mod model;
pub mod navigator;
pub mod pointer;
pub mod search;
pub mod train;

pub use config::NavPointConfig;
pub use data::FeatureCache;
pub use model::NavPointParams;
pub use search::{fast_search, plan_search, NavPointAgent, SearchPlan};
pub use train::{train, LossCurve, Phase, TrainConfig, TrainOutcome};
