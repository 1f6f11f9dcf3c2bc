//! Estimation and simulation benchmarking of optimal dynamic treatment
//! regimes.
//!
//! Estimators: Q-learning and A-learning ([`indirect`]), causal trees
//! ([`ctree`]), IPWE/AIPWE direct search and backward outcome-weighted
//! learning ([`direct`]). [`simlab`] holds the data generators and the
//! benchmark harness; [`cli`] the command-line front end.

pub mod cli;
pub mod ctree;
pub mod data;
pub mod direct;
pub mod error;
pub mod features;
pub mod fit;
pub mod indirect;
pub mod io;
pub mod pipeline;
pub mod propensity;
pub mod regime;
pub mod simlab;
pub mod stats;

pub use data::{Dataset, History, Schema, StageRecord, Trajectory};
pub use error::{DtrError, Result};
pub use features::FeatureMap;
pub use fit::{FitResult, MethodTag};
pub use regime::{apply_regime, consistency_index, ConsistencyIndex, Regime, RegimeSpec, Rule};
