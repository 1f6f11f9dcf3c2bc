//! Direct policy search: weighted value estimators, regime-class search,
//! and outcome-weighted learning.

pub mod bowl;
pub mod search;
pub mod svm;
pub mod value;

pub use bowl::{bowl_fit, KernelChoice, OwlSpec};
pub use search::{search_optimal_regime, threshold_candidates, RegimeClass, SearchResult, ThresholdStage};
pub use svm::{DecisionFunction, DecisionFunctionSpec, Kernel};
pub use value::{
    aipwe_value, ipwe_value, require_q_models, AugmentationModel, Estimator, ValueCache, ValueEstimate,
    ZeroAugmentation,
};
