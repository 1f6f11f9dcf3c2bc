//! Numerical primitives shared by the estimators.

pub mod design;
pub mod ee;
pub mod logistic;
pub mod ols;
pub mod optimize;
pub mod qr;

pub use design::DesignMatrix;
pub use ee::{solve_joint_linear_ee, EeSolution};
pub use logistic::{expit, logistic_fit, LogisticFit, LogisticOptions};
pub use ols::{ols_fit, LinearFit};
pub use optimize::{maximize, Method, OptimizeResult, OptimizerConfig};
