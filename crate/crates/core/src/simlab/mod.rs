//! Simulation lab: generators, oracle regimes, Monte Carlo evaluation,
//! decision accuracy, bootstrap SEs and the replicated benchmark harness.

pub mod bench;
pub mod cases;
pub mod dgp;
pub mod eval;
pub mod expr;
pub mod rng;

pub use bench::{run_benchmark, BenchConfig, BenchmarkReport, MethodSummary, Suite};
pub use cases::{case1_spec, case2_spec, generate_case1, generate_case2, Case1, Case2};
pub use dgp::{
    generate, generate_from_spec, generate_seeded, regret_audit, Assignment, AuditReport, CompiledDgp, DgpSpec,
    Simulator,
};
pub use eval::{
    bootstrap_se, decision_accuracy, mc_value, mc_value_stream, AccuracyReport, BootstrapReport, McValueReport,
};
