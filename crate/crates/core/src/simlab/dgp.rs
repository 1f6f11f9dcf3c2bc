//! Regret-parameterized data generation.
//!
//! A generator draws covariates stage by stage, assigns treatment either
//! from its propensity law or from a given regime, and draws the outcome as
//! `base(history) + noise − Σ_j μ_j(H_j, A_j)` where each regret `μ_j` is
//! nonnegative and vanishes at the oracle action.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::expr::{Expr, RuleExpr};
use super::rng::{purpose, stream_rng};
use crate::data::{Dataset, History, Schema, StageRecord, Trajectory, VarKind, VarRef};
use crate::error::{DtrError, Result};
use crate::regime::{Regime, Rule};

/// How treatments are assigned while simulating.
#[derive(Clone, Copy)]
pub enum Assignment<'a> {
    /// Bernoulli draws from the generator's propensity law.
    Observational,
    /// Actions forced to the regime's decisions.
    Regime(&'a Regime),
}

pub trait Simulator: Sync {
    fn name(&self) -> &str;
    fn schema(&self) -> &Schema;
    fn oracle(&self) -> Result<Regime>;
    /// Stage-`j` covariates given the completed earlier stages.
    fn draw_covariates(&self, j: usize, done: &[StageRecord], rng: &mut ChaCha20Rng) -> Result<Vec<f64>>;
    /// `P(A_j = 1 | H_j)`; `records` has `j` entries, the last action unset.
    fn propensity(&self, j: usize, records: &[StageRecord]) -> Result<f64>;
    /// `μ_j(H_j, a)`; `records` has `j` entries.
    fn regret(&self, j: usize, records: &[StageRecord], a: u8) -> Result<f64>;
    /// Conditional mean of the outcome without the regret terms.
    fn base_mean(&self, records: &[StageRecord]) -> Result<f64>;
    fn noise_sd(&self) -> f64;
}

/// Draws one trajectory.
pub fn draw_trajectory(sim: &dyn Simulator, assign: Assignment<'_>, rng: &mut ChaCha20Rng) -> Result<Trajectory> {
    let k = sim.schema().stage_count();
    let mut records: Vec<StageRecord> = Vec::with_capacity(k);
    let mut regret = 0.0;
    for j in 1..=k {
        let cov = sim.draw_covariates(j, &records, rng)?;
        records.push(StageRecord::new(cov, 0));
        let a = match assign {
            Assignment::Observational => {
                let p = sim.propensity(j, &records)?;
                let u: f64 = rng.random();
                u8::from(u < p)
            }
            Assignment::Regime(r) => r.rule(j).action(&History::from_records(&records)),
        };
        records[j - 1].action = a;
        regret += sim.regret(j, &records, a)?;
    }
    let z: f64 = rng.sample(StandardNormal);
    let y = sim.base_mean(&records)? + sim.noise_sd() * z - regret;
    Trajectory::new(records, y)
}

/// `n` trajectories from one generator state.
pub fn generate(sim: &dyn Simulator, n: usize, assign: Assignment<'_>, rng: &mut ChaCha20Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(DtrError::Config("sample size must be at least 1".into()));
    }
    let trajs = (0..n)
        .map(|_| draw_trajectory(sim, assign, rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sim.schema().clone(), trajs)
}

/// Observational sample for replicate `stream` of `seed`.
pub fn generate_seeded(sim: &dyn Simulator, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    generate(sim, n, Assignment::Observational, &mut stream_rng(seed, purpose::DATA, stream))
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub rows: usize,
    pub checks: usize,
    pub min_regret: f64,
    pub max_oracle_regret: f64,
}

/// Checks `μ_j(h, a) ≥ 0` for both actions and `μ_j(h, d_opt(h)) = 0` at
/// every stage of every row of `data`.
pub fn regret_audit(sim: &dyn Simulator, data: &Dataset) -> Result<AuditReport> {
    let oracle = sim.oracle()?;
    let mut report = AuditReport {
        rows: data.len(),
        checks: 0,
        min_regret: f64::INFINITY,
        max_oracle_regret: 0.0,
    };
    for (i, t) in data.trajectories().iter().enumerate() {
        for j in 1..=t.stage_count() {
            let recs = &t.stages()[..j];
            let mu = [sim.regret(j, recs, 0)?, sim.regret(j, recs, 1)?];
            let d = oracle.rule(j).action(&History::from_records(recs));
            let tol = 1e-9 * (1.0 + mu[0].abs().max(mu[1].abs()));
            report.checks += 2;
            report.min_regret = report.min_regret.min(mu[0]).min(mu[1]);
            report.max_oracle_regret = report.max_oracle_regret.max(mu[usize::from(d)]);
            if mu[0] < -tol || mu[1] < -tol {
                return Err(DtrError::Spec(format!(
                    "negative regret {} at row {i}, stage {j}",
                    mu[0].min(mu[1])
                )));
            }
            if mu[usize::from(d)].abs() > tol {
                return Err(DtrError::Spec(format!(
                    "regret {} at the oracle action (row {i}, stage {j})",
                    mu[usize::from(d)]
                )));
            }
        }
    }
    Ok(report)
}

/// Standard normal restricted to `[a, b]` by inverse CDF.
fn std_truncated(rng: &mut ChaCha20Rng, a: f64, b: f64) -> f64 {
    if a > 0.0 {
        // work in the lower tail where the CDF keeps its precision
        return -std_truncated(rng, -b, -a);
    }
    let n = Normal::standard();
    let (pa, pb) = (n.cdf(a), n.cdf(b));
    let u: f64 = rng.random();
    let p = (pa + u * (pb - pa)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    n.inverse_cdf(p).clamp(a, b)
}

/// `N(mean, sd²)` truncated to `(lower, upper)`; unbounded sides may be
/// infinite.
pub fn truncated_normal(rng: &mut ChaCha20Rng, mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    if lower == f64::NEG_INFINITY && upper == f64::INFINITY {
        let z: f64 = rng.sample(StandardNormal);
        return mean + sd * z;
    }
    mean + sd * std_truncated(rng, (lower - mean) / sd, (upper - mean) / sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    /// Mean expression over earlier variables.
    pub mean: String,
    pub sd: f64,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub covariates: Vec<CovariateSpec>,
    /// `P(A_j = 1 | H_j)`.
    pub propensity: String,
    /// `μ_j(H_j, A_j)`; may use `A_j`.
    pub regret: String,
    /// Boolean oracle rule `d_j^opt(H_j)`.
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    /// `μ₀ + Σ φ_j`, the outcome mean under optimal treatment.
    pub mean: String,
    pub sd: f64,
}

/// Declarative data-generating process (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
    pub outcome: OutcomeSpec,
}

impl DgpSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DtrError::Spec(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DtrError::Spec(e.to_string()))
    }

    pub fn compile(&self) -> Result<CompiledDgp> {
        if self.stages.is_empty() {
            return Err(DtrError::Spec("a spec needs at least one stage".into()));
        }
        let columns = self
            .stages
            .iter()
            .map(|s| s.covariates.iter().map(|c| c.name.clone()).collect())
            .collect();
        let schema = Schema::new(columns).map_err(|e| DtrError::Spec(e.to_string()))?;
        let bad_sd = |sd: f64| !(sd.is_finite() && sd >= 0.0);
        if bad_sd(self.outcome.sd) {
            return Err(DtrError::Spec("outcome sd must be finite and nonnegative".into()));
        }
        let mut stages = Vec::with_capacity(self.stages.len());
        for (k, st) in self.stages.iter().enumerate() {
            let j = k + 1;
            let mut covs = Vec::with_capacity(st.covariates.len());
            for (ci, c) in st.covariates.iter().enumerate() {
                let lower = c.lower.unwrap_or(f64::NEG_INFINITY);
                let upper = c.upper.unwrap_or(f64::INFINITY);
                if bad_sd(c.sd) || lower.is_nan() || upper.is_nan() || lower >= upper {
                    return Err(DtrError::Spec(format!("covariate `{}` has an invalid law", c.name)));
                }
                let mean = Expr::compile(&c.mean, &schema, |v| match v.kind {
                    VarKind::Covariate(i) => v.stage < j || (v.stage == j && i < ci),
                    VarKind::Action => v.stage < j,
                })?;
                covs.push(CompiledCovariate {
                    mean,
                    sd: c.sd,
                    lower,
                    upper,
                });
            }
            stages.push(CompiledStage {
                covariates: covs,
                propensity: Expr::compile(&st.propensity, &schema, |v| v.available_from() <= j)?,
                regret: Expr::compile(&st.regret, &schema, |v| v.stage <= j)?,
                oracle: RuleExpr::compile(&st.oracle, j, &schema)?,
            });
        }
        let outcome = Expr::compile(&self.outcome.mean, &schema, |_| true)?;
        Ok(CompiledDgp {
            name: self.name.clone(),
            schema,
            stages,
            outcome,
            sd: self.outcome.sd,
        })
    }
}

#[derive(Debug, Clone)]
struct CompiledCovariate {
    mean: Expr,
    sd: f64,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Clone)]
struct CompiledStage {
    covariates: Vec<CompiledCovariate>,
    propensity: Expr,
    regret: Expr,
    oracle: RuleExpr,
}

#[derive(Debug, Clone)]
pub struct CompiledDgp {
    name: String,
    schema: Schema,
    stages: Vec<CompiledStage>,
    outcome: Expr,
    sd: f64,
}

fn record_value(records: &[StageRecord], partial: &[f64], v: &VarRef) -> f64 {
    match v.kind {
        VarKind::Covariate(i) if v.stage == records.len() + 1 => partial[i],
        VarKind::Covariate(i) => records[v.stage - 1].covariates[i],
        VarKind::Action => f64::from(records[v.stage - 1].action),
    }
}

impl Simulator for CompiledDgp {
    fn name(&self) -> &str {
        &self.name
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn oracle(&self) -> Result<Regime> {
        Regime::new(self.stages.iter().map(|s| Rule::Expression(s.oracle.clone())).collect())
    }

    fn draw_covariates(&self, j: usize, done: &[StageRecord], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        let stage = &self.stages[j - 1];
        let mut out: Vec<f64> = Vec::with_capacity(stage.covariates.len());
        for c in &stage.covariates {
            let m = c.mean.eval_f64(&|v| record_value(done, &out, v))?;
            if !m.is_finite() {
                return Err(DtrError::Spec(format!("non-finite mean in `{}`", c.mean.source())));
            }
            out.push(truncated_normal(rng, m, c.sd, c.lower, c.upper));
        }
        Ok(out)
    }

    fn propensity(&self, j: usize, records: &[StageRecord]) -> Result<f64> {
        let e = &self.stages[j - 1].propensity;
        let p = e.eval_f64(&|v| records[v.stage - 1].value_of(v))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(DtrError::Spec(format!("propensity {p} outside [0, 1] in `{}`", e.source())));
        }
        Ok(p)
    }

    fn regret(&self, j: usize, records: &[StageRecord], a: u8) -> Result<f64> {
        let e = &self.stages[j - 1].regret;
        e.eval_f64(&|v| {
            if v.kind == VarKind::Action && v.stage == j {
                f64::from(a)
            } else {
                records[v.stage - 1].value_of(v)
            }
        })
    }

    fn base_mean(&self, records: &[StageRecord]) -> Result<f64> {
        self.outcome.eval_f64(&|v| records[v.stage - 1].value_of(v))
    }

    fn noise_sd(&self) -> f64 {
        self.sd
    }
}

impl StageRecord {
    fn value_of(&self, v: &VarRef) -> f64 {
        match v.kind {
            VarKind::Covariate(i) => self.covariates[i],
            VarKind::Action => f64::from(self.action),
        }
    }
}

/// Generates `n` rows from a declarative spec and audits its regrets on
/// them.
pub fn generate_from_spec(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    let sim = spec.compile()?;
    let data = generate_seeded(&sim, n, seed, 0)?;
    regret_audit(&sim, &data)?;
    Ok(data)
}
