//! The two benchmark generators.
//!
//! Case 1: two stages, one covariate each, linear contrasts with oracle
//! thresholds 250 and 360 and oracle value 1120. Case 2: three stages,
//! truncated-normal biomarkers, boolean oracle rules at stages 1 and 2 and
//! the linear rule `L31 + L32 > 35` at stage 3; oracle value 100.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::dgp::{generate_seeded, truncated_normal, DgpSpec, Simulator};
use super::expr::RuleExpr;
use crate::data::{Dataset, Schema, StageRecord};
use crate::error::Result;
use crate::regime::{Direction, Regime, Rule};
use crate::stats::expit;

/// True blip parameters `(ψ10, ψ11, ψ20, ψ21)` of case 1.
pub const CASE1_PSI: [f64; 4] = [250.0, -1.0, 720.0, -2.0];
pub const CASE1_ORACLE_VALUE: f64 = 1120.0;
pub const CASE2_ORACLE_VALUE: f64 = 100.0;

/// Boolean oracle rules of case 2, one per stage.
pub const CASE2_RULES: [&str; 3] = ["L11 > 30 || L12 > 12", "L21 > 25 || L22 > 10", "L31 + L32 > 35"];

/// Default treatment-assignment slopes of case 1. With the steeper
/// slopes `(0.06, 0.04)` about 3 in 1000 subjects are treated per stage,
/// the propensity fits separate in roughly 40% of samples of size 1000 and
/// A-learning breaks down; the shallower slopes give 36% and 22% treated.
pub const CASE1_SLOPES: [f64; 2] = [0.006, 0.004];

#[derive(Debug, Clone)]
pub struct Case1 {
    schema: Schema,
    /// `p1 = expit(2 - s1 L1)`, `p2 = expit(0.8 - s2 L2)`.
    slopes: [f64; 2],
}

impl Default for Case1 {
    fn default() -> Self {
        Self::with_slopes(CASE1_SLOPES)
    }
}

impl Case1 {
    pub fn with_slopes(slopes: [f64; 2]) -> Self {
        Self {
            schema: Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).expect("static schema"),
            slopes,
        }
    }

    /// Assignment slopes `(0.06, 0.04)`: nearly everyone untreated.
    pub fn steep() -> Self {
        Self::with_slopes([0.06, 0.04])
    }

    pub fn slopes(&self) -> [f64; 2] {
        self.slopes
    }
}

fn normal(rng: &mut ChaCha20Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

impl Simulator for Case1 {
    fn name(&self) -> &str {
        "case1"
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn oracle(&self) -> Result<Regime> {
        let tau1 = -CASE1_PSI[0] / CASE1_PSI[1];
        let tau2 = -CASE1_PSI[2] / CASE1_PSI[3];
        Regime::new(vec![
            Rule::threshold(&self.schema, 1, "L1", tau1, Direction::Below)?,
            Rule::threshold(&self.schema, 2, "L2", tau2, Direction::Below)?,
        ])
    }

    fn draw_covariates(&self, j: usize, done: &[StageRecord], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        Ok(vec![match j {
            1 => normal(rng, 450.0, 150.0),
            _ => normal(rng, 1.25 * done[0].covariates[0], 60.0),
        }])
    }

    fn propensity(&self, j: usize, records: &[StageRecord]) -> Result<f64> {
        let l = records[j - 1].covariates[0];
        Ok(match j {
            1 => expit(2.0 - self.slopes[0] * l),
            _ => expit(0.8 - self.slopes[1] * l),
        })
    }

    fn regret(&self, j: usize, records: &[StageRecord], a: u8) -> Result<f64> {
        let l = records[j - 1].covariates[0];
        let c = CASE1_PSI[2 * (j - 1)] + CASE1_PSI[2 * (j - 1) + 1] * l;
        let opt = if c > 0.0 { 1.0 } else { 0.0 };
        Ok((opt - f64::from(a)) * c)
    }

    fn base_mean(&self, records: &[StageRecord]) -> Result<f64> {
        Ok(400.0 + 1.6 * records[0].covariates[0])
    }

    fn noise_sd(&self) -> f64 {
        60.0
    }
}

#[derive(Debug, Clone)]
pub struct Case2 {
    schema: Schema,
}

impl Default for Case2 {
    fn default() -> Self {
        let cols = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            schema: Schema::new(vec![cols(&["W", "L11", "L12"]), cols(&["L21", "L22"]), cols(&["L31", "L32"])])
                .expect("static schema"),
        }
    }
}

fn positive(rng: &mut ChaCha20Rng, mean: f64, sd: f64) -> f64 {
    truncated_normal(rng, mean, sd, 0.0, f64::INFINITY)
}

fn mismatch(opt: bool, a: u8) -> f64 {
    if u8::from(opt) == a {
        0.0
    } else {
        1.0
    }
}

impl Simulator for Case2 {
    fn name(&self) -> &str {
        "case2"
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn oracle(&self) -> Result<Regime> {
        let rules = CASE2_RULES
            .iter()
            .enumerate()
            .map(|(k, e)| Ok(Rule::Expression(RuleExpr::compile(e, k + 1, &self.schema)?)))
            .collect::<Result<Vec<_>>>()?;
        Regime::new(rules)
    }

    fn draw_covariates(&self, j: usize, done: &[StageRecord], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        Ok(match j {
            1 => {
                let w = truncated_normal(rng, 45.0, 10.0, 10.0, f64::INFINITY);
                let l11 = positive(rng, 20.0, 5.0);
                let l12 = positive(rng, 10.0, 3.0);
                vec![w, l11, l12]
            }
            2 => {
                let (s1, a1) = (&done[0].covariates, f64::from(done[0].action));
                vec![positive(rng, 1.25 * s1[1] - 2.0 * a1, 5.0), positive(rng, s1[2] - a1, 3.0)]
            }
            _ => {
                let a1 = f64::from(done[0].action);
                let (s2, a2) = (&done[1].covariates, f64::from(done[1].action));
                vec![positive(rng, s2[0] - 2.0 * (a1 + a2), 5.0), positive(rng, s2[1] - a2, 3.0)]
            }
        })
    }

    fn propensity(&self, j: usize, records: &[StageRecord]) -> Result<f64> {
        let l = &records[j - 1].covariates;
        Ok(match j {
            1 => expit(-3.0 + 0.1 * l[0]),
            2 => expit(-1.0 + 0.04 * (l[0] + l[1])),
            _ => expit(-2.0 + 0.1 * l[0]),
        })
    }

    fn regret(&self, j: usize, records: &[StageRecord], a: u8) -> Result<f64> {
        let l = &records[j - 1].covariates;
        Ok(match j {
            1 => 0.5 * ((l[1] - 30.0).abs() + (l[2] - 12.0).abs()) * mismatch(l[1] > 30.0 || l[2] > 12.0, a),
            2 => ((l[0] - 25.0).abs() + (l[1] - 10.0).abs()) * mismatch(l[0] > 25.0 || l[1] > 10.0, a),
            _ => 2.0 * records[0].covariates[0].ln() * mismatch(l[0] + l[1] > 35.0, a),
        })
    }

    fn base_mean(&self, _records: &[StageRecord]) -> Result<f64> {
        Ok(100.0)
    }

    fn noise_sd(&self) -> f64 {
        10.0
    }
}

pub fn generate_case1(n: usize, seed: u64) -> Result<Dataset> {
    generate_seeded(&Case1::default(), n, seed, 0)
}

pub fn generate_case2(n: usize, seed: u64) -> Result<Dataset> {
    generate_seeded(&Case2::default(), n, seed, 0)
}

const CASE1_TOML: &str = r#"
name = "case1"

[[stages]]
propensity = "expit(2 - 0.006 * L1)"
regret = "(ind(250 - L1 > 0) - A1) * (250 - L1)"
oracle = "250 - L1 > 0"
[[stages.covariates]]
name = "L1"
mean = "450"
sd = 150.0

[[stages]]
propensity = "expit(0.8 - 0.004 * L2)"
regret = "(ind(720 - 2 * L2 > 0) - A2) * (720 - 2 * L2)"
oracle = "720 - 2 * L2 > 0"
[[stages.covariates]]
name = "L2"
mean = "1.25 * L1"
sd = 60.0

[outcome]
mean = "400 + 1.6 * L1"
sd = 60.0
"#;

const CASE2_TOML: &str = r#"
name = "case2"

[[stages]]
propensity = "expit(-3 + 0.1 * W)"
regret = "0.5 * (abs(L11 - 30) + abs(L12 - 12)) * abs(ind(L11 > 30 || L12 > 12) - A1)"
oracle = "L11 > 30 || L12 > 12"
[[stages.covariates]]
name = "W"
mean = "45"
sd = 10.0
lower = 10.0
[[stages.covariates]]
name = "L11"
mean = "20"
sd = 5.0
lower = 0.0
[[stages.covariates]]
name = "L12"
mean = "10"
sd = 3.0
lower = 0.0

[[stages]]
propensity = "expit(-1 + 0.04 * (L21 + L22))"
regret = "(abs(L21 - 25) + abs(L22 - 10)) * abs(ind(L21 > 25 || L22 > 10) - A2)"
oracle = "L21 > 25 || L22 > 10"
[[stages.covariates]]
name = "L21"
mean = "1.25 * L11 - 2 * A1"
sd = 5.0
lower = 0.0
[[stages.covariates]]
name = "L22"
mean = "L12 - A1"
sd = 3.0
lower = 0.0

[[stages]]
propensity = "expit(-2 + 0.1 * L31)"
regret = "2 * log(W) * abs(ind(L31 + L32 > 35) - A3)"
oracle = "L31 + L32 > 35"
[[stages.covariates]]
name = "L31"
mean = "L21 - 2 * (A1 + A2)"
sd = 5.0
lower = 0.0
[[stages.covariates]]
name = "L32"
mean = "L22 - A2"
sd = 3.0
lower = 0.0

[outcome]
mean = "100"
sd = 10.0
"#;

/// Case 1 written as a declarative spec.
pub fn case1_spec() -> DgpSpec {
    DgpSpec::from_toml(CASE1_TOML).expect("built-in spec parses")
}

/// Case 2 written as a declarative spec.
pub fn case2_spec() -> DgpSpec {
    DgpSpec::from_toml(CASE2_TOML).expect("built-in spec parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;
    use crate::simlab::dgp::regret_audit;

    #[test]
    fn case1_l1_mean() {
        let d = generate_case1(100_000, 11).unwrap();
        let m = d.trajectories().iter().map(|t| t.covariates(1)[0]).sum::<f64>() / 1e5;
        assert!((m - 450.0).abs() < 1.5, "{m}");
    }

    #[test]
    fn case2_truncation_and_audit() {
        let sim = Case2::default();
        let d = generate_seeded(&sim, 5000, 3, 0).unwrap();
        for t in d.trajectories() {
            assert!(t.covariates(1)[0] > 10.0);
            assert!((1..=3).all(|j| t.covariates(j).iter().all(|&x| x > 0.0)));
        }
        regret_audit(&sim, &d).unwrap();
        assert_eq!(d.schema().wide_header().join(","), "W,L11,L12,A1,L21,L22,A2,L31,L32,A3,Y");
    }

    #[test]
    fn oracle_stage3_rule() {
        let sim = Case2::default();
        let t = Trajectory::new(
            vec![
                StageRecord::new(vec![45.0, 20.0, 10.0], 0),
                StageRecord::new(vec![20.0, 10.0], 0),
                StageRecord::new(vec![20.0, 20.0], 0),
            ],
            0.0,
        )
        .unwrap();
        assert_eq!(sim.oracle().unwrap().rule(3).action(&t.history(3).unwrap()), 1);
    }

    #[test]
    fn specs_compile_and_match_the_oracles() {
        for (spec, n) in [(case1_spec(), 2), (case2_spec(), 3)] {
            let c = spec.compile().unwrap();
            assert_eq!(c.schema().stage_count(), n);
            let d = generate_seeded(&c, 500, 1, 0).unwrap();
            regret_audit(&c, &d).unwrap();
        }
    }

    #[test]
    fn case1_treated_fractions() {
        let share = |sim: &Case1, j: usize| {
            let d = generate_seeded(sim, 20_000, 5, 0).unwrap();
            d.trajectories().iter().filter(|t| t.action(j) == 1).count() as f64 / 20_000.0
        };
        let sim = Case1::default();
        assert!((share(&sim, 1) - 0.355).abs() < 0.02);
        assert!((share(&sim, 2) - 0.217).abs() < 0.02);
        assert!(share(&Case1::steep(), 1) < 0.01);
    }
}
