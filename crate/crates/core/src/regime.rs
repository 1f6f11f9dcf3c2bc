//! Treatment regimes: one deterministic decision rule per stage.

use serde::{Deserialize, Serialize};

use crate::ctree::CausalTree;
use crate::data::{History, Schema, Trajectory, VarRef};
use crate::direct::svm::{DecisionFunction, DecisionFunctionSpec};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::simlab::expr::RuleExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Treat when the covariate is strictly below the cutoff.
    Below,
    /// Treat when the covariate is strictly above the cutoff.
    Above,
}

#[derive(Debug, Clone)]
pub enum Rule {
    /// Treat iff `ψᵀ r(h) > 0`.
    LinearSign {
        features: FeatureMap,
        coefficients: Vec<f64>,
    },
    Threshold {
        stage: usize,
        variable: VarRef,
        label: String,
        cutoff: f64,
        direction: Direction,
    },
    /// Treat iff the leaf contrast of `h` is positive.
    Tree {
        features: FeatureMap,
        tree: CausalTree,
    },
    /// Treat iff the decision function is positive.
    DecisionFn(DecisionFunction),
    /// Boolean expression over history variables (simulation oracles).
    Expression(RuleExpr),
}

impl Rule {
    pub fn linear_sign(features: FeatureMap, coefficients: Vec<f64>) -> Result<Self> {
        if features.dim() != coefficients.len() {
            return Err(DtrError::Shape(format!(
                "feature map has {} terms but {} coefficients were given",
                features.dim(),
                coefficients.len()
            )));
        }
        Ok(Rule::LinearSign {
            features,
            coefficients,
        })
    }

    pub fn threshold(
        schema: &Schema,
        stage: usize,
        column: &str,
        cutoff: f64,
        direction: Direction,
    ) -> Result<Self> {
        let variable = schema
            .lookup(column)
            .ok_or_else(|| DtrError::Config(format!("unknown threshold column `{column}`")))?;
        if variable.available_from() > stage {
            return Err(DtrError::Config(format!(
                "`{column}` is not available at stage {stage}"
            )));
        }
        Ok(Rule::Threshold {
            stage,
            variable,
            label: column.to_string(),
            cutoff,
            direction,
        })
    }

    pub fn stage(&self) -> usize {
        match self {
            Rule::LinearSign { features, .. } | Rule::Tree { features, .. } => features.stage(),
            Rule::Threshold { stage, .. } => *stage,
            Rule::DecisionFn(f) => f.stage(),
            Rule::Expression(e) => e.stage(),
        }
    }

    /// Signed score whose positivity means "treat". For expression rules
    /// this is `±1`.
    pub fn score(&self, h: &History<'_>) -> f64 {
        match self {
            Rule::LinearSign {
                features,
                coefficients,
            } => features.dot(h, coefficients),
            Rule::Threshold {
                variable,
                cutoff,
                direction,
                ..
            } => {
                let x = h.value(variable);
                match direction {
                    Direction::Below => cutoff - x,
                    Direction::Above => x - cutoff,
                }
            }
            Rule::Tree { features, tree } => tree.contrast(&features.eval(h)),
            Rule::DecisionFn(f) => f.value(h),
            Rule::Expression(e) => {
                if e.eval(h) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn action(&self, h: &History<'_>) -> u8 {
        u8::from(self.score(h) > 0.0)
    }

    /// Human-readable form, e.g. `treat if L2 < 353.2`.
    pub fn describe(&self) -> String {
        match self {
            Rule::LinearSign {
                features,
                coefficients,
            } => describe_linear(features, coefficients),
            Rule::Threshold {
                label,
                cutoff,
                direction,
                ..
            } => match direction {
                Direction::Below => format!("treat if {label} < {}", fmt_num(*cutoff)),
                Direction::Above => format!("treat if {label} > {}", fmt_num(*cutoff)),
            },
            Rule::Tree { tree, .. } => format!(
                "treat if leaf contrast > 0 ({} leaves)",
                tree.leaf_count()
            ),
            Rule::DecisionFn(f) => format!("treat if {} decision function > 0", f.kernel_name()),
            Rule::Expression(e) => format!("treat if {}", e.source()),
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{:.2}", x)
}

fn describe_linear(features: &FeatureMap, coefficients: &[f64]) -> String {
    let labels = features.labels();
    // single covariate plus intercept renders as a threshold
    if labels.len() == 2 && labels[0] == "1" && coefficients[1] != 0.0 {
        let tau = -coefficients[0] / coefficients[1];
        let op = if coefficients[1] < 0.0 { "<" } else { ">" };
        return format!("treat if {} {op} {}", labels[1], fmt_num(tau));
    }
    let terms: Vec<String> = labels
        .iter()
        .zip(coefficients)
        .map(|(l, c)| {
            if l == "1" {
                format!("{c:.4}")
            } else {
                format!("{c:.4}*{l}")
            }
        })
        .collect();
    format!("treat if {} > 0", terms.join(" + "))
}

#[derive(Debug, Clone)]
pub struct Regime {
    rules: Vec<Rule>,
}

impl Regime {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(DtrError::Shape("regime needs at least one rule".into()));
        }
        for (j, r) in rules.iter().enumerate() {
            if r.stage() != j + 1 {
                return Err(DtrError::Shape(format!(
                    "rule {} is built for stage {}",
                    j + 1,
                    r.stage()
                )));
            }
        }
        Ok(Self { rules })
    }

    pub fn stage_count(&self) -> usize {
        self.rules.len()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, j: usize) -> &Rule {
        &self.rules[j - 1]
    }

    pub fn to_spec(&self, schema: &Schema) -> RegimeSpec {
        RegimeSpec {
            rules: self.rules.iter().map(|r| RuleSpec::from_rule(r, schema)).collect(),
        }
    }
}

/// Decision at history `h` using the rule for stage `h.stage()`. Ties
/// (score exactly zero) give action 0.
pub fn apply_regime(regime: &Regime, h: &History<'_>) -> Result<u8> {
    let j = h.stage();
    if j > regime.stage_count() {
        return Err(DtrError::Shape(format!(
            "history at stage {j} but regime has {} rules",
            regime.stage_count()
        )));
    }
    Ok(regime.rule(j).action(h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsistencyIndex {
    /// First stage at which the observed action differs from the regime.
    Stage(usize),
    /// Observed actions follow the regime at every reached stage.
    Infinity,
}

impl ConsistencyIndex {
    /// `J ≥ j`.
    pub fn at_least(&self, j: usize) -> bool {
        match self {
            ConsistencyIndex::Infinity => true,
            ConsistencyIndex::Stage(s) => *s >= j,
        }
    }
}

pub fn consistency_index(regime: &Regime, trajectory: &Trajectory) -> Result<ConsistencyIndex> {
    if trajectory.stage_count() > regime.stage_count() {
        return Err(DtrError::Shape(format!(
            "trajectory has {} stages, regime has {}",
            trajectory.stage_count(),
            regime.stage_count()
        )));
    }
    for j in 1..=trajectory.stage_count() {
        let h = trajectory.history(j)?;
        if regime.rule(j).action(&h) != trajectory.action(j) {
            return Ok(ConsistencyIndex::Stage(j));
        }
    }
    Ok(ConsistencyIndex::Infinity)
}

/// JSON form of a regime. Feature maps are stored as formulas and column
/// names, resolved against a [`Schema`] on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleSpec {
    LinearSign {
        stage: usize,
        features: String,
        coefficients: Vec<f64>,
    },
    Threshold {
        stage: usize,
        column: String,
        cutoff: f64,
        direction: Direction,
    },
    Tree {
        stage: usize,
        features: String,
        tree: CausalTree,
    },
    DecisionFn(DecisionFunctionSpec),
    Expression {
        stage: usize,
        expr: String,
    },
}

impl RuleSpec {
    fn from_rule(rule: &Rule, schema: &Schema) -> Self {
        match rule {
            Rule::LinearSign {
                features,
                coefficients,
            } => RuleSpec::LinearSign {
                stage: features.stage(),
                features: features.formula(),
                coefficients: coefficients.clone(),
            },
            Rule::Threshold {
                stage,
                variable,
                cutoff,
                direction,
                ..
            } => RuleSpec::Threshold {
                stage: *stage,
                column: schema.name(variable),
                cutoff: *cutoff,
                direction: *direction,
            },
            Rule::Tree { features, tree } => RuleSpec::Tree {
                stage: features.stage(),
                features: features.formula(),
                tree: tree.clone(),
            },
            Rule::DecisionFn(f) => RuleSpec::DecisionFn(f.to_spec()),
            Rule::Expression(e) => RuleSpec::Expression {
                stage: e.stage(),
                expr: e.source().to_string(),
            },
        }
    }

    fn resolve(&self, schema: &Schema) -> Result<Rule> {
        match self {
            RuleSpec::LinearSign {
                stage,
                features,
                coefficients,
            } => Rule::linear_sign(
                FeatureMap::parse(features, *stage, schema)?,
                coefficients.clone(),
            ),
            RuleSpec::Threshold {
                stage,
                column,
                cutoff,
                direction,
            } => Rule::threshold(schema, *stage, column, *cutoff, *direction),
            RuleSpec::Tree {
                stage,
                features,
                tree,
            } => {
                let features = FeatureMap::parse(features, *stage, schema)?;
                tree.check_dim(features.dim())?;
                Ok(Rule::Tree {
                    features,
                    tree: tree.clone(),
                })
            }
            RuleSpec::DecisionFn(spec) => Ok(Rule::DecisionFn(DecisionFunction::from_spec(
                spec, schema,
            )?)),
            RuleSpec::Expression { stage, expr } => {
                Ok(Rule::Expression(RuleExpr::compile(expr, *stage, schema)?))
            }
        }
    }
}

impl RegimeSpec {
    pub fn resolve(&self, schema: &Schema) -> Result<Regime> {
        if self.rules.len() != schema.stage_count() {
            return Err(DtrError::Shape(format!(
                "stage mismatch: regime has {} rules, data has {} stages",
                self.rules.len(),
                schema.stage_count()
            )));
        }
        let rules = self
            .rules
            .iter()
            .map(|r| r.resolve(schema))
            .collect::<Result<Vec<_>>>()?;
        Regime::new(rules)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StageRecord;

    fn schema() -> Schema {
        Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap()
    }

    fn traj(l1: f64, a1: u8, l2: f64, a2: u8) -> Trajectory {
        Trajectory::new(
            vec![StageRecord::new(vec![l1], a1), StageRecord::new(vec![l2], a2)],
            0.0,
        )
        .unwrap()
    }

    fn linear(stage: usize, psi: [f64; 2]) -> Rule {
        let s = schema();
        let f = FeatureMap::parse(&format!("1,L{stage}"), stage, &s).unwrap();
        Rule::linear_sign(f, psi.to_vec()).unwrap()
    }

    #[test]
    fn linear_sign_worked_example() {
        // 479.88 - 1.54 * 357.76 < 0
        let regime = Regime::new(vec![linear(1, [0.0, 0.0]), linear(2, [479.88, -1.54])]).unwrap();
        let t = traj(356.03, 0, 357.76, 0);
        assert_eq!(apply_regime(&regime, &t.history(2).unwrap()).unwrap(), 0);
        assert_eq!(regime.rule(2).describe(), "treat if L2 < 311.61");
    }

    #[test]
    fn zero_contrast_breaks_tie_to_zero() {
        let regime = Regime::new(vec![linear(1, [0.0, 0.0]), linear(2, [0.0, 0.0])]).unwrap();
        let t = traj(1.0, 1, 2.0, 1);
        assert_eq!(apply_regime(&regime, &t.history(1).unwrap()).unwrap(), 0);
    }

    #[test]
    fn threshold_definition() {
        let s = schema();
        let r = Rule::threshold(&s, 2, "L2", 360.0, Direction::Below).unwrap();
        let t = traj(300.0, 0, 355.0, 0);
        assert_eq!(r.action(&t.history(2).unwrap()), 1);
        let t = traj(300.0, 0, 360.0, 0);
        assert_eq!(r.action(&t.history(2).unwrap()), 0);
    }

    #[test]
    fn consistency_cases() {
        let s = schema();
        let regime = Regime::new(vec![
            Rule::threshold(&s, 1, "L1", 250.0, Direction::Below).unwrap(),
            Rule::threshold(&s, 2, "L2", 360.0, Direction::Below).unwrap(),
        ])
        .unwrap();
        // rule gives (1, 0)
        assert_eq!(
            consistency_index(&regime, &traj(200.0, 1, 400.0, 0)).unwrap(),
            ConsistencyIndex::Infinity
        );
        // rule gives 0 at stage 1, observed 1
        assert_eq!(
            consistency_index(&regime, &traj(300.0, 1, 400.0, 0)).unwrap(),
            ConsistencyIndex::Stage(1)
        );
        // stage 1 matches (0), stage 2 rule gives 1, observed 0
        assert_eq!(
            consistency_index(&regime, &traj(300.0, 0, 300.0, 0)).unwrap(),
            ConsistencyIndex::Stage(2)
        );
    }

    #[test]
    fn regime_rule_order_checked() {
        assert!(Regime::new(vec![linear(2, [1.0, 0.0]), linear(1, [1.0, 0.0])]).is_err());
        let s = schema();
        let f = FeatureMap::parse("1,L1", 1, &s).unwrap();
        assert!(matches!(
            Rule::linear_sign(f, vec![1.0]),
            Err(DtrError::Shape(_))
        ));
    }

    #[test]
    fn spec_round_trip() {
        let s = schema();
        let regime = Regime::new(vec![
            linear(1, [250.0, -1.0]),
            Rule::threshold(&s, 2, "L2", 360.0, Direction::Below).unwrap(),
        ])
        .unwrap();
        let spec = regime.to_spec(&s);
        let json = spec.to_json().unwrap();
        let back = RegimeSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
        let resolved = back.resolve(&s).unwrap();
        let t = traj(200.0, 1, 300.0, 1);
        for j in 1..=2 {
            let h = t.history(j).unwrap();
            assert_eq!(
                apply_regime(&resolved, &h).unwrap(),
                apply_regime(&regime, &h).unwrap()
            );
        }
        let three = Schema::new(vec![vec!["a".into()], vec!["b".into()], vec!["c".into()]]).unwrap();
        assert!(matches!(spec.resolve(&three), Err(DtrError::Shape(_))));
    }
}
