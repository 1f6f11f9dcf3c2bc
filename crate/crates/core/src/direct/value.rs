//! Inverse-probability-weighted value estimators.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, History};
use crate::error::{DtrError, Result};
use crate::fit::FitResult;
use crate::propensity::PropensityFits;
use crate::regime::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ipwe,
    Aipwe,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub estimator: Estimator,
    /// Trajectories consistent with the regime at every reached stage.
    pub consistent: usize,
    /// The augmentation part of the value (zero for IPWE).
    pub augmentation: f64,
    pub warning: Option<String>,
}

/// Outcome-model predictions `Q_j(h, a)` used to augment the IPWE.
pub trait AugmentationModel {
    fn q_value(&self, stage: usize, h: &History<'_>, a: u8) -> f64;
}

/// `Q ≡ 0`.
pub struct ZeroAugmentation;

impl AugmentationModel for ZeroAugmentation {
    fn q_value(&self, _stage: usize, _h: &History<'_>, _a: u8) -> f64 {
        0.0
    }
}

impl AugmentationModel for FitResult {
    fn q_value(&self, stage: usize, h: &History<'_>, a: u8) -> f64 {
        self.stage(stage)
            .q_model
            .as_ref()
            .expect("augmentation needs a fit with outcome models")
            .value(h, a)
    }
}

/// Per-row, per-stage quantities that do not depend on the regime.
#[derive(Debug, Clone)]
pub struct ValueCache {
    y: Vec<f64>,
    actions: Vec<Vec<u8>>,
    pi: Vec<Vec<f64>>,
    /// `(Q_j(h, 0), Q_j(h, 1))` per row and stage.
    q: Option<Vec<Vec<(f64, f64)>>>,
}

impl ValueCache {
    pub fn new(
        data: &Dataset,
        props: &PropensityFits,
        aug: Option<&dyn AugmentationModel>,
    ) -> Result<Self> {
        if props.stage_count() != data.stage_count() {
            return Err(DtrError::Shape(format!(
                "{} propensity models for {} stages",
                props.stage_count(),
                data.stage_count()
            )));
        }
        let mut actions = Vec::with_capacity(data.len());
        let mut pi = Vec::with_capacity(data.len());
        let mut q = aug.map(|_| Vec::with_capacity(data.len()));
        for t in data.trajectories() {
            let k = t.stage_count();
            let mut a_row = Vec::with_capacity(k);
            let mut p_row = Vec::with_capacity(k);
            let mut q_row = Vec::with_capacity(k);
            for j in 1..=k {
                let h = t.history(j)?;
                a_row.push(t.action(j));
                p_row.push(props.model(j).predict(&h));
                if let Some(m) = aug {
                    let (q0, q1) = (m.q_value(j, &h, 0), m.q_value(j, &h, 1));
                    if !(q0.is_finite() && q1.is_finite()) {
                        return Err(DtrError::Data(format!("non-finite Q prediction at stage {j}")));
                    }
                    q_row.push((q0, q1));
                }
            }
            actions.push(a_row);
            pi.push(p_row);
            if let Some(q) = q.as_mut() {
                q.push(q_row);
            }
        }
        Ok(Self {
            y: data.outcomes(),
            actions,
            pi,
            q,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn stages_of(&self, i: usize) -> usize {
        self.actions[i].len()
    }

    /// Value of the regime whose stage-`j` decision for row `i` is
    /// `decide(i, j)`. `decide` is only called while the row is consistent.
    pub fn evaluate<F>(&self, estimator: Estimator, mut decide: F) -> ValueEstimate
    where
        F: FnMut(usize, usize) -> u8,
    {
        let augment = estimator == Estimator::Aipwe;
        let n = self.len();
        let (mut ipw, mut aug, mut consistent) = (0.0, 0.0, 0usize);
        for i in 0..n {
            let mut m = 1.0;
            let mut followed = true;
            for j in 1..=self.actions[i].len() {
                let d = decide(i, j);
                let p = self.pi[i][j - 1];
                // probability of deviating from d at stage j
                let lambda = if d == 1 { 1.0 - p } else { p };
                m *= 1.0 - lambda;
                let deviates = self.actions[i][j - 1] != d;
                if augment {
                    if let Some(q) = &self.q {
                        let (q0, q1) = q[i][j - 1];
                        let qd = if d == 1 { q1 } else { q0 };
                        let ind = if deviates { 1.0 } else { 0.0 };
                        aug += (ind - lambda) / m * qd;
                    }
                }
                if deviates {
                    followed = false;
                    break;
                }
            }
            if followed {
                consistent += 1;
                ipw += self.y[i] / m;
            }
        }
        let nf = n as f64;
        ValueEstimate {
            value: (ipw + aug) / nf,
            estimator,
            consistent,
            augmentation: aug / nf,
            warning: (consistent == 0)
                .then(|| "no trajectory is consistent with the regime".to_string()),
        }
    }
}

fn regime_decider<'a>(
    data: &'a Dataset,
    regime: &'a Regime,
) -> Result<impl FnMut(usize, usize) -> u8 + 'a> {
    if regime.stage_count() != data.stage_count() {
        return Err(DtrError::Shape(format!(
            "stage mismatch: regime has {} rules, data has {} stages",
            regime.stage_count(),
            data.stage_count()
        )));
    }
    Ok(move |i: usize, j: usize| {
        let t = data.get(i);
        regime
            .rule(j)
            .action(&t.history(j).expect("stage within trajectory"))
    })
}

pub fn ipwe_value(data: &Dataset, regime: &Regime, props: &PropensityFits) -> Result<ValueEstimate> {
    let cache = ValueCache::new(data, props, None)?;
    Ok(cache.evaluate(Estimator::Ipwe, regime_decider(data, regime)?))
}

pub fn aipwe_value(
    data: &Dataset,
    regime: &Regime,
    props: &PropensityFits,
    q_fit: &dyn AugmentationModel,
) -> Result<ValueEstimate> {
    let cache = ValueCache::new(data, props, Some(q_fit))?;
    Ok(cache.evaluate(Estimator::Aipwe, regime_decider(data, regime)?))
}

/// Checks that `fit` carries outcome models for every stage.
pub fn require_q_models(fit: &FitResult) -> Result<()> {
    if fit.has_q_models() {
        Ok(())
    } else {
        Err(DtrError::Config(format!(
            "augmentation needs outcome models; `{}` fits do not provide them",
            fit.method
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, StageRecord, Trajectory};
    use crate::features::FeatureMap;
    use crate::propensity::PropensityModel;
    use crate::regime::{Direction, Rule};

    fn two_stage(rows: &[(f64, u8, f64, u8, f64)]) -> Dataset {
        let schema = Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap();
        let trajs = rows
            .iter()
            .map(|&(l1, a1, l2, a2, y)| {
                Trajectory::new(
                    vec![StageRecord::new(vec![l1], a1), StageRecord::new(vec![l2], a2)],
                    y,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(schema, trajs).unwrap()
    }

    fn half(k: usize) -> PropensityFits {
        PropensityFits {
            models: (1..=k).map(|j| PropensityModel::constant(j, 0.5)).collect(),
        }
    }

    #[test]
    fn two_consistent_rows_by_hand() {
        let data = two_stage(&[(1.0, 1, 1.0, 1, 10.0), (1.0, 1, 1.0, 1, 20.0)]);
        let s = data.schema();
        let regime = Regime::new(vec![
            Rule::threshold(s, 1, "L1", 5.0, Direction::Below).unwrap(),
            Rule::threshold(s, 2, "L2", 5.0, Direction::Below).unwrap(),
        ])
        .unwrap();
        let v = ipwe_value(&data, &regime, &half(2)).unwrap();
        assert!((v.value - 60.0).abs() < 1e-12);
        assert_eq!(v.consistent, 2);
    }

    #[test]
    fn nobody_consistent_gives_zero_with_warning() {
        let data = two_stage(&[(1.0, 0, 1.0, 1, 10.0), (1.0, 0, 1.0, 0, 20.0)]);
        let s = data.schema();
        let regime = Regime::new(vec![
            Rule::threshold(s, 1, "L1", 5.0, Direction::Below).unwrap(),
            Rule::threshold(s, 2, "L2", 5.0, Direction::Below).unwrap(),
        ])
        .unwrap();
        let v = ipwe_value(&data, &regime, &half(2)).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.warning.is_some());
    }

    #[test]
    fn horvitz_thompson_single_stage() {
        let schema = Schema::new(vec![vec!["X".into()]]).unwrap();
        let rows = [(1u8, 4.0), (0, 2.0), (1, 6.0), (0, 1.0), (0, 3.0)];
        let trajs = rows
            .iter()
            .map(|&(a, y)| Trajectory::new(vec![StageRecord::new(vec![0.0], a)], y).unwrap())
            .collect();
        let data = Dataset::new(schema.clone(), trajs).unwrap();
        let props = PropensityFits {
            models: vec![PropensityModel::constant(1, 0.4)],
        };
        let always = Regime::new(vec![Rule::linear_sign(
            FeatureMap::parse("1", 1, &schema).unwrap(),
            vec![1.0],
        )
        .unwrap()])
        .unwrap();
        let v = ipwe_value(&data, &always, &props).unwrap();
        // (4 + 6) / 0.4 / 5 = mean of treated Y (5) times treated share (0.4) / 0.4
        assert!((v.value - (4.0 + 6.0) / 0.4 / 5.0).abs() < 1e-12);
        assert!((v.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_augmentation_equals_ipwe() {
        let data = two_stage(&[
            (1.0, 1, 2.0, 0, 10.0),
            (7.0, 0, 3.0, 1, 20.0),
            (2.0, 1, 8.0, 0, 5.0),
            (9.0, 0, 1.0, 1, 7.0),
        ]);
        let s = data.schema();
        let regime = Regime::new(vec![
            Rule::threshold(s, 1, "L1", 5.0, Direction::Below).unwrap(),
            Rule::threshold(s, 2, "L2", 5.0, Direction::Below).unwrap(),
        ])
        .unwrap();
        let props = PropensityFits {
            models: vec![PropensityModel::constant(1, 0.3), PropensityModel::constant(2, 0.6)],
        };
        let a = ipwe_value(&data, &regime, &props).unwrap();
        let b = aipwe_value(&data, &regime, &props, &ZeroAugmentation).unwrap();
        assert!((a.value - b.value).abs() <= 1e-12);
    }
}
