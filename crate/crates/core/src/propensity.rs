//! Per-stage logistic propensity models with clipping.

use serde::Serialize;

use crate::data::{Dataset, History, Trajectory};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::stats::{expit, logistic_fit, DesignMatrix, LogisticOptions};

/// Fitted propensities are clipped to `[CLIP, 1 − CLIP]`.
pub const PROPENSITY_CLIP: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct PropensityModel {
    #[serde(skip)]
    features: FeatureMap,
    pub stage: usize,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Fitting rows whose propensity was clipped from below / above.
    pub clipped_low: usize,
    pub clipped_high: usize,
}

impl PropensityModel {
    pub fn fit(data: &Dataset, features: &FeatureMap, rows: &[usize], opts: LogisticOptions) -> Result<Self> {
        let j = features.stage();
        let x = stage_design(data, features, rows)?;
        let a: Vec<u8> = rows.iter().map(|&i| data.get(i).action(j)).collect();
        let fit = logistic_fit(&x, &a, opts).map_err(|e| e.at_stage(j))?;
        let mut model = Self {
            features: features.clone(),
            stage: j,
            labels: features.labels(),
            coefficients: fit.coefficients,
            converged: fit.converged,
            iterations: fit.iterations,
            clipped_low: 0,
            clipped_high: 0,
        };
        for &i in rows {
            let raw = model.raw(&data.get(i).history(j)?);
            if raw < PROPENSITY_CLIP {
                model.clipped_low += 1;
            } else if raw > 1.0 - PROPENSITY_CLIP {
                model.clipped_high += 1;
            }
        }
        Ok(model)
    }

    /// A model that returns the same probability for every history.
    pub fn constant(stage: usize, p: f64) -> Self {
        let logit = (p / (1.0 - p)).ln();
        Self {
            features: FeatureMap::empty(stage),
            stage,
            labels: vec!["1".into()],
            coefficients: vec![logit],
            converged: true,
            iterations: 0,
            clipped_low: 0,
            clipped_high: 0,
        }
    }

    fn raw(&self, h: &History<'_>) -> f64 {
        if self.features.is_empty() {
            return expit(self.coefficients.first().copied().unwrap_or(0.0));
        }
        expit(self.features.dot(h, &self.coefficients))
    }

    /// Clipped `P(A_j = 1 | H_j = h)`.
    pub fn predict(&self, h: &History<'_>) -> f64 {
        self.raw(h).clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
}

/// One propensity model per stage.
#[derive(Debug, Clone, Serialize)]
pub struct PropensityFits {
    pub models: Vec<PropensityModel>,
}

impl PropensityFits {
    pub fn fit(data: &Dataset, features: &[FeatureMap], opts: LogisticOptions) -> Result<Self> {
        if features.len() != data.stage_count() {
            return Err(DtrError::Shape(format!(
                "{} propensity models for {} stages",
                features.len(),
                data.stage_count()
            )));
        }
        let models = features
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let j = k + 1;
                if f.stage() != j {
                    return Err(DtrError::Shape(format!(
                        "propensity map {j} is built for stage {}",
                        f.stage()
                    )));
                }
                PropensityModel::fit(data, f, &data.reaching(j), opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn stage_count(&self) -> usize {
        self.models.len()
    }

    pub fn model(&self, j: usize) -> &PropensityModel {
        &self.models[j - 1]
    }

    /// Clipped propensity of trajectory `t` at stage `j`.
    pub fn pi(&self, t: &Trajectory, j: usize) -> Result<f64> {
        Ok(self.model(j).predict(&t.history(j)?))
    }

    pub fn clipped_total(&self) -> usize {
        self.models.iter().map(|m| m.clipped_low + m.clipped_high).sum()
    }
}

/// Design matrix of `features` evaluated at the stage histories of `rows`.
pub fn stage_design(data: &Dataset, features: &FeatureMap, rows: &[usize]) -> Result<DesignMatrix> {
    let j = features.stage();
    let mut out = Vec::with_capacity(rows.len());
    for &i in rows {
        out.push(features.eval(&data.get(i).history(j)?));
    }
    DesignMatrix::from_rows(&out, features.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, StageRecord};

    #[test]
    fn intercept_model_recovers_treated_fraction() {
        let schema = Schema::new(vec![vec!["X".into()]]).unwrap();
        let trajs = (0..10)
            .map(|i| Trajectory::new(vec![StageRecord::new(vec![i as f64], u8::from(i < 3))], 0.0).unwrap())
            .collect();
        let data = Dataset::new(schema.clone(), trajs).unwrap();
        let f = FeatureMap::parse("1", 1, &schema).unwrap();
        let fits = PropensityFits::fit(&data, &[f], LogisticOptions::default()).unwrap();
        let p = fits.pi(data.get(0), 1).unwrap();
        assert!((p - 0.3).abs() < 1e-8);
        assert_eq!(fits.clipped_total(), 0);
    }
}
