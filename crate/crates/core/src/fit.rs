//! Common result type of every estimator.

use serde::{Serialize, Serializer};

use crate::data::{Dataset, History};
use crate::features::FeatureMap;
use crate::propensity::PropensityModel;
use crate::regime::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Q,
    A1,
    A2,
    A3,
    A4,
    Dwols,
    Ctree,
    Ipwe,
    Aipwe,
    Bowl,
}

impl MethodTag {
    pub const ALL: [MethodTag; 10] = [
        MethodTag::Q,
        MethodTag::A1,
        MethodTag::A2,
        MethodTag::A3,
        MethodTag::A4,
        MethodTag::Dwols,
        MethodTag::Ctree,
        MethodTag::Ipwe,
        MethodTag::Aipwe,
        MethodTag::Bowl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodTag::Q => "q",
            MethodTag::A1 => "a1",
            MethodTag::A2 => "a2",
            MethodTag::A3 => "a3",
            MethodTag::A4 => "a4",
            MethodTag::Dwols => "dwols",
            MethodTag::Ctree => "ctree",
            MethodTag::Ipwe => "ipwe",
            MethodTag::Aipwe => "aipwe",
            MethodTag::Bowl => "bowl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s.to_ascii_lowercase())
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Linear model `Q_j(h, a) = m(h)ᵀξ + a·r(h)ᵀψ` kept for augmentation.
#[derive(Debug, Clone)]
pub struct QModel {
    pub contrast: FeatureMap,
    pub psi: Vec<f64>,
    pub treatment_free: FeatureMap,
    pub xi: Vec<f64>,
}

impl QModel {
    pub fn value(&self, h: &History<'_>, a: u8) -> f64 {
        let m = self.treatment_free.dot(h, &self.xi);
        if a == 1 {
            m + self.contrast.dot(h, &self.psi)
        } else {
            m
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageFit {
    pub stage: usize,
    /// Rows that reached this stage and entered the fit.
    pub rows: usize,
    pub psi_labels: Vec<String>,
    pub psi: Vec<f64>,
    pub xi_labels: Vec<String>,
    pub xi: Vec<f64>,
    pub propensity: Option<PropensityModel>,
    pub condition: Option<f64>,
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hinge: Option<HingeDiagnostics>,
    #[serde(skip)]
    pub q_model: Option<QModel>,
}

/// Weighted hinge-loss diagnostics of one BOWL stage.
#[derive(Debug, Clone, Serialize)]
pub struct HingeDiagnostics {
    /// Selected tuning constant `c_{j,n}`.
    pub c: f64,
    pub objective: f64,
    /// Objective of the zero decision function.
    pub zero_objective: f64,
    /// Amount subtracted from the outcomes before weighting.
    pub outcome_shift: f64,
    pub cv_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub method: MethodTag,
    #[serde(serialize_with = "skip_regime")]
    pub regime: Regime,
    pub stages: Vec<StageFit>,
    /// `value_columns[j-1][i]` is `V̂_j` for trajectory `i`.
    #[serde(skip)]
    pub value_columns: Vec<Vec<f64>>,
    /// Mean of each value column followed by the mean outcome.
    pub value_means: Vec<f64>,
    pub clipped_propensities: usize,
    pub warnings: Vec<String>,
}

fn skip_regime<S: Serializer>(regime: &Regime, s: S) -> Result<S::Ok, S::Error> {
    let rules: Vec<String> = regime.rules().iter().map(|r| r.describe()).collect();
    rules.serialize(s)
}

impl FitResult {
    pub(crate) fn assemble(
        method: MethodTag,
        regime: Regime,
        stages: Vec<StageFit>,
        value_columns: Vec<Vec<f64>>,
        data: &Dataset,
        warnings: Vec<String>,
    ) -> Self {
        let mut value_means: Vec<f64> = value_columns.iter().map(|c| mean(c)).collect();
        value_means.push(mean(&data.outcomes()));
        let clipped_propensities = stages
            .iter()
            .filter_map(|s| s.propensity.as_ref())
            .map(|p| p.clipped_low + p.clipped_high)
            .sum();
        Self {
            method,
            regime,
            stages,
            value_columns,
            value_means,
            clipped_propensities,
            warnings,
        }
    }

    pub fn stage(&self, j: usize) -> &StageFit {
        &self.stages[j - 1]
    }

    /// Concatenated contrast coefficients `(ψ_1, …, ψ_K)`.
    pub fn psi(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.psi.iter().copied()).collect()
    }

    pub fn has_q_models(&self) -> bool {
        self.stages.iter().all(|s| s.q_model.is_some())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
