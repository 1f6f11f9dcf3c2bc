//! Method dispatch from a declarative fit configuration.

use serde::{Deserialize, Serialize};

use crate::ctree::{causal_tree_fit, CtreeStageSpec, TreeHyperparams};
use crate::data::{Dataset, Schema};
use crate::direct::{
    bowl_fit, require_q_models, search_optimal_regime, Estimator, KernelChoice, OwlSpec, RegimeClass,
    SearchResult,
};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::fit::{FitResult, MethodTag};
use crate::indirect::{a_learning_fit, q_learning_fit, StageModelSpec, Variant};
use crate::propensity::PropensityFits;
use crate::regime::{Direction, Regime};
use crate::stats::LogisticOptions;

/// Formulas for one stage. Which ones are needed depends on the method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageFormulas {
    pub contrast: Option<String>,
    pub tfree: Option<String>,
    pub propensity: Option<String>,
    /// Tree splitting or decision-function inputs.
    pub features: Option<String>,
    /// Covariate thresholded by the threshold search class.
    pub threshold: Option<String>,
    /// Inputs of the linear search class; defaults to `contrast`.
    pub regime: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Threshold,
    /// Unit-norm linear rules on the `regime` (else `contrast`) features.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub class: Option<ClassKind>,
    pub direction: Direction,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            class: None,
            direction: Direction::Below,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BowlConfig {
    pub kernel: String,
    pub gamma: Option<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for BowlConfig {
    fn default() -> Self {
        Self {
            kernel: "linear".into(),
            gamma: None,
            c_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            folds: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub stages: Vec<StageFormulas>,
    pub tree: TreeHyperparams,
    pub bowl: BowlConfig,
    pub search: SearchConfig,
    /// Seed for trees and cross-validation folds.
    pub seed: u64,
}

fn stage(contrast: &str, tfree: &str, propensity: &str, features: &str, threshold: Option<&str>) -> StageFormulas {
    StageFormulas {
        contrast: Some(contrast.into()),
        tfree: Some(tfree.into()),
        propensity: Some(propensity.into()),
        features: Some(features.into()),
        threshold: threshold.map(Into::into),
        regime: None,
    }
}

impl FitConfig {
    /// Model specification used for the two-stage benchmark: linear
    /// contrasts in the current covariate, correct propensity models.
    pub fn case1() -> Self {
        Self {
            stages: vec![
                stage("1,L1", "1,L1", "1,L1", "0,L1", Some("L1")),
                stage("1,L2", "1,L1,A1,L1:A1,L2", "1,L2", "0,L2", Some("L2")),
            ],
            search: SearchConfig {
                class: Some(ClassKind::Threshold),
                direction: Direction::Below,
            },
            ..Self::default()
        }
    }

    /// Model specification used for the three-stage benchmark: contrasts
    /// and treatment-free terms linear in the whole history, correct
    /// propensity models, linear search rules in the stage biomarkers.
    pub fn case2() -> Self {
        const H: [&str; 3] = [
            "1,W,L11,L12",
            "1,W,L11,L12,A1,L21,L22",
            "1,W,L11,L12,A1,L21,L22,A2,L31,L32",
        ];
        let mut stages = vec![
            stage(H[0], H[0], "1,W", "0,L11,L12", None),
            stage(H[1], H[1], "1,L21,L22", "0,L21,L22", None),
            stage(H[2], H[2], "1,L31", "0,L31,L32", None),
        ];
        for (j, s) in stages.iter_mut().enumerate() {
            s.regime = Some(format!("1,L{0}1,L{0}2", j + 1));
        }
        Self {
            stages,
            search: SearchConfig {
                class: Some(ClassKind::Linear),
                direction: Direction::Below,
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DtrError::Config(e.to_string()))
    }

    fn check_stages(&self, schema: &Schema) -> Result<()> {
        if self.stages.len() != schema.stage_count() {
            return Err(DtrError::Config(format!(
                "configuration has {} [[stages]] blocks, data has {} stages",
                self.stages.len(),
                schema.stage_count()
            )));
        }
        Ok(())
    }

    fn formula<'a>(&'a self, j: usize, field: &str, pick: impl Fn(&'a StageFormulas) -> &'a Option<String>) -> Result<&'a str> {
        pick(&self.stages[j - 1])
            .as_deref()
            .ok_or_else(|| DtrError::Config(format!("stage {j} needs a `{field}` formula")))
    }

    pub fn model_specs(&self, schema: &Schema) -> Result<Vec<StageModelSpec>> {
        self.check_stages(schema)?;
        (1..=schema.stage_count())
            .map(|j| {
                StageModelSpec::parse(
                    schema,
                    j,
                    self.formula(j, "contrast", |s| &s.contrast)?,
                    self.formula(j, "tfree", |s| &s.tfree)?,
                    self.stages[j - 1].propensity.as_deref(),
                )
            })
            .collect()
    }

    pub fn propensity_maps(&self, schema: &Schema) -> Result<Vec<FeatureMap>> {
        self.check_stages(schema)?;
        (1..=schema.stage_count())
            .map(|j| FeatureMap::parse(self.formula(j, "propensity", |s| &s.propensity)?, j, schema))
            .collect()
    }

    fn feature_maps(&self, schema: &Schema) -> Result<Vec<FeatureMap>> {
        self.check_stages(schema)?;
        (1..=schema.stage_count())
            .map(|j| FeatureMap::parse(self.formula(j, "features", |s| &s.features)?, j, schema))
            .collect()
    }

    fn regime_class(&self, schema: &Schema) -> Result<RegimeClass> {
        self.check_stages(schema)?;
        match self.search.class {
            None => Err(DtrError::Config(
                "direct search needs a [search] block with a `class` (threshold or linear)".into(),
            )),
            Some(ClassKind::Threshold) => {
                let cols = (1..=schema.stage_count())
                    .map(|j| self.formula(j, "threshold", |s| &s.threshold))
                    .collect::<Result<Vec<_>>>()?;
                RegimeClass::threshold(schema, &cols, self.search.direction)
            }
            Some(ClassKind::Linear) => {
                let maps = (1..=schema.stage_count())
                    .map(|j| {
                        let f = match self.stages[j - 1].regime.as_deref() {
                            Some(f) => f,
                            None => self.formula(j, "contrast", |s| &s.contrast)?,
                        };
                        FeatureMap::parse(f, j, schema)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(RegimeClass::NormalizedLinear(maps))
            }
        }
    }

    fn owl_spec(&self, schema: &Schema) -> Result<OwlSpec> {
        let kernel = match self.bowl.kernel.as_str() {
            "linear" => KernelChoice::Linear,
            "rbf" => KernelChoice::Rbf { gamma: self.bowl.gamma },
            other => {
                return Err(DtrError::Config(format!(
                    "unknown kernel `{other}` (expected linear or rbf)"
                )))
            }
        };
        let mut spec = OwlSpec::new(self.feature_maps(schema)?, kernel);
        spec.c_grid = self.bowl.c_grid.clone();
        spec.folds = self.bowl.folds;
        spec.seed = self.seed;
        Ok(spec)
    }
}

/// A fitted regime together with whatever the method produced.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub method: MethodTag,
    pub regime: Regime,
    pub parameter_labels: Vec<String>,
    pub parameters: Vec<f64>,
    pub fit: Option<FitResult>,
    pub search: Option<SearchResult>,
    pub propensity: Option<PropensityFits>,
}

impl MethodOutput {
    fn from_fit(fit: FitResult) -> Self {
        let labels = fit
            .stages
            .iter()
            .flat_map(|s| s.psi_labels.iter().map(move |l| format!("psi{}[{l}]", s.stage)))
            .collect();
        Self {
            method: fit.method,
            regime: fit.regime.clone(),
            parameter_labels: labels,
            parameters: fit.psi(),
            fit: Some(fit),
            search: None,
            propensity: None,
        }
    }

    pub fn clipped_propensities(&self) -> usize {
        self.fit.as_ref().map_or(0, |f| f.clipped_propensities)
            + self.propensity.as_ref().map_or(0, PropensityFits::clipped_total)
    }
}

/// Fits `method` on `data` as described by `cfg`.
pub fn fit_method(method: MethodTag, data: &Dataset, cfg: &FitConfig) -> Result<MethodOutput> {
    let schema = data.schema();
    match method {
        MethodTag::Q => Ok(MethodOutput::from_fit(q_learning_fit(data, &cfg.model_specs(schema)?)?)),
        MethodTag::A1 | MethodTag::A2 | MethodTag::A3 | MethodTag::A4 | MethodTag::Dwols => {
            let variant = Variant::from_tag(method).expect("A-learning tag");
            Ok(MethodOutput::from_fit(a_learning_fit(data, &cfg.model_specs(schema)?, variant)?))
        }
        MethodTag::Ctree => {
            let props = cfg.propensity_maps(schema)?;
            let specs: Vec<CtreeStageSpec> = cfg
                .feature_maps(schema)?
                .into_iter()
                .zip(props)
                .enumerate()
                .map(|(k, (features, propensity))| CtreeStageSpec {
                    features,
                    propensity,
                    hyper: TreeHyperparams {
                        seed: cfg.tree.seed.wrapping_add(cfg.seed).wrapping_add(k as u64),
                        ..cfg.tree
                    },
                })
                .collect();
            Ok(MethodOutput::from_fit(causal_tree_fit(data, &specs)?))
        }
        MethodTag::Ipwe | MethodTag::Aipwe => {
            let class = cfg.regime_class(schema)?;
            let props = PropensityFits::fit(data, &cfg.propensity_maps(schema)?, LogisticOptions::default())?;
            let (estimator, q_fit) = if method == MethodTag::Aipwe {
                let q = q_learning_fit(data, &cfg.model_specs(schema)?)?;
                require_q_models(&q)?;
                (Estimator::Aipwe, Some(q))
            } else {
                (Estimator::Ipwe, None)
            };
            let aug = q_fit.as_ref().map(|q| q as &dyn crate::direct::AugmentationModel);
            let result = search_optimal_regime(data, &class, estimator, &props, aug, None)?;
            let labels = match &class {
                RegimeClass::Threshold(stages) => stages.iter().map(|s| format!("tau[{}]", s.column)).collect(),
                RegimeClass::NormalizedLinear(maps) => maps
                    .iter()
                    .flat_map(|m| m.labels().into_iter().map(move |l| format!("psi{}[{l}]", m.stage())))
                    .collect(),
                RegimeClass::Enumeration(_) => vec!["index".to_string()],
            };
            Ok(MethodOutput {
                method,
                regime: result.regime.clone(),
                parameter_labels: labels,
                parameters: result.parameters.clone(),
                fit: None,
                search: Some(result),
                propensity: Some(props),
            })
        }
        MethodTag::Bowl => {
            let props = PropensityFits::fit(data, &cfg.propensity_maps(schema)?, LogisticOptions::default())?;
            let fit = bowl_fit(data, &cfg.owl_spec(schema)?, &props)?;
            let mut out = MethodOutput::from_fit(fit);
            out.propensity = None;
            Ok(out)
        }
    }
}

/// Normalized-linear coefficient blocks of a method's parameter vector, for
/// bootstrap sign alignment.
pub fn alignment_segments(out: &MethodOutput) -> Vec<std::ops::Range<usize>> {
    match (&out.search, out.method) {
        (Some(_), MethodTag::Ipwe | MethodTag::Aipwe) if out.parameter_labels.iter().any(|l| l.starts_with("psi")) => {
            let mut segs = Vec::new();
            let mut start = 0;
            for k in 1..=out.parameter_labels.len() {
                let stage_of = |i: usize| out.parameter_labels[i].split('[').next().map(str::to_owned);
                if k == out.parameter_labels.len() || stage_of(k) != stage_of(start) {
                    segs.push(start..k);
                    start = k;
                }
            }
            segs
        }
        _ => Vec::new(),
    }
}
