//! Backward-induction estimators: Q-learning and A-learning.

mod alearn;
mod blip;
mod qlearn;

pub use alearn::{a_learning_fit, a_learning_fit_with, Variant};
pub use blip::{blip_to_regret, regret_to_blip};
pub use qlearn::q_learning_fit;

use crate::data::{Dataset, Schema};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::propensity::stage_design;
use crate::stats::DesignMatrix;

/// Per-stage model: contrast `r_j`, treatment-free `D_j` and propensity maps.
#[derive(Debug, Clone)]
pub struct StageModelSpec {
    pub contrast: FeatureMap,
    pub treatment_free: FeatureMap,
    pub propensity: Option<FeatureMap>,
}

impl StageModelSpec {
    pub fn parse(
        schema: &Schema,
        stage: usize,
        contrast: &str,
        treatment_free: &str,
        propensity: Option<&str>,
    ) -> Result<Self> {
        Ok(Self {
            contrast: FeatureMap::parse(contrast, stage, schema)?,
            treatment_free: FeatureMap::parse(treatment_free, stage, schema)?,
            propensity: propensity
                .map(|p| FeatureMap::parse(p, stage, schema))
                .transpose()?,
        })
    }

    pub fn stage(&self) -> usize {
        self.contrast.stage()
    }
}

pub(crate) fn check_specs(data: &Dataset, specs: &[StageModelSpec]) -> Result<()> {
    if specs.len() != data.stage_count() {
        return Err(DtrError::Shape(format!(
            "{} stage specifications for {} stages",
            specs.len(),
            data.stage_count()
        )));
    }
    for (k, s) in specs.iter().enumerate() {
        let j = k + 1;
        let stages = [
            Some(s.contrast.stage()),
            Some(s.treatment_free.stage()),
            s.propensity.as_ref().map(FeatureMap::stage),
        ];
        if stages.iter().flatten().any(|&st| st != j) {
            return Err(DtrError::Shape(format!(
                "specification {j} contains maps built for another stage"
            )));
        }
        if s.contrast.is_empty() {
            return Err(DtrError::Config(format!("stage {j} contrast map is empty")));
        }
    }
    Ok(())
}

/// Stage design blocks over `rows`: contrast `R`, `A·R`, treatment-free `D`,
/// and the actions.
pub(crate) struct StageBlocks {
    pub r: DesignMatrix,
    pub ar: DesignMatrix,
    pub d: DesignMatrix,
    pub a: Vec<u8>,
}

pub(crate) fn stage_blocks(data: &Dataset, spec: &StageModelSpec, rows: &[usize]) -> Result<StageBlocks> {
    let j = spec.stage();
    let r = stage_design(data, &spec.contrast, rows)?;
    let d = stage_design(data, &spec.treatment_free, rows)?;
    let a: Vec<u8> = rows.iter().map(|&i| data.get(i).action(j)).collect();
    let ar_values = nalgebra::DMatrix::from_fn(r.nrows(), r.ncols(), |i, c| {
        f64::from(a[i]) * r.values()[(i, c)]
    });
    let ar_labels = spec
        .contrast
        .labels()
        .iter()
        .map(|l| {
            if l == "1" {
                format!("A{j}")
            } else {
                format!("A{j}:{l}")
            }
        })
        .collect();
    let ar = DesignMatrix::new(ar_values, ar_labels)?;
    Ok(StageBlocks { r, ar, d, a })
}

/// Scales every row of `m` by the matching entry of `s` and relabels.
pub(crate) fn scale_rows(m: &DesignMatrix, s: &[f64], prefix: &str) -> Result<DesignMatrix> {
    let values = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, c| s[i] * m.values()[(i, c)]);
    let labels = m
        .labels()
        .iter()
        .map(|l| {
            if l == "1" {
                prefix.to_string()
            } else {
                format!("{prefix}:{l}")
            }
        })
        .collect();
    DesignMatrix::new(values, labels)
}
