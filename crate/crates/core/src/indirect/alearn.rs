use serde::{Deserialize, Serialize};

use super::{check_specs, scale_rows, stage_blocks, StageModelSpec};
use crate::data::Dataset;
use crate::error::{DtrError, Result};
use crate::fit::{FitResult, MethodTag, QModel, StageFit};
use crate::propensity::PropensityModel;
use crate::regime::{Regime, Rule};
use crate::stats::{ols_fit, solve_joint_linear_ee, DesignMatrix, LogisticOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Estimating equations with a null treatment-free model.
    A1,
    /// OLS on `[A r, π r]`.
    A2,
    /// Estimating equations solved jointly with a linear treatment-free model.
    A3,
    /// OLS on `[A r, π r, D]`.
    A4,
    /// Weighted OLS on `[A r, D]` with weights `|A − π|`.
    Dwols,
}

impl Variant {
    pub fn tag(self) -> MethodTag {
        match self {
            Variant::A1 => MethodTag::A1,
            Variant::A2 => MethodTag::A2,
            Variant::A3 => MethodTag::A3,
            Variant::A4 => MethodTag::A4,
            Variant::Dwols => MethodTag::Dwols,
        }
    }

    pub fn from_tag(tag: MethodTag) -> Option<Self> {
        Some(match tag {
            MethodTag::A1 => Variant::A1,
            MethodTag::A2 => Variant::A2,
            MethodTag::A3 => Variant::A3,
            MethodTag::A4 => Variant::A4,
            MethodTag::Dwols => Variant::Dwols,
            _ => return None,
        })
    }
}

struct StageEstimate {
    psi: Vec<f64>,
    xi_labels: Vec<String>,
    xi: Vec<f64>,
    condition: f64,
}

fn estimate_stage(
    variant: Variant,
    data: &Dataset,
    spec: &StageModelSpec,
    rows: &[usize],
    pi: &[f64],
    y: &[f64],
) -> Result<StageEstimate> {
    let b = stage_blocks(data, spec, rows)?;
    let p = b.r.ncols();
    let split = |coef: Vec<f64>, labels: &[String], condition: f64| StageEstimate {
        psi: coef[..p].to_vec(),
        xi_labels: labels[p..].to_vec(),
        xi: coef[p..].to_vec(),
        condition,
    };
    match variant {
        Variant::A1 | Variant::A3 => {
            let empty = DesignMatrix::from_rows(&vec![Vec::new(); rows.len()], Vec::new())?;
            let d = if variant == Variant::A3 { &b.d } else { &empty };
            let sol = solve_joint_linear_ee(&b.r, &b.a, d, pi, y)?;
            Ok(StageEstimate {
                psi: sol.psi,
                xi_labels: d.labels().to_vec(),
                xi: sol.xi,
                condition: sol.condition,
            })
        }
        Variant::A2 | Variant::A4 => {
            let pr = scale_rows(&b.r, pi, "pi")?;
            let x = if variant == Variant::A4 {
                DesignMatrix::hstack(&[&b.ar, &pr, &b.d])?
            } else {
                DesignMatrix::hstack(&[&b.ar, &pr])?
            };
            let fit = ols_fit(&x, y, None)?;
            Ok(split(fit.coefficients, x.labels(), fit.condition))
        }
        Variant::Dwols => {
            let w: Vec<f64> = b
                .a
                .iter()
                .zip(pi)
                .map(|(&a, p)| (f64::from(a) - p).abs())
                .collect();
            let x = DesignMatrix::hstack(&[&b.ar, &b.d])?;
            let fit = ols_fit(&x, y, Some(&w))?;
            Ok(split(fit.coefficients, x.labels(), fit.condition))
        }
    }
}

/// A-learning: backward g-estimation of linear contrasts with value update
/// `V̂_j = V̂_{j+1} + (I{C_j > 0} − A_j) C_j`.
pub fn a_learning_fit(data: &Dataset, specs: &[StageModelSpec], variant: Variant) -> Result<FitResult> {
    a_learning_fit_with(data, specs, variant, LogisticOptions::default())
}

pub fn a_learning_fit_with(
    data: &Dataset,
    specs: &[StageModelSpec],
    variant: Variant,
    opts: LogisticOptions,
) -> Result<FitResult> {
    check_specs(data, specs)?;
    let k = data.stage_count();
    let mut v = data.outcomes();
    let mut columns = vec![Vec::new(); k];
    let mut stages = Vec::with_capacity(k);
    let mut rules = Vec::with_capacity(k);
    for j in (1..=k).rev() {
        let spec = &specs[j - 1];
        let pmap = spec.propensity.as_ref().ok_or_else(|| {
            DtrError::Config(format!("A-learning needs a stage-{j} propensity formula"))
        })?;
        let rows = data.reaching(j);
        let prop = PropensityModel::fit(data, pmap, &rows, opts)?;
        let mut pi = Vec::with_capacity(rows.len());
        for &i in &rows {
            pi.push(prop.predict(&data.get(i).history(j)?));
        }
        let y: Vec<f64> = rows.iter().map(|&i| v[i]).collect();
        let est = estimate_stage(variant, data, spec, &rows, &pi, &y).map_err(|e| e.at_stage(j))?;
        for &i in &rows {
            let t = data.get(i);
            let c = spec.contrast.dot(&t.history(j)?, &est.psi);
            let opt = if c > 0.0 { 1.0 } else { 0.0 };
            v[i] += (opt - f64::from(t.action(j))) * c;
        }
        columns[j - 1] = v.clone();
        let rule = Rule::linear_sign(spec.contrast.clone(), est.psi.clone())?;
        // only dWOLS estimates a treatment-free outcome model
        let q_model = (variant == Variant::Dwols).then(|| QModel {
            contrast: spec.contrast.clone(),
            psi: est.psi.clone(),
            treatment_free: spec.treatment_free.clone(),
            xi: est.xi.clone(),
        });
        stages.push(StageFit {
            stage: j,
            rows: rows.len(),
            psi_labels: spec.contrast.labels(),
            psi: est.psi,
            xi_labels: est.xi_labels,
            xi: est.xi,
            propensity: Some(prop),
            condition: Some(est.condition),
            rule: rule.describe(),
            hinge: None,
            q_model,
        });
        rules.push(rule);
    }
    stages.reverse();
    rules.reverse();
    Ok(FitResult::assemble(
        variant.tag(),
        Regime::new(rules)?,
        stages,
        columns,
        data,
        Vec::new(),
    ))
}
