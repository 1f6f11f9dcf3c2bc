use super::{check_specs, stage_blocks, StageModelSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::fit::{FitResult, MethodTag, QModel, StageFit};
use crate::regime::{Regime, Rule};
use crate::stats::{ols_fit, DesignMatrix};

/// Q-learning by backward OLS of the current response on `[A_j r_j, D_j]`.
pub fn q_learning_fit(data: &Dataset, specs: &[StageModelSpec]) -> Result<FitResult> {
    check_specs(data, specs)?;
    let k = data.stage_count();
    let n = data.len();
    let mut v = data.outcomes();
    let mut columns = vec![Vec::new(); k];
    let mut stages = Vec::with_capacity(k);
    let mut rules = Vec::with_capacity(k);
    for j in (1..=k).rev() {
        let spec = &specs[j - 1];
        let rows = data.reaching(j);
        let blocks = stage_blocks(data, spec, &rows).map_err(|e| e.at_stage(j))?;
        let x = DesignMatrix::hstack(&[&blocks.ar, &blocks.d])?;
        let y: Vec<f64> = rows.iter().map(|&i| v[i]).collect();
        let fit = ols_fit(&x, &y, None).map_err(|e| e.at_stage(j))?;
        let p = blocks.r.ncols();
        let psi = fit.coefficients[..p].to_vec();
        let xi = fit.coefficients[p..].to_vec();
        for (row, &i) in rows.iter().enumerate() {
            let c: f64 = blocks.r.values().row(row).iter().zip(&psi).map(|(a, b)| a * b).sum();
            let m: f64 = blocks.d.values().row(row).iter().zip(&xi).map(|(a, b)| a * b).sum();
            v[i] = if c > 0.0 { c + m } else { m };
        }
        columns[j - 1] = v.clone();
        let rule = Rule::linear_sign(spec.contrast.clone(), psi.clone())?;
        stages.push(StageFit {
            stage: j,
            rows: rows.len(),
            psi_labels: spec.contrast.labels(),
            psi: psi.clone(),
            xi_labels: spec.treatment_free.labels(),
            xi: xi.clone(),
            propensity: None,
            condition: Some(fit.condition),
            rule: rule.describe(),
            hinge: None,
            q_model: Some(QModel {
                contrast: spec.contrast.clone(),
                psi,
                treatment_free: spec.treatment_free.clone(),
                xi,
            }),
        });
        rules.push(rule);
    }
    debug_assert!(columns.iter().all(|c| c.len() == n));
    stages.reverse();
    rules.reverse();
    Ok(FitResult::assemble(
        MethodTag::Q,
        Regime::new(rules)?,
        stages,
        columns,
        data,
        Vec::new(),
    ))
}
