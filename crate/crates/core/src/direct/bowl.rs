//! Backward outcome-weighted learning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{solve_weighted_svm, DecisionFunction, Kernel};
use crate::data::Dataset;
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::fit::{FitResult, HingeDiagnostics, MethodTag, StageFit};
use crate::propensity::PropensityFits;
use crate::regime::{Regime, Rule};

/// Rows used for the median-distance bandwidth heuristic.
const BANDWIDTH_ROWS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    /// `gamma = None` picks `1 / (2 median²)` over pairwise distances.
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct OwlSpec {
    /// Decision-function inputs per stage.
    pub features: Vec<FeatureMap>,
    pub kernel: KernelChoice,
    /// Multipliers `g`; the stage penalty is `c_{j,n} = g / n_j`.
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl OwlSpec {
    pub fn new(features: Vec<FeatureMap>, kernel: KernelChoice) -> Self {
        Self {
            features,
            kernel,
            c_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            folds: 4,
            seed: 0,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.features.len() != k {
            return Err(DtrError::Shape(format!(
                "{} decision feature maps for {k} stages",
                self.features.len()
            )));
        }
        if let Some((j, _)) = self.features.iter().enumerate().find(|(j, f)| f.stage() != j + 1) {
            return Err(DtrError::Shape(format!(
                "decision feature map {} is built for another stage",
                j + 1
            )));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(DtrError::Config("c grid must be nonempty and positive".into()));
        }
        if self.folds < 2 {
            return Err(DtrError::Config("cross-validation needs at least 2 folds".into()));
        }
        if let KernelChoice::Rbf { gamma: Some(g) } = self.kernel {
            if !(g.is_finite() && g > 0.0) {
                return Err(DtrError::Config("rbf gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

fn standardization(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for c in 0..p {
        let m = x.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n;
        center[c] = m;
        if var > 0.0 {
            scale[c] = var.sqrt();
        }
    }
    (center, scale)
}

fn median_gamma(z: &[Vec<f64>]) -> f64 {
    let m = z.len().min(BANDWIDTH_ROWS);
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for k in i + 1..m {
            d.push(z[i].iter().zip(&z[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let med = if d.is_empty() { 0.0 } else { d[d.len() / 2] };
    if med > 0.0 {
        1.0 / (2.0 * med * med)
    } else {
        1.0
    }
}

/// Weighted share of held-out rows whose label agrees with the fitted sign.
fn held_out_value(
    z: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    train: &[usize],
    test: &[usize],
    g: f64,
    kernel: &Kernel,
    seed: u64,
) -> Result<f64> {
    let xs: Vec<Vec<f64>> = train.iter().map(|&i| z[i].clone()).collect();
    let ys: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let cs: Vec<f64> = train.iter().map(|&i| w[i] / (2.0 * g)).collect();
    let sol = solve_weighted_svm(&xs, &ys, &cs, kernel, seed)?;
    let total: f64 = test.iter().map(|&i| w[i]).sum();
    let hit: f64 = test
        .iter()
        .filter(|&&i| y[i] * sol.decision(kernel, &xs, &z[i]) > 0.0)
        .map(|&i| w[i])
        .sum();
    Ok(if total > 0.0 { hit / total } else { 0.0 })
}

/// Fits one weighted hinge-loss rule per stage, backwards, keeping at
/// stage `j` only trajectories that follow the rules already fitted for
/// later stages.
pub fn bowl_fit(data: &Dataset, spec: &OwlSpec, props: &PropensityFits) -> Result<FitResult> {
    let k = data.stage_count();
    spec.validate(k)?;
    if props.stage_count() != k {
        return Err(DtrError::Shape(format!(
            "{} propensity models for {k} stages",
            props.stage_count()
        )));
    }
    let n = data.len();
    // P̂(A_k | H_k) per row and reached stage
    let mut p_obs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for t in data.trajectories() {
        let mut row = Vec::with_capacity(t.stage_count());
        for j in 1..=t.stage_count() {
            let p = props.model(j).predict(&t.history(j)?);
            row.push(if t.action(j) == 1 { p } else { 1.0 - p });
        }
        p_obs.push(row);
    }
    // consistent[i]: row follows every rule fitted so far
    let mut consistent = vec![true; n];
    let mut stages = Vec::with_capacity(k);
    let mut rules: Vec<Rule> = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    for j in (1..=k).rev() {
        let fmap = &spec.features[j - 1];
        let idx: Vec<usize> = data
            .reaching(j)
            .into_iter()
            .filter(|&i| consistent[i])
            .collect();
        if idx.is_empty() {
            return Err(DtrError::Degenerate(
                "no trajectory follows the later-stage rules; a larger sample is needed".into(),
            )
            .at_stage(j));
        }
        let x: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| Ok(fmap.eval(&data.get(i).history(j)?)))
            .collect::<Result<_>>()?;
        let y: Vec<f64> = idx.iter().map(|&i| 2.0 * f64::from(data.get(i).action(j)) - 1.0).collect();
        let outcomes: Vec<f64> = idx.iter().map(|&i| data.get(i).outcome()).collect();
        let shift = outcomes.iter().copied().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = idx
            .iter()
            .zip(&outcomes)
            .map(|(&i, yv)| (yv - shift) / p_obs[i][j - 1..].iter().product::<f64>())
            .collect();
        let wmean = w.iter().sum::<f64>() / w.len() as f64;
        if wmean > 0.0 {
            w.iter_mut().for_each(|v| *v /= wmean);
        }
        let (center, scale) = standardization(&x);
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().zip(center.iter().zip(&scale)).map(|(v, (c, s))| (v - c) / s).collect())
            .collect();
        let kernel = match spec.kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
            KernelChoice::Rbf { gamma: None } => Kernel::Rbf { gamma: median_gamma(&z) },
        };
        let stage_seed = spec.seed.wrapping_mul(31).wrapping_add(j as u64);
        let one_sign = y.iter().all(|v| *v == y[0]);
        let (function, hinge) = if one_sign || wmean <= 0.0 {
            let sign = if one_sign { y[0] } else { -1.0 };
            warnings.push(format!(
                "stage {j}: every weighted label agrees; using the constant rule {}",
                if sign > 0.0 { "treat" } else { "do not treat" }
            ));
            (DecisionFunction::constant(fmap.clone(), sign), None)
        } else {
            let m = idx.len();
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut ChaCha20Rng::seed_from_u64(stage_seed));
            let folds = spec.folds.min(m);
            let fold_of: Vec<usize> = {
                let mut f = vec![0; m];
                for (pos, &r) in order.iter().enumerate() {
                    f[r] = pos % folds;
                }
                f
            };
            let cv_values: Vec<f64> = if folds < 2 {
                vec![0.0; spec.c_grid.len()]
            } else {
                let tasks: Vec<(usize, usize)> = (0..spec.c_grid.len())
                    .flat_map(|c| (0..folds).map(move |f| (c, f)))
                    .collect();
                let scores = tasks
                    .par_iter()
                    .map(|&(c, f)| {
                        let train: Vec<usize> = (0..m).filter(|&r| fold_of[r] != f).collect();
                        let test: Vec<usize> = (0..m).filter(|&r| fold_of[r] == f).collect();
                        held_out_value(&z, &y, &w, &train, &test, spec.c_grid[c], &kernel, stage_seed)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                scores
                    .chunks(folds)
                    .map(|s| s.iter().sum::<f64>() / folds as f64)
                    .collect()
            };
            let best = cv_values
                .iter()
                .enumerate()
                .fold(0, |b, (c, v)| if *v > cv_values[b] { c } else { b });
            let g = spec.c_grid[best];
            let cs: Vec<f64> = w.iter().map(|v| v / (2.0 * g)).collect();
            let sol = solve_weighted_svm(&z, &y, &cs, &kernel, stage_seed)?;
            let diag = HingeDiagnostics {
                c: g / m as f64,
                objective: sol.objective.min(sol.zero_objective),
                zero_objective: sol.zero_objective,
                outcome_shift: shift,
                cv_values,
            };
            let f = if sol.objective > sol.zero_objective {
                warnings.push(format!("stage {j}: solver did not improve on the zero function"));
                DecisionFunction::constant(fmap.clone(), 0.0)
            } else {
                DecisionFunction::new(fmap.clone(), kernel, center, scale, &z, &sol)
            };
            (f, Some(diag))
        };
        let (psi_labels, psi) = match function.linear_weights() {
            Some(wt) => {
                // report on the raw covariate scale
                let spec_f = function.to_spec();
                let raw: Vec<f64> = wt.iter().zip(&spec_f.scale).map(|(a, s)| a / s).collect();
                let b = function.bias() - raw.iter().zip(&spec_f.center).map(|(a, c)| a * c).sum::<f64>();
                let mut labels = vec!["bias".to_string()];
                labels.extend(fmap.labels());
                let mut coef = vec![b];
                coef.extend(raw);
                (labels, coef)
            }
            None => (Vec::new(), Vec::new()),
        };
        let rule = Rule::DecisionFn(function);
        for &i in &data.reaching(j) {
            if consistent[i] {
                let t = data.get(i);
                consistent[i] = rule.action(&t.history(j)?) == t.action(j);
            }
        }
        stages.push(StageFit {
            stage: j,
            rows: idx.len(),
            psi_labels,
            psi,
            xi_labels: Vec::new(),
            xi: Vec::new(),
            propensity: Some(props.model(j).clone()),
            condition: None,
            rule: rule.describe(),
            hinge,
            q_model: None,
        });
        rules.push(rule);
    }
    stages.reverse();
    rules.reverse();
    Ok(FitResult::assemble(
        MethodTag::Bowl,
        Regime::new(rules)?,
        stages,
        Vec::new(),
        data,
        warnings,
    ))
}
