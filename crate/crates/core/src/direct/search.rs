//! Direct search for the regime with the largest estimated value.

use serde::Serialize;

use super::value::{AugmentationModel, Estimator, ValueCache, ValueEstimate};
use crate::data::{Dataset, Schema, VarRef};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;
use crate::propensity::PropensityFits;
use crate::regime::{Direction, Regime, Rule};
use crate::stats::{maximize, OptimizerConfig};

/// Grid points per dimension used by the default threshold search.
pub const GRID_POINTS: usize = 41;

#[derive(Debug, Clone)]
pub struct ThresholdStage {
    pub column: String,
    pub variable: VarRef,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
pub enum RegimeClass {
    /// `I{x_j < τ_j}` (or `>`) with one cutoff per stage.
    Threshold(Vec<ThresholdStage>),
    /// `I{ψ_jᵀ r_j > 0}` with `‖ψ_j‖ = 1`.
    NormalizedLinear(Vec<FeatureMap>),
    /// A finite list of candidate regimes.
    Enumeration(Vec<Regime>),
}

impl RegimeClass {
    pub fn threshold(schema: &Schema, columns: &[&str], direction: Direction) -> Result<Self> {
        if columns.len() != schema.stage_count() {
            return Err(DtrError::Shape(format!(
                "stage mismatch: {} threshold columns for {} stages",
                columns.len(),
                schema.stage_count()
            )));
        }
        let stages = columns
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let variable = schema
                    .lookup(c)
                    .ok_or_else(|| DtrError::Config(format!("unknown threshold column `{c}`")))?;
                if variable.available_from() > k + 1 {
                    return Err(DtrError::Config(format!(
                        "`{c}` is not available at stage {}",
                        k + 1
                    )));
                }
                Ok(ThresholdStage {
                    column: c.to_string(),
                    variable,
                    direction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegimeClass::Threshold(stages))
    }

    fn stage_count(&self) -> usize {
        match self {
            RegimeClass::Threshold(s) => s.len(),
            RegimeClass::NormalizedLinear(f) => f.len(),
            RegimeClass::Enumeration(r) => r.first().map_or(0, Regime::stage_count),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    #[serde(skip)]
    pub regime: Regime,
    /// Thresholds or concatenated unit-norm coefficients of the winner.
    pub parameters: Vec<f64>,
    pub value: ValueEstimate,
    pub evaluations: usize,
}

/// Candidate cutoffs for one threshold stage: midpoints between sorted
/// distinct values plus one point beyond each end, thinned to
/// [`GRID_POINTS`] evenly spaced candidates when there are more.
pub fn threshold_candidates(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.is_empty() {
        return vec![0.0];
    }
    let mut cands = Vec::with_capacity(v.len() + 1);
    let span = (v[v.len() - 1] - v[0]).abs().max(1.0);
    cands.push(v[0] - 0.01 * span);
    for w in v.windows(2) {
        cands.push(0.5 * (w[0] + w[1]));
    }
    cands.push(v[v.len() - 1] + 0.01 * span);
    if cands.len() <= GRID_POINTS {
        return cands;
    }
    (0..GRID_POINTS)
        .map(|g| {
            let pos = g as f64 * (cands.len() - 1) as f64 / (GRID_POINTS - 1) as f64;
            cands[pos.round() as usize]
        })
        .collect()
}

fn threshold_decide(x: f64, cutoff: f64, direction: Direction) -> u8 {
    u8::from(match direction {
        Direction::Below => x < cutoff,
        Direction::Above => x > cutoff,
    })
}

/// Searches `class` for the regime maximizing the IPWE or AIPWE value.
/// `optimizer` overrides the default search; enumeration classes are always
/// evaluated exhaustively.
pub fn search_optimal_regime(
    data: &Dataset,
    class: &RegimeClass,
    estimator: Estimator,
    props: &PropensityFits,
    augmentation: Option<&dyn AugmentationModel>,
    optimizer: Option<&OptimizerConfig>,
) -> Result<SearchResult> {
    let k = data.stage_count();
    if class.stage_count() != k {
        return Err(DtrError::Shape(format!(
            "stage mismatch: regime class has {} stages, data has {k}",
            class.stage_count()
        )));
    }
    let aug = match estimator {
        Estimator::Ipwe => None,
        Estimator::Aipwe => Some(augmentation.ok_or_else(|| {
            DtrError::Config("AIPWE search needs an augmentation model".into())
        })?),
    };
    let cache = ValueCache::new(data, props, aug)?;
    match class {
        RegimeClass::Enumeration(regimes) => {
            if regimes.is_empty() {
                return Err(DtrError::Config("enumeration class is empty".into()));
            }
            let mut best: Option<(usize, ValueEstimate)> = None;
            for (r, regime) in regimes.iter().enumerate() {
                if regime.stage_count() != k {
                    return Err(DtrError::Shape("stage mismatch in enumeration class".into()));
                }
                let v = cache.evaluate(estimator, |i, j| {
                    regime.rule(j).action(&data.get(i).history(j).expect("reached stage"))
                });
                if best.as_ref().is_none_or(|(_, b)| v.value > b.value) {
                    best = Some((r, v));
                }
            }
            let (r, value) = best.expect("nonempty");
            Ok(SearchResult {
                regime: regimes[r].clone(),
                parameters: vec![r as f64],
                value,
                evaluations: regimes.len(),
            })
        }
        RegimeClass::Threshold(stages) => {
            // x[i][j-1]: threshold covariate of row i at stage j
            let x: Vec<Vec<f64>> = data
                .trajectories()
                .iter()
                .map(|t| {
                    (1..=t.stage_count())
                        .map(|j| {
                            t.history(j)
                                .map(|h| h.value(&stages[j - 1].variable))
                                .unwrap_or(f64::NAN)
                        })
                        .collect()
                })
                .collect();
            let objective = |tau: &[f64]| {
                cache
                    .evaluate(estimator, |i, j| {
                        threshold_decide(x[i][j - 1], tau[j - 1], stages[j - 1].direction)
                    })
                    .value
            };
            let config = match optimizer {
                Some(c) => c.clone(),
                None => {
                    let grid = (1..=k)
                        .map(|j| {
                            let vals: Vec<f64> = x.iter().filter_map(|r| r.get(j - 1).copied()).collect();
                            threshold_candidates(&vals)
                        })
                        .collect();
                    let mut c = OptimizerConfig::grid_then_nelder_mead(grid);
                    c.max_evaluations = 20_000;
                    c.x_tol = 1e-3;
                    c.f_tol = 0.0;
                    c
                }
            };
            let opt = maximize(objective, &config)?;
            let rules = stages
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    Ok(Rule::Threshold {
                        stage: k + 1,
                        variable: s.variable,
                        label: s.column.clone(),
                        cutoff: opt.argmax[k],
                        direction: s.direction,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let regime = Regime::new(rules)?;
            let value = cache.evaluate(estimator, |i, j| {
                threshold_decide(x[i][j - 1], opt.argmax[j - 1], stages[j - 1].direction)
            });
            Ok(SearchResult {
                regime,
                parameters: opt.argmax,
                value,
                evaluations: opt.evaluations,
            })
        }
        RegimeClass::NormalizedLinear(maps) => {
            let dims: Vec<usize> = maps.iter().map(FeatureMap::dim).collect();
            let offsets: Vec<usize> = dims
                .iter()
                .scan(0, |acc, d| {
                    let o = *acc;
                    *acc += d;
                    Some(o)
                })
                .collect();
            // r[i][j-1]: stage feature vector of row i
            let r: Vec<Vec<Vec<f64>>> = data
                .trajectories()
                .iter()
                .map(|t| {
                    (1..=t.stage_count())
                        .map(|j| maps[j - 1].eval(&t.history(j).expect("reached stage")))
                        .collect()
                })
                .collect();
            let decide = |psi: &[f64], i: usize, j: usize| -> u8 {
                let o = offsets[j - 1];
                let s: f64 = r[i][j - 1]
                    .iter()
                    .zip(&psi[o..o + dims[j - 1]])
                    .map(|(a, b)| a * b)
                    .sum();
                u8::from(s > 0.0)
            };
            let objective = |psi: &[f64]| cache.evaluate(estimator, |i, j| decide(psi, i, j)).value;
            let total: usize = dims.iter().sum();
            let config = match optimizer {
                Some(c) => c.clone(),
                None => {
                    let mut start = vec![0.0; total];
                    for &o in &offsets {
                        start[o] = 1.0;
                    }
                    let mut c = OptimizerConfig::multi_start(
                        start,
                        vec![(-1.0, 1.0); total],
                        19,
                        0,
                    );
                    c.max_evaluations = 20_000;
                    c.initial_step = vec![0.25; total];
                    c
                }
            };
            let opt = maximize(objective, &config)?;
            let mut psi = opt.argmax.clone();
            for (j, &d) in dims.iter().enumerate() {
                let seg = &mut psi[offsets[j]..offsets[j] + d];
                let norm = seg.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    seg.iter_mut().for_each(|v| *v /= norm);
                }
            }
            let rules = maps
                .iter()
                .enumerate()
                .map(|(j, m)| Rule::linear_sign(m.clone(), psi[offsets[j]..offsets[j] + dims[j]].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let value = cache.evaluate(estimator, |i, j| decide(&psi, i, j));
            Ok(SearchResult {
                regime: Regime::new(rules)?,
                parameters: psi,
                value,
                evaluations: opt.evaluations,
            })
        }
    }
}
