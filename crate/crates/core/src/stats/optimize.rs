//! Derivative-free maximization: Nelder–Mead, grid search with polish, and
//! seeded multi-start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DtrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NelderMead,
    GridThenNelderMead,
    MultiStart,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Start point for Nelder–Mead; also the first start of multi-start.
    pub start: Vec<f64>,
    /// Per-dimension grid points; the search grid is their Cartesian product.
    pub grid: Vec<Vec<f64>>,
    /// Box used to draw multi-start points.
    pub bounds: Vec<(f64, f64)>,
    /// Number of random starts in addition to `start`.
    pub starts: usize,
    pub max_evaluations: usize,
    /// Initial simplex edge per dimension; zero entries get a default.
    pub initial_step: Vec<f64>,
    pub x_tol: f64,
    pub f_tol: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn nelder_mead(start: Vec<f64>) -> Self {
        Self {
            method: Method::NelderMead,
            start,
            grid: Vec::new(),
            bounds: Vec::new(),
            starts: 0,
            max_evaluations: 2000,
            initial_step: Vec::new(),
            x_tol: 1e-8,
            f_tol: 1e-10,
            seed: 0,
        }
    }

    pub fn grid_then_nelder_mead(grid: Vec<Vec<f64>>) -> Self {
        Self {
            method: Method::GridThenNelderMead,
            ..Self::nelder_mead(Vec::new())
        }
        .with_grid(grid)
    }

    pub fn multi_start(start: Vec<f64>, bounds: Vec<(f64, f64)>, starts: usize, seed: u64) -> Self {
        Self {
            method: Method::MultiStart,
            bounds,
            starts,
            seed,
            ..Self::nelder_mead(start)
        }
    }

    fn with_grid(mut self, grid: Vec<Vec<f64>>) -> Self {
        self.grid = grid;
        self
    }

    fn validate(&self) -> Result<usize> {
        if self.max_evaluations == 0 {
            return Err(DtrError::Config("optimizer needs at least one evaluation".into()));
        }
        let dim = match self.method {
            Method::GridThenNelderMead => {
                if self.grid.is_empty() || self.grid.iter().any(Vec::is_empty) {
                    return Err(DtrError::Config("grid search needs a nonempty grid".into()));
                }
                if self.grid.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(DtrError::Config("grid points must be finite".into()));
                }
                self.grid.len()
            }
            Method::NelderMead => self.start.len(),
            Method::MultiStart => {
                if self.bounds.len() != self.start.len() {
                    return Err(DtrError::Config(format!(
                        "multi-start has {} bounds for a {}-dimensional start",
                        self.bounds.len(),
                        self.start.len()
                    )));
                }
                if self
                    .bounds
                    .iter()
                    .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
                {
                    return Err(DtrError::Config("multi-start bounds must be finite".into()));
                }
                self.start.len()
            }
        };
        if dim == 0 {
            return Err(DtrError::Config("optimizer needs at least one dimension".into()));
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

fn checked<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DtrError::NonFinite {
            point: x.to_vec(),
            value: v,
        })
    }
}

/// Maximizes `f`. The returned value is the best evaluated value; later
/// points replace earlier ones only on strict improvement.
pub fn maximize<F>(f: F, config: &OptimizerConfig) -> Result<OptimizeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = config.validate()?;
    match config.method {
        Method::NelderMead => nelder_mead(&f, &config.start, config, config.max_evaluations),
        Method::GridThenNelderMead => {
            let points = cartesian(&config.grid);
            let values = points
                .par_iter()
                .map(|x| checked(&f, x))
                .collect::<Result<Vec<f64>>>()?;
            let mut best = 0;
            for (i, v) in values.iter().enumerate() {
                if *v > values[best] {
                    best = i;
                }
            }
            let used = points.len();
            let mut result = OptimizeResult {
                argmax: points[best].clone(),
                value: values[best],
                evaluations: used,
            };
            let remaining = config.max_evaluations.saturating_sub(used);
            if remaining > dim {
                let mut cfg = config.clone();
                if cfg.initial_step.iter().all(|s| *s == 0.0) {
                    cfg.initial_step = config.grid.iter().map(|g| grid_spacing(g)).collect();
                }
                let polish = nelder_mead(&f, &points[best], &cfg, remaining)?;
                result.evaluations += polish.evaluations;
                if polish.value > result.value {
                    result.argmax = polish.argmax;
                    result.value = polish.value;
                }
            }
            Ok(result)
        }
        Method::MultiStart => {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            let mut starts = vec![config.start.clone()];
            for _ in 0..config.starts {
                starts.push(
                    config
                        .bounds
                        .iter()
                        .map(|&(lo, hi)| if lo < hi { rng.random_range(lo..hi) } else { lo })
                        .collect(),
                );
            }
            let budget = (config.max_evaluations / starts.len()).max(dim + 2);
            let runs = starts
                .par_iter()
                .map(|s| nelder_mead(&f, s, config, budget))
                .collect::<Result<Vec<_>>>()?;
            let evaluations = runs.iter().map(|r| r.evaluations).sum();
            let mut best = runs[0].clone();
            for r in &runs[1..] {
                if r.value > best.value {
                    best = r.clone();
                }
            }
            best.evaluations = evaluations;
            Ok(best)
        }
    }
}

fn grid_spacing(g: &[f64]) -> f64 {
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g.len() > 1 && hi > lo {
        (hi - lo) / (g.len() - 1) as f64
    } else {
        0.0
    }
}

fn cartesian(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in grid {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    config: &OptimizerConfig,
    budget: usize,
) -> Result<OptimizeResult> {
    let dim = start.len();
    let mut evaluations = 0usize;
    // minimize g = −f
    let eval = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        checked(f, x).map(|v| -v)
    };
    let f0 = eval(start, &mut evaluations)?;
    let mut best = (start.to_vec(), f0);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f0)];
    for i in 0..dim {
        if evaluations >= budget {
            break;
        }
        let mut x = start.to_vec();
        let step = match config.initial_step.get(i) {
            Some(&s) if s != 0.0 => s,
            _ if x[i] != 0.0 => 0.05 * x[i].abs(),
            _ => 0.00025,
        };
        x[i] += step;
        let v = eval(&x, &mut evaluations)?;
        if v < best.1 {
            best = (x.clone(), v);
        }
        simplex.push((x, v));
    }
    if simplex.len() < dim + 1 {
        return Ok(OptimizeResult {
            argmax: best.0,
            value: -best.1,
            evaluations,
        });
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evaluations < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_spread = simplex[dim].1 - simplex[0].1;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= config.f_tol && x_spread <= config.x_tol {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = toward(-alpha);
        let fr = eval(&xr, &mut evaluations)?;
        let mut record = |x: &Vec<f64>, v: f64| {
            if v < best.1 {
                best = (x.clone(), v);
            }
        };
        record(&xr, fr);
        if fr < simplex[0].1 {
            if evaluations >= budget {
                simplex[dim] = (xr, fr);
                break;
            }
            let xe = toward(-gamma);
            let fe = eval(&xe, &mut evaluations)?;
            record(&xe, fe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        if evaluations >= budget {
            break;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = toward(-rho);
            let fc = eval(&xc, &mut evaluations)?;
            (xc, fc)
        } else {
            let xc = toward(rho);
            let fc = eval(&xc, &mut evaluations)?;
            (xc, fc)
        };
        record(&xc, fc);
        if fc < worst.1.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let x0 = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evaluations >= budget {
                break;
            }
            let x: Vec<f64> = x0
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            let v = eval(&x, &mut evaluations)?;
            record(&x, v);
            *vertex = (x, v);
        }
    }
    Ok(OptimizeResult {
        argmax: best.0,
        value: -best.1,
        evaluations,
    })
}
