//! Weighted hinge-loss classification by dual coordinate descent.
//!
//! Solves `min ½‖f‖² + Σ C_i (1 − y_i f(x_i))₊` with the bias folded into
//! the feature space (a constant column, or `+1` on the kernel).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{History, Schema};
use crate::error::{DtrError, Result};
use crate::features::FeatureMap;

/// Relative duality-gap target.
pub const GAP_TOL: f64 = 1e-4;
const MAX_EPOCHS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(−γ‖x − x'‖²)`.
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Rbf { .. } => "rbf",
        }
    }
}

/// Solution of one weighted hinge-loss problem on standardized inputs.
#[derive(Debug, Clone)]
pub struct SvmSolution {
    /// `α_i y_i` for each training row.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Primal weights for the linear kernel.
    pub weights: Option<Vec<f64>>,
    pub objective: f64,
    pub zero_objective: f64,
    pub epochs: usize,
}

impl SvmSolution {
    pub fn decision(&self, kernel: &Kernel, support: &[Vec<f64>], z: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.bias,
            None => {
                support
                    .iter()
                    .zip(&self.coef)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(s, c)| c * kernel.eval(s, z))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }
}

/// Dual coordinate descent. `y` holds labels in `{−1, +1}` and `c` the
/// per-row box bounds.
pub fn solve_weighted_svm(x: &[Vec<f64>], y: &[f64], c: &[f64], kernel: &Kernel, seed: u64) -> Result<SvmSolution> {
    let n = x.len();
    if y.len() != n || c.len() != n {
        return Err(DtrError::Shape("svm inputs disagree in length".into()));
    }
    if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(DtrError::Data("svm weights must be finite and nonnegative".into()));
    }
    let zero_objective: f64 = c.iter().sum();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut alpha = vec![0.0; n];
    let initial_gap = zero_objective.max(f64::MIN_POSITIVE);
    match kernel {
        Kernel::Linear => {
            let p = x.first().map_or(0, Vec::len);
            // augmented weights: last entry multiplies the constant 1
            let mut w = vec![0.0; p + 1];
            let qii: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
            let mut epochs = 0;
            let margin = |w: &[f64], i: usize| -> f64 {
                x[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[p]
            };
            let mut objective = zero_objective;
            while epochs < MAX_EPOCHS {
                epochs += 1;
                order.shuffle(&mut rng);
                for &i in &order {
                    if c[i] == 0.0 {
                        continue;
                    }
                    let g = y[i] * margin(&w, i) - 1.0;
                    let new = (alpha[i] - g / qii[i]).clamp(0.0, c[i]);
                    let delta = new - alpha[i];
                    if delta != 0.0 {
                        alpha[i] = new;
                        let s = delta * y[i];
                        for (wk, xk) in w.iter_mut().zip(&x[i]) {
                            *wk += s * xk;
                        }
                        w[p] += s;
                    }
                }
                let wn: f64 = w.iter().map(|v| v * v).sum();
                let hinge: f64 = (0..n).map(|i| c[i] * (1.0 - y[i] * margin(&w, i)).max(0.0)).sum();
                objective = 0.5 * wn + hinge;
                let dual = alpha.iter().sum::<f64>() - 0.5 * wn;
                if objective - dual <= GAP_TOL * initial_gap {
                    break;
                }
            }
            let coef = alpha.iter().zip(y).map(|(a, b)| a * b).collect();
            let bias = w[p];
            w.truncate(p);
            Ok(SvmSolution {
                coef,
                bias,
                weights: Some(w),
                objective,
                zero_objective,
                epochs,
            })
        }
        Kernel::Rbf { .. } => {
            // Gram matrix with the bias term folded in
            let mut q = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(&x[i], &x[j]) + 1.0;
                    q[i * n + j] = v;
                    q[j * n + i] = v;
                }
            }
            // f[i] = Σ_j α_j y_j K'(x_j, x_i)
            let mut f = vec![0.0; n];
            let mut epochs = 0;
            let mut objective = zero_objective;
            while epochs < MAX_EPOCHS {
                epochs += 1;
                order.shuffle(&mut rng);
                for &i in &order {
                    if c[i] == 0.0 {
                        continue;
                    }
                    let g = y[i] * f[i] - 1.0;
                    let new = (alpha[i] - g / q[i * n + i]).clamp(0.0, c[i]);
                    let delta = new - alpha[i];
                    if delta != 0.0 {
                        alpha[i] = new;
                        let s = delta * y[i];
                        let row = &q[i * n..(i + 1) * n];
                        for (fj, qij) in f.iter_mut().zip(row) {
                            *fj += s * qij;
                        }
                    }
                }
                let wn: f64 = (0..n).map(|i| alpha[i] * y[i] * f[i]).sum();
                let hinge: f64 = (0..n).map(|i| c[i] * (1.0 - y[i] * f[i]).max(0.0)).sum();
                objective = 0.5 * wn + hinge;
                let dual = alpha.iter().sum::<f64>() - 0.5 * wn;
                if objective - dual <= GAP_TOL * initial_gap {
                    break;
                }
            }
            let coef: Vec<f64> = alpha.iter().zip(y).map(|(a, b)| a * b).collect();
            let bias = coef.iter().sum();
            Ok(SvmSolution {
                coef,
                bias,
                weights: None,
                objective,
                zero_objective,
                epochs,
            })
        }
    }
}

/// Fitted stage decision function `φ_j`; treat iff `φ_j(h) > 0`.
#[derive(Debug, Clone)]
pub struct DecisionFunction {
    features: FeatureMap,
    kernel: Kernel,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Standardized support points with nonzero coefficient.
    support: Vec<Vec<f64>>,
    coef: Vec<f64>,
    weights: Option<Vec<f64>>,
    bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFunctionSpec {
    pub stage: usize,
    pub features: String,
    pub kernel: Kernel,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub support: Vec<Vec<f64>>,
    #[serde(default)]
    pub coef: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub bias: f64,
}

impl DecisionFunction {
    pub(crate) fn new(
        features: FeatureMap,
        kernel: Kernel,
        center: Vec<f64>,
        scale: Vec<f64>,
        x: &[Vec<f64>],
        sol: &SvmSolution,
    ) -> Self {
        let (support, coef) = match sol.weights {
            Some(_) => (Vec::new(), Vec::new()),
            None => x
                .iter()
                .zip(&sol.coef)
                .filter(|(_, c)| **c != 0.0)
                .map(|(s, c)| (s.clone(), *c))
                .unzip(),
        };
        Self {
            features,
            kernel,
            center,
            scale,
            support,
            coef,
            weights: sol.weights.clone(),
            bias: sol.bias,
        }
    }

    /// `φ ≡ sign` used when every label agrees.
    pub(crate) fn constant(features: FeatureMap, sign: f64) -> Self {
        let p = features.dim();
        Self {
            features,
            kernel: Kernel::Linear,
            center: vec![0.0; p],
            scale: vec![1.0; p],
            support: Vec::new(),
            coef: Vec::new(),
            weights: Some(vec![0.0; p]),
            bias: sign,
        }
    }

    pub fn stage(&self) -> usize {
        self.features.stage()
    }

    pub fn kernel_name(&self) -> &'static str {
        self.kernel.name()
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }

    pub fn linear_weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn value_at(&self, raw: &[f64]) -> f64 {
        let z = self.standardize(raw);
        match &self.weights {
            Some(w) => w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.bias,
            None => {
                self.support
                    .iter()
                    .zip(&self.coef)
                    .map(|(s, c)| c * self.kernel.eval(s, &z))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    pub fn value(&self, h: &History<'_>) -> f64 {
        self.value_at(&self.features.eval(h))
    }

    pub fn to_spec(&self) -> DecisionFunctionSpec {
        DecisionFunctionSpec {
            stage: self.stage(),
            features: self.features.formula(),
            kernel: self.kernel,
            center: self.center.clone(),
            scale: self.scale.clone(),
            support: self.support.clone(),
            coef: self.coef.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }

    pub fn from_spec(spec: &DecisionFunctionSpec, schema: &Schema) -> Result<Self> {
        let features = FeatureMap::parse(&spec.features, spec.stage, schema)?;
        let p = features.dim();
        let bad = spec.center.len() != p
            || spec.scale.len() != p
            || spec.support.iter().any(|s| s.len() != p)
            || spec.support.len() != spec.coef.len()
            || spec.weights.as_ref().is_some_and(|w| w.len() != p)
            || (spec.weights.is_none() && spec.kernel == Kernel::Linear);
        if bad {
            return Err(DtrError::Shape(format!(
                "decision function for stage {} does not match its {p} features",
                spec.stage
            )));
        }
        Ok(Self {
            features,
            kernel: spec.kernel,
            center: spec.center.clone(),
            scale: spec.scale.clone(),
            support: spec.support.clone(),
            coef: spec.coef.clone(),
            weights: spec.weights.clone(),
            bias: spec.bias,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_linear_problem_is_separated() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 2.0 - 4.75]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.0 { 1.0 } else { -1.0 }).collect();
        let sol = solve_weighted_svm(&x, &y, &[10.0; 20], &Kernel::Linear, 1).unwrap();
        for (r, yi) in x.iter().zip(&y) {
            assert!(sol.decision(&Kernel::Linear, &x, r) * yi > 0.0);
        }
        assert!(sol.objective <= sol.zero_objective);
    }

    #[test]
    fn rbf_separates_an_interval() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0 - 1.5]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0].abs() < 0.7 { 1.0 } else { -1.0 }).collect();
        let k = Kernel::Rbf { gamma: 4.0 };
        let sol = solve_weighted_svm(&x, &y, &[100.0; 30], &k, 2).unwrap();
        let wrong = x
            .iter()
            .zip(&y)
            .filter(|(r, yi)| sol.decision(&k, &x, r) * **yi <= 0.0)
            .count();
        assert_eq!(wrong, 0);
    }

    #[test]
    fn zero_weights_give_zero_function() {
        let x = vec![vec![1.0], vec![-1.0]];
        let sol = solve_weighted_svm(&x, &[1.0, -1.0], &[0.0, 0.0], &Kernel::Linear, 0).unwrap();
        assert_eq!(sol.bias, 0.0);
        assert_eq!(sol.objective, 0.0);
    }
}
