//! Logistic regression by iteratively reweighted least squares.

use nalgebra::DMatrix;
use serde::Serialize;

use super::design::DesignMatrix;
use super::qr::PivotedQr;
use crate::error::{DtrError, Result};

pub const SCORE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    pub max_iterations: usize,
    pub score_tol: f64,
    /// Accept single-class responses and non-converged fits instead of
    /// returning an error.
    pub allow_degenerate: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            score_tol: SCORE_TOL,
            allow_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of `Xᵀ(a - p)` at the returned coefficients.
    pub score_norm: f64,
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood at `beta`.
pub fn log_likelihood(x: &DesignMatrix, a: &[u8], beta: &[f64]) -> f64 {
    x.mul_vec(beta)
        .iter()
        .zip(a)
        .map(|(&eta, &ai)| {
            // log(1 + e^eta), stable
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            f64::from(ai) * eta - softplus
        })
        .sum()
}

pub fn score(x: &DesignMatrix, a: &[u8], beta: &[f64]) -> Vec<f64> {
    let resid: Vec<f64> = x
        .mul_vec(beta)
        .iter()
        .zip(a)
        .map(|(&eta, &ai)| f64::from(ai) - expit(eta))
        .collect();
    x.tr_mul_vec(&resid)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn logistic_fit(x: &DesignMatrix, a: &[u8], opts: LogisticOptions) -> Result<LogisticFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if a.len() != n {
        return Err(DtrError::Shape(format!("{n} design rows but {} responses", a.len())));
    }
    if a.iter().any(|&v| v > 1) {
        return Err(DtrError::Data("logistic response must be binary".into()));
    }
    let treated = a.iter().filter(|&&v| v == 1).count();
    let single_class = treated == 0 || treated == n;
    if single_class && !opts.allow_degenerate {
        return Err(DtrError::Degenerate(format!(
            "logistic response has a single class ({treated} of {n} treated)"
        )));
    }

    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(x, a, &beta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let eta = x.mul_vec(&beta);
        let probs: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let g = x.tr_mul_vec(
            &probs
                .iter()
                .zip(a)
                .map(|(pi, &ai)| f64::from(ai) - pi)
                .collect::<Vec<_>>(),
        );
        if !single_class && max_abs(&g) <= opts.score_tol {
            converged = true;
            break;
        }
        // Newton step: (Xᵀ W X) δ = Xᵀ (a - p), solved as weighted least squares
        let sw: Vec<f64> = probs.iter().map(|pi| (pi * (1.0 - pi)).sqrt()).collect();
        if sw.iter().all(|&s| s == 0.0) {
            break;
        }
        let m = DMatrix::from_fn(n, p, |i, j| sw[i] * x.values()[(i, j)]);
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if sw[i] > 0.0 {
                    (f64::from(a[i]) - probs[i]) / sw[i]
                } else {
                    0.0
                }
            })
            .collect();
        let qr = PivotedQr::new(&m);
        if !qr.is_full_rank() {
            if opts.allow_degenerate {
                break;
            }
            return Err(DtrError::NonConvergence {
                iterations,
                score_norm: max_abs(&g),
                hint: "information matrix became singular; likely perfect separation".into(),
            });
        }
        let delta = qr.solve(&rhs);
        iterations += 1;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let trial_ll = log_likelihood(x, a, &trial);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let score_norm = max_abs(&score(x, a, &beta));
    if !converged && !single_class && score_norm <= opts.score_tol {
        converged = true;
    }
    // Under complete separation the score still vanishes as the
    // coefficients diverge; every row ends up predicted exactly.
    if converged && !opts.allow_degenerate {
        let fitted = x.mul_vec(&beta);
        let exact = fitted
            .iter()
            .zip(a)
            .all(|(&eta, &ai)| (f64::from(ai) - expit(eta)).abs() < 1e-6);
        if exact {
            return Err(DtrError::NonConvergence {
                iterations,
                score_norm,
                hint: "perfect separation: every row is predicted exactly".into(),
            });
        }
    }
    if !converged && !opts.allow_degenerate {
        return Err(DtrError::NonConvergence {
            iterations,
            score_norm,
            hint: "possible perfect separation".into(),
        });
    }
    Ok(LogisticFit {
        coefficients: beta,
        converged,
        iterations,
        score_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix::unlabeled(&vec![vec![1.0]; n]).unwrap()
    }

    #[test]
    fn intercept_only_closed_form() {
        let a: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0 || i % 5 == 0)).collect();
        let mean = a.iter().map(|&v| f64::from(v)).sum::<f64>() / 40.0;
        let fit = logistic_fit(&intercept_only(40), &a, LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (mean / (1.0 - mean)).ln()).abs() < 1e-8);
    }

    #[test]
    fn single_class_needs_override() {
        let a = vec![0u8; 10];
        assert!(matches!(
            logistic_fit(&intercept_only(10), &a, LogisticOptions::default()),
            Err(DtrError::Degenerate(_))
        ));
        let opts = LogisticOptions {
            allow_degenerate: true,
            ..Default::default()
        };
        let fit = logistic_fit(&intercept_only(10), &a, opts).unwrap();
        assert!(!fit.converged);
        assert!(fit.coefficients[0] < -10.0);
        assert!(fit.iterations <= opts.max_iterations);
    }

    #[test]
    fn perfect_separation_fails() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let a: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let x = DesignMatrix::unlabeled(&rows).unwrap();
        assert!(matches!(
            logistic_fit(&x, &a, LogisticOptions::default()),
            Err(DtrError::NonConvergence { .. })
        ));
    }

    #[test]
    fn score_matches_finite_difference_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![1.0, rng.random_range(0.0..60.0)])
            .collect();
        let a: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < expit(-3.0 + 0.1 * r[1])))
            .collect();
        let x = DesignMatrix::unlabeled(&rows).unwrap();
        let fit = logistic_fit(&x, &a, LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.score_norm <= SCORE_TOL);
        // central differences of the log-likelihood at the optimum
        for k in 0..2 {
            let h = 1e-6 * fit.coefficients[k].abs().max(1.0);
            let mut up = fit.coefficients.clone();
            let mut dn = fit.coefficients.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (log_likelihood(&x, &a, &up) - log_likelihood(&x, &a, &dn)) / (2.0 * h);
            assert!(fd.abs() < 1e-5, "finite-difference gradient {fd}");
        }
        // and away from the optimum the analytic score tracks the differences
        let probe = vec![fit.coefficients[0] + 0.2, fit.coefficients[1] - 0.01];
        let g = score(&x, &a, &probe);
        for k in 0..2 {
            let h = 1e-6;
            let mut up = probe.clone();
            let mut dn = probe.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (log_likelihood(&x, &a, &up) - log_likelihood(&x, &a, &dn)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-4 * g[k].abs().max(1.0));
        }
    }
}
