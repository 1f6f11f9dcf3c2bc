//! Linear g-estimation equations solved as one stacked system.

use nalgebra::DMatrix;
use serde::Serialize;

use super::design::DesignMatrix;
use super::qr::PivotedQr;
use crate::error::{DtrError, Result};

pub const EE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct EeSolution {
    pub psi: Vec<f64>,
    pub xi: Vec<f64>,
    /// `‖Mθ − b‖∞ / (1 + ‖b‖∞)` of the stacked system.
    pub relative_residual: f64,
    pub condition: f64,
}

/// Solves
///
/// ```text
/// Σ r_i (v_i − a_i r_iᵀψ − d_iᵀξ)(a_i − π_i) = 0
/// Σ d_i (v_i − a_i r_iᵀψ − d_iᵀξ)            = 0
/// ```
///
/// for `(ψ, ξ)`. With `d` of zero columns only the first block remains.
pub fn solve_joint_linear_ee(
    r: &DesignMatrix,
    a: &[u8],
    d: &DesignMatrix,
    pi: &[f64],
    v: &[f64],
) -> Result<EeSolution> {
    let n = r.nrows();
    if d.nrows() != n || a.len() != n || pi.len() != n || v.len() != n {
        return Err(DtrError::Shape(format!(
            "estimating equation inputs disagree in length (contrast rows {n}, \
             treatment-free rows {}, actions {}, propensities {}, responses {})",
            d.nrows(),
            a.len(),
            pi.len(),
            v.len()
        )));
    }
    let (p, q) = (r.ncols(), d.ncols());
    let k = p + q;
    // instruments z_i = ((a−π) r_i, d_i), regressors x_i = (a r_i, d_i)
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut b = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut x = vec![0.0; k];
    for i in 0..n {
        let ai = f64::from(a[i]);
        let resid = ai - pi[i];
        for c in 0..p {
            let rc = r.values()[(i, c)];
            z[c] = resid * rc;
            x[c] = ai * rc;
        }
        for c in 0..q {
            let dc = d.values()[(i, c)];
            z[p + c] = dc;
            x[p + c] = dc;
        }
        for s in 0..k {
            b[s] += z[s] * v[i];
            for t in 0..k {
                m[(s, t)] += z[s] * x[t];
            }
        }
    }
    let labels: Vec<String> = r
        .labels()
        .iter()
        .map(|l| format!("psi[{l}]"))
        .chain(d.labels().iter().map(|l| format!("xi[{l}]")))
        .collect();
    let qr = PivotedQr::new(&m);
    if !qr.is_full_rank() {
        return Err(DtrError::Singular {
            context: "joint estimating equations".into(),
            columns: qr
                .dependent_columns()
                .into_iter()
                .map(|j| labels[j].clone())
                .collect(),
        });
    }
    let mut theta = qr.solve(&b);
    let residual = |theta: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|s| b[s] - (0..k).map(|t| m[(s, t)] * theta[t]).sum::<f64>())
            .collect()
    };
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut res = residual(&theta);
    for _ in 0..3 {
        if res.iter().fold(0.0f64, |acc, x| acc.max(x.abs())) / scale <= EE_RESIDUAL_TOL * 1e-3 {
            break;
        }
        let delta = qr.solve(&res);
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t += d;
        }
        res = residual(&theta);
    }
    let relative_residual = res.iter().fold(0.0f64, |acc, x| acc.max(x.abs())) / scale;
    if relative_residual > EE_RESIDUAL_TOL {
        return Err(DtrError::Singular {
            context: format!(
                "joint estimating equations (relative residual {relative_residual:.2e})"
            ),
            columns: labels,
        });
    }
    let xi = theta.split_off(p);
    Ok(EeSolution {
        psi: theta,
        xi,
        relative_residual,
        condition: qr.condition_estimate(),
    })
}
