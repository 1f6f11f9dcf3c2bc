use nalgebra::DMatrix;
use serde::Serialize;

use super::design::DesignMatrix;
use super::qr::PivotedQr;
use crate::error::{DtrError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Unweighted residuals `y - Xβ`.
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
}

/// Ordinary (or weighted, with nonnegative `weights`) least squares.
pub fn ols_fit(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(DtrError::Shape(format!("{n} design rows but {} responses", y.len())));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(DtrError::Shape(format!("{n} design rows but {} weights", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DtrError::Data("weights must be finite and nonnegative".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DtrError::Data("non-finite response".into()));
    }
    if p == 0 {
        return Ok(LinearFit {
            coefficients: Vec::new(),
            residuals: y.to_vec(),
            rank: 0,
            condition: 1.0,
        });
    }
    let sw: Vec<f64> = match weights {
        Some(w) => w.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let a = DMatrix::from_fn(n, p, |i, j| sw[i] * x.values()[(i, j)]);
    let b: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let qr = PivotedQr::new(&a);
    if !qr.is_full_rank() {
        return Err(DtrError::Singular {
            context: "least squares".into(),
            columns: qr
                .dependent_columns()
                .into_iter()
                .map(|j| x.labels()[j].clone())
                .collect(),
        });
    }
    let mut beta = qr.solve(&b);
    // one step of iterative refinement on the weighted residual
    let r: Vec<f64> = a
        .row_iter()
        .zip(&b)
        .map(|(row, bi)| bi - row.iter().zip(&beta).map(|(u, v)| u * v).sum::<f64>())
        .collect();
    let delta = qr.solve(&r);
    for (b, d) in beta.iter_mut().zip(&delta) {
        *b += d;
    }
    let fitted = x.mul_vec(&beta);
    let residuals = y.iter().zip(&fitted).map(|(v, f)| v - f).collect();
    Ok(LinearFit {
        coefficients: beta,
        residuals,
        rank: qr.rank(),
        condition: qr.condition_estimate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_equation_solve(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = nalgebra::DVector::zeros(p);
        for ((row, yi), wi) in x.iter().zip(y).zip(w) {
            for a in 0..p {
                xty[a] += wi * row[a] * yi;
                for b in 0..p {
                    xtx[(a, b)] += wi * row[a] * row[b];
                }
            }
        }
        xtx.lu().solve(&xty).unwrap().iter().copied().collect()
    }

    #[test]
    fn exact_interpolation() {
        let x = DesignMatrix::unlabeled(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let fit = ols_fit(&x, &[2.0, 4.0], None).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let rows = vec![
            vec![1.0, 2.0, 2.0],
            vec![1.0, 3.0, 3.0],
            vec![1.0, 4.0, 4.0],
            vec![1.0, 7.0, 7.0],
        ];
        let x = DesignMatrix::from_rows(&rows, vec!["1".into(), "L".into(), "Lcopy".into()]).unwrap();
        match ols_fit(&x, &[1.0, 2.0, 3.0, 4.0], None) {
            Err(DtrError::Singular { columns, .. }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0] == "L" || columns[0] == "Lcopy");
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn unit_weights_match_unweighted_and_normal_equations() {
        let rows = vec![
            vec![1.0, 0.3, -1.0],
            vec![1.0, 1.7, 0.5],
            vec![1.0, -0.4, 2.0],
            vec![1.0, 2.2, 1.1],
            vec![1.0, 0.9, -0.7],
        ];
        let y = [1.2, 3.4, -0.5, 2.8, 0.6];
        let x = DesignMatrix::unlabeled(&rows).unwrap();
        let plain = ols_fit(&x, &y, None).unwrap();
        let weighted = ols_fit(&x, &y, Some(&[1.0; 5])).unwrap();
        let oracle = normal_equation_solve(&rows, &y, &[1.0; 5]);
        for k in 0..3 {
            assert!((plain.coefficients[k] - weighted.coefficients[k]).abs() < 1e-12);
            assert!((plain.coefficients[k] - oracle[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_fit_matches_weighted_normal_equations() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64, (i * i) as f64 / 10.0]).collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64).sin() * 3.0 + 1.0).collect();
        let w = [0.5, 1.0, 2.0, 0.0, 1.5, 0.3, 0.9, 1.1];
        let x = DesignMatrix::unlabeled(&rows).unwrap();
        let fit = ols_fit(&x, &y, Some(&w)).unwrap();
        let oracle = normal_equation_solve(&rows, &y, &w);
        for k in 0..3 {
            assert!((fit.coefficients[k] - oracle[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let x = DesignMatrix::unlabeled(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(ols_fit(&x, &[1.0, 2.0], Some(&[1.0, -1.0])).is_err());
    }
}
