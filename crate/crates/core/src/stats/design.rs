use nalgebra::DMatrix;

use crate::error::{DtrError, Result};

/// Dense design matrix with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(DtrError::Shape(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(DtrError::Data("design matrix has non-finite entries".into()));
        }
        Ok(Self { values, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let p = labels.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(DtrError::Shape(format!(
                "row of length {} for {p} columns",
                r.len()
            )));
        }
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(values, labels)
    }

    /// Columns labelled `x0, x1, ...`.
    pub fn unlabeled(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        Self::from_rows(rows, (0..p).map(|j| format!("x{j}")).collect())
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Side-by-side concatenation.
    pub fn hstack(blocks: &[&DesignMatrix]) -> Result<Self> {
        let n = blocks.first().map_or(0, |b| b.nrows());
        if blocks.iter().any(|b| b.nrows() != n) {
            return Err(DtrError::Shape("blocks differ in row count".into()));
        }
        let p: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut values = DMatrix::zeros(n, p);
        let mut labels = Vec::with_capacity(p);
        let mut at = 0;
        for b in blocks {
            values.columns_mut(at, b.ncols()).copy_from(&b.values);
            labels.extend(b.labels.iter().cloned());
            at += b.ncols();
        }
        Ok(Self { values, labels })
    }

    /// `X β`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                self.values
                    .row(i)
                    .iter()
                    .zip(beta)
                    .map(|(x, b)| x * b)
                    .sum()
            })
            .collect()
    }

    /// `Xᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.ncols())
            .map(|j| {
                self.values
                    .column(j)
                    .iter()
                    .zip(v)
                    .map(|(x, r)| x * r)
                    .sum()
            })
            .collect()
    }
}
