//! Householder QR with column pivoting by remaining column norm.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance on `|R_kk| / |R_00|` below which a column is treated
/// as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

pub struct PivotedQr {
    /// Householder vectors, one per eliminated column.
    reflectors: Vec<DVector<f64>>,
    r: DMatrix<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
    /// Column scaling applied before factorization.
    scale: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    /// Factorizes `a` after scaling each column to unit Euclidean norm.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (n, p) = a.shape();
        let mut m = a.clone();
        let scale: Vec<f64> = (0..p)
            .map(|j| {
                let s = m.column(j).norm();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for (j, s) in scale.iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / s);
        }
        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::new();
        let steps = n.min(p);
        for k in 0..steps {
            let (best, _) = (k..p)
                .map(|j| (j, m.view((k, j), (n - k, 1)).norm_squared()))
                .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
            if best != k {
                m.swap_columns(k, best);
                perm.swap(k, best);
            }
            let x: DVector<f64> = m.view((k, k), (n - k, 1)).column(0).into_owned();
            let norm = x.norm();
            let mut v = x;
            if norm > 0.0 {
                let alpha = if v[0] >= 0.0 { -norm } else { norm };
                v[0] -= alpha;
                let vnorm = v.norm();
                if vnorm > 0.0 {
                    v /= vnorm;
                    for j in k..p {
                        let mut col = m.view_mut((k, j), (n - k, 1));
                        let d = v.dot(&col.column(0));
                        col.column_mut(0).axpy(-2.0 * d, &v, 1.0);
                    }
                }
            }
            reflectors.push(v);
        }
        let r = m.rows(0, steps).upper_triangle();
        let r00 = if steps > 0 { r[(0, 0)].abs() } else { 0.0 };
        let rank = (0..steps)
            .take_while(|&k| r00 > 0.0 && r[(k, k)].abs() > RANK_TOL * r00)
            .count();
        Self {
            reflectors,
            r,
            perm,
            scale,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols()
    }

    /// Original indices of columns beyond the numerical rank.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// `|R_00| / |R_{r-1,r-1}|` on the scaled columns.
    pub fn condition_estimate(&self) -> f64 {
        if self.rank == 0 {
            return f64::INFINITY;
        }
        self.r[(0, 0)].abs() / self.r[(self.rank - 1, self.rank - 1)].abs()
    }

    fn apply_qt(&self, b: &mut DVector<f64>) {
        let n = b.len();
        for (k, v) in self.reflectors.iter().enumerate() {
            let mut seg = b.rows_mut(k, n - k);
            let d = v.dot(&seg);
            seg.axpy(-2.0 * d, v, 1.0);
        }
    }

    /// Least-squares solution of `A x = b`; requires full column rank.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.is_full_rank(), "solve on rank-deficient factorization");
        let p = self.ncols();
        let mut qtb = DVector::from_column_slice(b);
        self.apply_qt(&mut qtb);
        let mut z = vec![0.0; p];
        for k in (0..p).rev() {
            let s: f64 = ((k + 1)..p).map(|j| self.r[(k, j)] * z[j]).sum();
            z[k] = (qtb[k] - s) / self.r[(k, k)];
        }
        let mut x = vec![0.0; p];
        for (k, &col) in self.perm.iter().enumerate() {
            x[col] = z[k] / self.scale[col];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let qr = PivotedQr::new(&a);
        assert!(qr.is_full_rank());
        let x = qr.solve(&[1.0, 2.0, 3.0]);
        let ax = &a * DVector::from_vec(x);
        for (got, want) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_dependent_column() {
        let a = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 2.0, //
            1.0, 3.0, 3.0, //
            1.0, 5.0, 5.0, //
            1.0, 7.0, 7.0,
        ]);
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(), 2);
        assert_eq!(qr.dependent_columns().len(), 1);
        assert!([1, 2].contains(&qr.dependent_columns()[0]));
    }
}
