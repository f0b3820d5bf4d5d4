//! Reparametrized cubic P-spline blocks.
//!
//! A cubic B-spline basis on uniform knots is mapped through the range of the
//! second-difference penalty so the smoothing prior becomes `N(0, s^2 I)`,
//! then the constant and linear parts are projected out and the columns are
//! rotated so that `B'B` is diagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::spline;

const ORDER: usize = 4;
/// Relative eigenvalue cutoff for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSplineBlock {
    pub name: String,
    pub knots: Vec<f64>,
    /// Maps B-spline values to block columns (`Z W`).
    pub coef_map: DMatrix<f64>,
    /// Removes the `[1, (v - center) / scale]` projection (`C W`).
    pub linear_map: DMatrix<f64>,
    pub center: f64,
    pub scale: f64,
    /// Diagonal of `B'B` on the training rows.
    pub crossprod: Vec<f64>,
}

/// Second-difference matrix `D` of size `(m - 2) x m`.
fn second_difference(m: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m - 2, m);
    for i in 0..m - 2 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -2.0;
        d[(i, i + 2)] = 1.0;
    }
    d
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        let mut v = eig.eigenvectors[(r, order[c])];
        // sign convention: first nonzero entry of each column is positive
        let col = eig.eigenvectors.column(order[c]);
        if let Some(f) = col.iter().find(|x| x.abs() > 1e-12) {
            if *f < 0.0 {
                v = -v;
            }
        }
        v
    });
    (vals, vecs)
}

impl PSplineBlock {
    /// Block with `l` columns for the predictor values `v`.
    pub fn build(name: &str, v: &[f64], l: usize) -> Result<Self> {
        if l == 0 {
            return Err(StarError::Design(format!("{name}: P-spline block needs at least one column")));
        }
        let mut uniq: Vec<f64> = v.to_vec();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        if uniq.len() < l {
            return Err(StarError::Design(format!(
                "{name}: {} distinct values cannot support {l} spline columns",
                uniq.len()
            )));
        }
        let (lo, hi) = (uniq[0], *uniq.last().unwrap());
        let m = l + 2;
        let segments = m - (ORDER - 1);
        let knots = spline::uniform_knots(lo, hi, segments.max(1), ORDER);
        debug_assert_eq!(spline::basis_len(&knots, ORDER), m.max(ORDER));
        let m = spline::basis_len(&knots, ORDER);

        let n = v.len();
        let mut b = DMatrix::zeros(n, m);
        let mut row = vec![0.0; m];
        for (i, &x) in v.iter().enumerate() {
            spline::eval_into(&knots, ORDER, x, &mut row);
            for (j, &r) in row.iter().enumerate() {
                b[(i, j)] = r;
            }
        }

        // penalty range: Z = V_+ Lambda_+^{-1/2}
        let d = second_difference(m);
        let (pvals, pvecs) = sorted_eigen(d.transpose() * d);
        let k = m - 2;
        let z = DMatrix::from_fn(m, k, |r, c| pvecs[(r, c)] / pvals[c].sqrt());
        let bz = &b * &z;

        // project out [1, standardized v]
        let center = v.iter().sum::<f64>() / n as f64;
        let scale = (v.iter().map(|x| (x - center).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let lin = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (v[i] - center) / scale });
        let gram = lin.transpose() * &lin;
        let c = gram
            .cholesky()
            .ok_or_else(|| StarError::Design(format!("{name}: constant predictor")))?
            .solve(&(lin.transpose() * &bz));
        let bt = &bz - &lin * &c;

        let (evals, w) = sorted_eigen(bt.transpose() * &bt);
        let top = evals[0].max(f64::MIN_POSITIVE);
        if let Some(bad) = evals.iter().position(|&e| e <= RANK_TOL * top) {
            return Err(StarError::Design(format!(
                "{name}: P-spline block is rank deficient ({bad} of {k} directions identified)"
            )));
        }
        let w = w.columns(0, k).into_owned();
        let bj = &bt * &w;
        let crossprod = (0..k).map(|j| bj.column(j).norm_squared()).collect();
        Ok(PSplineBlock {
            name: name.to_string(),
            knots,
            coef_map: &z * &w,
            linear_map: c * &w,
            center,
            scale,
            crossprod,
        })
    }

    pub fn len(&self) -> usize {
        self.coef_map.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block row at a predictor value; values outside the training range are
    /// clamped, so the smooth part extrapolates as a constant.
    pub fn row(&self, x: f64) -> DVector<f64> {
        let m = self.coef_map.nrows();
        let mut b = vec![0.0; m];
        spline::eval_into(&self.knots, ORDER, x, &mut b);
        let b = DVector::from_vec(b);
        let lin = DVector::from_vec(vec![1.0, (x - self.center) / self.scale]);
        self.coef_map.tr_mul(&b) - self.linear_map.tr_mul(&lin)
    }

    pub fn matrix(&self, v: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(v.len(), self.len());
        for (i, &x) in v.iter().enumerate() {
            out.set_row(i, &self.row(x).transpose());
        }
        out
    }
}

/// Default block size `min(ceil(n / 4), 30)`.
pub fn default_size(n: usize) -> usize {
    n.div_ceil(4).min(30)
}
