//! Quadratic I-spline basis for nonparametric monotone transformations.
//!
//! Each I-spline is the integral of a normalized M-spline, written here as a
//! tail sum of B-splines one order higher. Basis functions are nondecreasing,
//! vanish at the left boundary knot (0) and equal 1 from the right boundary
//! knot onward.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::box_cox;
use crate::error::{Result, StarError};
use crate::spline;

/// Lower bound applied to the prior-mean weights during the constrained fit.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Points per unit count on the inverse-lookup grid.
const INVERSE_GRID_DENSITY: usize = 10;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BasisRepr {
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct ISplineBasis {
    degree: usize,
    /// Boundary and interior knots, strictly increasing.
    knots: Vec<f64>,
    /// Clamped knot vector for the B-splines of order `degree + 2`.
    augmented: Vec<f64>,
    /// Basis rows at the integer grid 0, 1, ..., right boundary + 1.
    grid_rows: Vec<Vec<f64>>,
    /// Basis rows on the dense inverse-lookup grid.
    fine_grid: Vec<f64>,
    fine_rows: Vec<Vec<f64>>,
}

impl PartialEq for ISplineBasis {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.knots == other.knots
    }
}

impl TryFrom<BasisRepr> for ISplineBasis {
    type Error = StarError;

    fn try_from(r: BasisRepr) -> Result<Self> {
        ISplineBasis::new(r.degree, r.knots)
    }
}

impl From<ISplineBasis> for BasisRepr {
    fn from(b: ISplineBasis) -> Self {
        BasisRepr {
            degree: b.degree,
            knots: b.knots,
        }
    }
}

impl ISplineBasis {
    /// Basis from an explicit knot list `[left, interior..., right]`.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(StarError::Parameter("I-spline degree must be >= 1".into()));
        }
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StarError::Parameter(
                "I-spline knots must be strictly increasing with two boundaries".into(),
            ));
        }
        let order = degree + 2;
        let lo = knots[0];
        let hi = *knots.last().unwrap();
        let augmented = spline::clamped_knots(lo, hi, &knots[1..knots.len() - 1], order);
        let mut basis = ISplineBasis {
            degree,
            knots,
            augmented,
            grid_rows: Vec::new(),
            fine_grid: Vec::new(),
            fine_rows: Vec::new(),
        };
        let top = hi.ceil() as usize + 1;
        basis.grid_rows = (0..=top).map(|t| basis.eval_row(t as f64)).collect();
        let steps = top * INVERSE_GRID_DENSITY;
        basis.fine_grid = (0..=steps)
            .map(|k| k as f64 / INVERSE_GRID_DENSITY as f64)
            .collect();
        basis.fine_rows = basis.fine_grid.iter().map(|&t| basis.eval_row(t)).collect();
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[1..self.knots.len() - 1]
    }

    pub fn left_boundary(&self) -> f64 {
        self.knots[0]
    }

    pub fn right_boundary(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Number of basis functions, `L`.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Basis values at `t`.
    pub fn eval_row(&self, t: f64) -> Vec<f64> {
        let l = self.len();
        if t <= self.left_boundary() {
            return vec![0.0; l];
        }
        if t >= self.right_boundary() {
            return vec![1.0; l];
        }
        let order = self.degree + 2;
        let b = spline::eval(&self.augmented, order, t);
        // I_i = sum_{j >= i} B_j; the constant I_0 and the first I_1 are dropped
        let m = b.len();
        let mut tail = vec![0.0; m + 1];
        for j in (0..m).rev() {
            tail[j] = tail[j + 1] + b[j];
        }
        tail[2..m].iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }

    /// Integer evaluation grid `0, 1, ..., right boundary + 1`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_rows.len()).map(|t| t as f64).collect()
    }

    /// Basis matrix on the integer grid (rows = grid points).
    pub fn grid_matrix(&self) -> &[Vec<f64>] {
        &self.grid_rows
    }

    pub(crate) fn fine_grid(&self) -> (&[f64], &[Vec<f64>]) {
        (&self.fine_grid, &self.fine_rows)
    }

    /// Basis row at a nonnegative integer, served from the cache when possible.
    pub fn row_at_integer(&self, j: u64) -> std::borrow::Cow<'_, [f64]> {
        match self.grid_rows.get(j as usize) {
            Some(r) => std::borrow::Cow::Borrowed(r.as_slice()),
            None => std::borrow::Cow::Owned(vec![1.0; self.len()]),
        }
    }
}

/// Number of I-spline basis functions for `unique` distinct observed values.
///
/// `2 + min(floor(unique / 4), 10)`, floored at 3 so that the interior knot
/// at one always exists.
pub fn basis_size(unique: usize) -> usize {
    (2 + (unique / 4).min(10)).max(3)
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knot placement from observed counts: boundaries at 0 and the maximum, an
/// interior knot at 1 and the rest at quantiles of the distinct values
/// strictly between 1 and the maximum.
pub fn build_knots(observed: &[u64]) -> Result<ISplineBasis> {
    let mut unique: Vec<u64> = observed.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() <= 1 {
        return Err(StarError::DegenerateData(
            "all observed counts are equal; cannot place I-spline knots".into(),
        ));
    }
    if unique.len() < 3 {
        return Err(StarError::DegenerateData(format!(
            "I-spline knots need at least 3 distinct counts, got {}",
            unique.len()
        )));
    }
    let max = *unique.last().unwrap() as f64;
    let l = basis_size(unique.len());
    let n_quantile = l - 3;
    let inner: Vec<f64> = unique
        .iter()
        .map(|&v| v as f64)
        .filter(|&v| v > 1.0 && v < max)
        .collect();
    let mut knots = vec![0.0, 1.0];
    if n_quantile > 0 && !inner.is_empty() {
        for k in 1..=n_quantile {
            let q = quantile_sorted(&inner, k as f64 / (n_quantile + 1) as f64);
            if q > *knots.last().unwrap() && q < max {
                knots.push(q);
            }
        }
    }
    knots.push(max);
    ISplineBasis::new(2, knots)
}

/// Minimizes `||target - B w||^2` subject to `w >= floor` by accelerated
/// projected gradient.
pub fn fit_positive_weights(rows: &[Vec<f64>], target: &[f64], floor: f64) -> Result<Vec<f64>> {
    if rows.is_empty() || rows.len() != target.len() {
        return Err(StarError::Parameter(
            "basis rows and target must be nonempty and equally long".into(),
        ));
    }
    let l = rows[0].len();
    let b = DMatrix::from_fn(rows.len(), l, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(target);
    let btb = b.transpose() * &b;
    let bty = b.transpose() * &y;
    let lipschitz = btb
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    if !(lipschitz > 0.0) {
        return Err(StarError::Numerical("basis matrix is identically zero".into()));
    }
    let step = 1.0 / lipschitz;
    let project = |v: &mut DVector<f64>| v.iter_mut().for_each(|x| *x = x.max(floor));
    let mut w = DVector::from_element(l, 1.0 / l as f64);
    project(&mut w);
    let mut momentum = w.clone();
    let mut t_k = 1.0_f64;
    for _ in 0..200_000 {
        let grad = &btb * &momentum - &bty;
        let mut next = &momentum - grad * step;
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let delta = &next - &w;
        momentum = &next + &delta * ((t_k - 1.0) / t_next);
        // restart when the objective direction turns uphill
        if delta.dot(&(&btb * &next - &bty)) > 0.0 {
            momentum = next.clone();
            t_k = 1.0;
        } else {
            t_k = t_next;
        }
        let change = delta.amax();
        w = next;
        if change < 1e-15 {
            break;
        }
    }
    Ok(w.iter().cloned().collect())
}

/// Target curve for the prior mean: the Box-Cox curve with parameter
/// `lambda0` on the integer grid, shifted and scaled to run from 0 at the left
/// boundary to 1 at the right boundary. The log case uses `log(1 + t)`.
pub fn prior_target(basis: &ISplineBasis, lambda0: f64) -> Vec<f64> {
    let grid = basis.grid();
    let right = basis.right_boundary();
    let shape = |t: f64| {
        if lambda0.abs() < super::LAMBDA_LOG_SNAP {
            (1.0 + t).ln()
        } else {
            box_cox(t, lambda0)
        }
    };
    let lo = shape(0.0);
    let hi = shape(right);
    grid.iter().map(|&t| (shape(t) - lo) / (hi - lo)).collect()
}

/// Positive, sum-to-one prior mean for the I-spline weights, centering the
/// transformation on a Box-Cox curve with parameter `lambda0`.
pub fn prior_mean_weights(basis: &ISplineBasis, lambda0: f64) -> Result<Vec<f64>> {
    if !(lambda0 >= 0.0) || !lambda0.is_finite() {
        return Err(StarError::Parameter(format!(
            "prior centering lambda must be >= 0, got {lambda0}"
        )));
    }
    let target = prior_target(basis, lambda0);
    let w = fit_positive_weights(basis.grid_matrix(), &target, WEIGHT_FLOOR)?;
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(StarError::Numerical(
            "constrained least squares returned a nonpositive weight".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(unique: u64) -> Vec<u64> {
        (0..unique).flat_map(|v| [v, v]).collect()
    }

    #[test]
    fn basis_size_formula() {
        assert_eq!(basis_size(40), 12);
        assert_eq!(basis_size(8), 4);
        assert_eq!(basis_size(100), 12);
        assert_eq!(basis_size(3), 3);
    }

    #[test]
    fn knots_for_forty_unique_values() {
        let b = build_knots(&counts(40)).unwrap();
        assert_eq!(b.len(), 12);
        assert_eq!(b.left_boundary(), 0.0);
        assert_eq!(b.right_boundary(), 39.0);
        assert_eq!(b.interior_knots()[0], 1.0);
        assert_eq!(b.interior_knots().len(), 10);
    }

    #[test]
    fn knots_for_eight_unique_values() {
        let b = build_knots(&counts(8)).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.interior_knots().len(), 2);
        assert_eq!(b.interior_knots()[0], 1.0);
    }

    #[test]
    fn right_boundary_at_max_count() {
        let y = vec![0, 1, 2, 3, 5, 8, 17, 4, 4, 2];
        let b = build_knots(&y).unwrap();
        assert_eq!(b.right_boundary(), 17.0);
    }

    #[test]
    fn degenerate_counts_rejected() {
        assert!(matches!(build_knots(&[4, 4, 4]), Err(StarError::DegenerateData(_))));
        assert!(build_knots(&[0, 1, 0]).is_err());
    }

    #[test]
    fn basis_functions_are_monotone_cdf_like() {
        let b = build_knots(&counts(30)).unwrap();
        let mut prev = b.eval_row(0.0);
        assert!(prev.iter().all(|&v| v == 0.0));
        for k in 1..=300 {
            let t = k as f64 * 0.1;
            let row = b.eval_row(t);
            for (a, c) in prev.iter().zip(&row) {
                assert!(*c >= *a - 1e-14);
                assert!((0.0..=1.0).contains(c));
            }
            prev = row;
        }
        assert!(b.eval_row(29.0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exact_representation_is_recovered() {
        let b = build_knots(&counts(20)).unwrap();
        let truth: Vec<f64> = (0..b.len()).map(|k| 0.05 + 0.1 * k as f64).collect();
        let target: Vec<f64> = b
            .grid_matrix()
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(x, w)| x * w).sum())
            .collect();
        let w = fit_positive_weights(b.grid_matrix(), &target, WEIGHT_FLOOR).unwrap();
        let resid: f64 = b
            .grid_matrix()
            .iter()
            .zip(&target)
            .map(|(r, t)| {
                let f: f64 = r.iter().zip(&w).map(|(x, w)| x * w).sum();
                (f - t).powi(2)
            })
            .sum();
        assert!(resid < 1e-16, "residual {resid}");
    }

    #[test]
    fn prior_mean_is_positive_simplex() {
        let b = build_knots(&counts(25)).unwrap();
        for &lam in &[0.0, 0.5, 1.0] {
            let mu = prior_mean_weights(&b, lam).unwrap();
            assert!(mu.iter().all(|&v| v > 0.0));
            assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(prior_mean_weights(&b, -0.5).is_err());
    }
}
