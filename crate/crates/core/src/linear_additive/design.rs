//! Design construction for the linear and additive models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pspline::{default_size, PSplineBlock};
use crate::data::Dataset;
use crate::error::{Result, StarError};

/// Predictors with fewer unique values stay in the linear block.
pub const MIN_UNIQUE_NONLINEAR: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub name: String,
    pub center: f64,
    pub scale: f64,
}

/// Everything needed to rebuild `U` and the `B_j` for new rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Standardized linear terms; the intercept column is implicit.
    pub linear: Vec<LinearTerm>,
    pub smooth: Vec<PSplineBlock>,
    /// Requested nonlinear predictors moved to the linear block.
    pub demoted: Vec<String>,
}

fn unique_count(v: &[f64]) -> usize {
    let mut u = v.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u.len()
}

impl DesignSpec {
    /// Linear terms for every predictor plus a P-spline block for each
    /// requested nonlinear predictor with enough distinct values.
    pub fn build(data: &Dataset, nonlinear: &[String]) -> Result<Self> {
        for name in nonlinear {
            data.column(name)?;
        }
        let mut linear = Vec::with_capacity(data.p());
        for (name, col) in data.names.iter().zip(&data.columns) {
            let n = col.len() as f64;
            let center = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - center).powi(2)).sum::<f64>() / n).sqrt();
            if sd == 0.0 {
                return Err(StarError::Design(format!("predictor {name} is constant")));
            }
            linear.push(LinearTerm {
                name: name.clone(),
                center,
                scale: sd,
            });
        }
        let mut smooth = Vec::new();
        let mut demoted = Vec::new();
        for name in nonlinear {
            let v = data.column(name)?;
            let uniq = unique_count(v);
            if uniq < MIN_UNIQUE_NONLINEAR {
                demoted.push(name.clone());
                continue;
            }
            let mut l = default_size(data.n()).min(uniq - 2);
            loop {
                match PSplineBlock::build(name, v, l) {
                    Ok(b) => {
                        smooth.push(b);
                        break;
                    }
                    Err(StarError::Design(_)) if l > 2 => l = l * 2 / 3,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(DesignSpec {
            linear,
            smooth,
            demoted,
        })
    }

    /// Number of columns of `U`, intercept included.
    pub fn linear_dim(&self) -> usize {
        self.linear.len() + 1
    }

    pub fn linear_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let cols: Vec<&[f64]> = self
            .linear
            .iter()
            .map(|t| data.column(&t.name))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(data.n(), self.linear_dim(), |i, j| {
            if j == 0 {
                1.0
            } else {
                let t = &self.linear[j - 1];
                (cols[j - 1][i] - t.center) / t.scale
            }
        }))
    }

    pub fn smooth_matrices(&self, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        self.smooth
            .iter()
            .map(|b| data.column(&b.name).map(|v| b.matrix(v)))
            .collect()
    }

    pub fn smooth_dims(&self) -> Vec<usize> {
        self.smooth.iter().map(|b| b.len()).collect()
    }

    /// Converts standardized coefficients (intercept first) to the scale of
    /// the raw predictors.
    pub fn to_original_scale(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![beta[0]];
        for (t, b) in self.linear.iter().zip(&beta[1..]) {
            out[0] -= b * t.center / t.scale;
            out.push(b / t.scale);
        }
        out
    }
}
