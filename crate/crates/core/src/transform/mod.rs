//! Monotone transformations `g` linking the latent continuous proxy to the
//! Gaussian scale: fixed or learned Box-Cox curves and I-spline expansions.

pub mod ispline;

use serde::{Deserialize, Serialize};

pub use ispline::{build_knots, prior_mean_weights, ISplineBasis};

use crate::error::{Result, StarError};

/// Below this magnitude a Box-Cox parameter is treated as the log case.
pub const LAMBDA_LOG_SNAP: f64 = 1e-8;

/// Signed Box-Cox curve; `log(t)` when `lambda` is (numerically) zero.
pub fn box_cox(t: f64, lambda: f64) -> f64 {
    if lambda.abs() < LAMBDA_LOG_SNAP {
        t.ln()
    } else if lambda == 1.0 {
        t - 1.0
    } else if lambda == 0.5 {
        2.0 * t.abs().sqrt() * t.signum() - 2.0
    } else {
        (t.signum() * t.abs().powf(lambda) - 1.0) / lambda
    }
}

/// Inverse of the signed Box-Cox curve. For `lambda > 0` the signed curve
/// is a bijection of the real line, so no branch ambiguity arises.
pub fn box_cox_inverse(s: f64, lambda: f64) -> f64 {
    if lambda.abs() < LAMBDA_LOG_SNAP {
        s.exp()
    } else if lambda == 1.0 {
        s + 1.0
    } else {
        let u = lambda * s + 1.0;
        if lambda == 0.5 {
            u.signum() * u * u
        } else {
            u.signum() * u.abs().powf(1.0 / lambda)
        }
    }
}

/// Truncated-normal prior for a learned Box-Cox parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaPrior {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for LambdaPrior {
    /// N(1/2, 1) truncated to [0, 3].
    fn default() -> Self {
        LambdaPrior {
            mean: 0.5,
            sd: 1.0,
            lower: 0.0,
            upper: 3.0,
        }
    }
}

impl LambdaPrior {
    /// Unnormalized log density; `-inf` outside the truncation bounds.
    pub fn ln_density(&self, lambda: f64) -> f64 {
        if lambda < self.lower || lambda > self.upper {
            f64::NEG_INFINITY
        } else {
            let z = (lambda - self.mean) / self.sd;
            -0.5 * z * z
        }
    }
}

/// Learned I-spline transformation `g(t) = b_I(t)' gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ISplineTransform {
    #[serde(flatten)]
    pub basis: ISplineBasis,
    /// Normalized weights: positive and summing to one.
    pub weights: Vec<f64>,
    /// Prior mean of the unnormalized weights.
    pub prior_mean: Vec<f64>,
    /// Prior variance of the unnormalized weights.
    pub prior_var: f64,
}

impl ISplineTransform {
    /// Transformation centered on the Box-Cox curve with `lambda0`, with the
    /// weights initialized at the prior mean.
    pub fn centered(basis: ISplineBasis, lambda0: f64) -> Result<Self> {
        let prior_mean = prior_mean_weights(&basis, lambda0)?;
        Ok(ISplineTransform {
            basis,
            weights: prior_mean.clone(),
            prior_mean,
            prior_var: 1.0,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        dot(&self.basis.eval_row(t), &self.weights)
    }

    /// `g(j)` at a nonnegative integer.
    pub fn eval_integer(&self, j: u64) -> f64 {
        dot(&self.basis.row_at_integer(j), &self.weights)
    }

    /// `argmin_t |s - g(t)|` over an explicit grid; ties go to the smaller `t`.
    pub fn inverse_on_grid(&self, s: f64, grid: &[f64]) -> f64 {
        let mut best = grid[0];
        let mut best_gap = f64::INFINITY;
        for &t in grid {
            let gap = (s - self.eval(t)).abs();
            if gap < best_gap {
                best_gap = gap;
                best = t;
            }
        }
        best
    }

    /// Values of `g` on the dense inverse-lookup grid.
    pub fn fine_values(&self) -> Vec<f64> {
        self.basis
            .fine_grid()
            .1
            .iter()
            .map(|r| dot(r, &self.weights))
            .collect()
    }

    /// Grid inverse: nearest point of the dense grid, then a single
    /// refinement pass at ten times the resolution around it.
    pub fn inverse_with(&self, s: f64, fine_values: &[f64]) -> f64 {
        let (grid, _) = self.basis.fine_grid();
        // g is nondecreasing on the grid: first index with g >= s
        let idx = fine_values.partition_point(|&v| v < s);
        let mut best = if idx >= grid.len() {
            // first grid point attaining the maximum
            let top = fine_values[grid.len() - 1];
            fine_values.partition_point(|&v| v < top).min(grid.len() - 1)
        } else if idx == 0 {
            0
        } else if (s - fine_values[idx - 1]).abs() <= (fine_values[idx] - s).abs() {
            idx - 1
        } else {
            idx
        };
        if best > 0 && fine_values[best - 1] == fine_values[best] {
            best = fine_values.partition_point(|&v| v < fine_values[best]);
        }
        let centre = grid[best];
        let h = grid.get(1).copied().unwrap_or(1.0) - grid[0];
        let mut t_best = centre;
        let mut gap_best = (s - fine_values[best]).abs();
        for k in -9..=9 {
            let t = centre + k as f64 * h / 10.0;
            if t < grid[0] || t > *grid.last().unwrap() {
                continue;
            }
            let gap = (s - self.eval(t)).abs();
            if gap < gap_best || (gap == gap_best && t < t_best) {
                gap_best = gap;
                t_best = t;
            }
        }
        t_best
    }

    pub fn inverse(&self, s: f64) -> f64 {
        self.inverse_with(s, &self.fine_values())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A monotone transformation `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transformation {
    /// Box-Cox curve with a fixed parameter (id: 1, sqrt: 1/2, log: 0).
    BoxCox { lambda: f64 },
    /// Box-Cox curve whose parameter is sampled.
    BoxCoxLearned { lambda: f64, prior: LambdaPrior },
    /// Nonparametric I-spline transformation.
    ISpline(ISplineTransform),
}

impl Transformation {
    pub fn identity() -> Self {
        Transformation::BoxCox { lambda: 1.0 }
    }

    pub fn sqrt() -> Self {
        Transformation::BoxCox { lambda: 0.5 }
    }

    pub fn log() -> Self {
        Transformation::BoxCox { lambda: 0.0 }
    }

    /// Current Box-Cox parameter, if this is a Box-Cox transformation.
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Transformation::BoxCox { lambda } | Transformation::BoxCoxLearned { lambda, .. } => {
                Some(*lambda)
            }
            Transformation::ISpline(_) => None,
        }
    }

    /// True for the log transformation, whose domain is `t > 0`.
    pub fn is_log(&self) -> bool {
        self.lambda().is_some_and(|l| l.abs() < LAMBDA_LOG_SNAP)
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Transformation::BoxCox { .. })
    }

    /// Largest count the transformation can produce, if bounded. The I-spline
    /// curve is flat beyond its right boundary knot, so counts above it carry
    /// no mass.
    pub fn support_max(&self) -> Option<u64> {
        match self {
            Transformation::ISpline(s) => Some(s.basis.right_boundary().floor() as u64),
            _ => None,
        }
    }

    /// `g(t)` with domain and finiteness checks.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(StarError::Input(format!("non-finite argument {t}")));
        }
        match self {
            Transformation::BoxCox { lambda } | Transformation::BoxCoxLearned { lambda, .. } => {
                if *lambda < 0.0 {
                    return Err(StarError::Parameter(format!(
                        "Box-Cox parameter must be >= 0, got {lambda}"
                    )));
                }
                if lambda.abs() < LAMBDA_LOG_SNAP && t <= 0.0 {
                    return Err(StarError::Domain(format!(
                        "log transformation needs t > 0, got {t}"
                    )));
                }
                Ok(box_cox(t, *lambda))
            }
            Transformation::ISpline(s) => {
                if t < 0.0 {
                    return Err(StarError::Domain(format!(
                        "I-spline transformation is defined for t >= 0, got {t}"
                    )));
                }
                Ok(s.eval(t))
            }
        }
    }

    /// `g(j)` at a positive integer edge. Infallible for `j >= 1`.
    pub fn eval_edge(&self, j: u64) -> f64 {
        match self {
            Transformation::BoxCox { lambda } | Transformation::BoxCoxLearned { lambda, .. } => {
                box_cox(j as f64, *lambda)
            }
            Transformation::ISpline(s) => s.eval_integer(j),
        }
    }

    /// `g^{-1}(s)`: analytic for Box-Cox, grid search for I-splines.
    pub fn inverse(&self, s: f64) -> f64 {
        match self {
            Transformation::BoxCox { lambda } | Transformation::BoxCoxLearned { lambda, .. } => {
                box_cox_inverse(s, *lambda)
            }
            Transformation::ISpline(sp) => sp.inverse(s),
        }
    }

    /// Inverse over an explicit grid (Box-Cox ignores the grid).
    pub fn inverse_on_grid(&self, s: f64, grid: &[f64]) -> Result<f64> {
        match self {
            Transformation::ISpline(sp) => {
                if grid.is_empty() {
                    return Err(StarError::Parameter("inverse grid is empty".into()));
                }
                Ok(sp.inverse_on_grid(s, grid))
            }
            _ => Ok(self.inverse(s)),
        }
    }

    /// Short tag used in reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Transformation::BoxCox { lambda } if *lambda == 1.0 => "id",
            Transformation::BoxCox { lambda } if *lambda == 0.5 => "sqrt",
            Transformation::BoxCox { lambda } if lambda.abs() < LAMBDA_LOG_SNAP => "log",
            Transformation::BoxCox { .. } => "box-cox-fixed",
            Transformation::BoxCoxLearned { .. } => "bc",
            Transformation::ISpline(_) => "np",
        }
    }
}

/// User-facing choice of transformation, resolved against data by
/// [`TransformSpec::instantiate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformSpec {
    Id,
    Log,
    Sqrt,
    BoxCox,
    Np,
}

impl std::str::FromStr for TransformSpec {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" | "identity" => Ok(TransformSpec::Id),
            "log" => Ok(TransformSpec::Log),
            "sqrt" => Ok(TransformSpec::Sqrt),
            "box-cox" | "bc" => Ok(TransformSpec::BoxCox),
            "np" | "ispline" => Ok(TransformSpec::Np),
            other => Err(StarError::Input(format!("unknown transformation '{other}'"))),
        }
    }
}

impl TransformSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TransformSpec::Id => "id",
            TransformSpec::Log => "log",
            TransformSpec::Sqrt => "sqrt",
            TransformSpec::BoxCox => "box-cox",
            TransformSpec::Np => "np",
        }
    }

    /// Initial transformation for the observed counts `y`.
    pub fn instantiate(&self, y: &[u64]) -> Result<Transformation> {
        Ok(match self {
            TransformSpec::Id => Transformation::identity(),
            TransformSpec::Log => Transformation::log(),
            TransformSpec::Sqrt => Transformation::sqrt(),
            TransformSpec::BoxCox => Transformation::BoxCoxLearned {
                lambda: 0.5,
                prior: LambdaPrior::default(),
            },
            TransformSpec::Np => {
                Transformation::ISpline(ISplineTransform::centered(build_knots(y)?, 0.5)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn np_transform() -> Transformation {
        let y: Vec<u64> = (0..24).chain(0..10).collect();
        TransformSpec::Np.instantiate(&y).unwrap()
    }

    #[test]
    fn box_cox_named_values() {
        assert_eq!(Transformation::identity().evaluate(3.0).unwrap(), 2.0);
        assert_eq!(Transformation::sqrt().evaluate(4.0).unwrap(), 2.0);
        assert_eq!(Transformation::log().evaluate(1.0).unwrap(), 0.0);
    }

    #[test]
    fn box_cox_special_cases_collapse() {
        for k in 1..200 {
            let t = k as f64 * 0.37;
            let near_one = box_cox(t, 1.0 - 1e-12);
            assert!((near_one - (t - 1.0)).abs() < 1e-9);
            let half = (t.powf(0.5) - 1.0) / 0.5;
            assert!((box_cox(t, 0.5) - half).abs() <= 4.0 * f64::EPSILON * half.abs().max(1.0));
            assert!((box_cox(t, 1e-9) - t.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn box_cox_inverse_values() {
        assert_eq!(box_cox_inverse(2.0, 1.0), 3.0);
        assert_eq!(box_cox_inverse(2.0, 0.5), 4.0);
        assert!((box_cox_inverse(0.3, 0.0) - 0.3_f64.exp()).abs() < 1e-15);
        for &lam in &[0.25, 0.5, 1.3, 2.7] {
            for k in 1..50 {
                let t = k as f64 * 0.71;
                let back = box_cox_inverse(box_cox(t, lam), lam);
                assert!((back - t).abs() < 1e-10 * t.max(1.0), "lam={lam} t={t}");
            }
        }
        // negative branch of the signed curve
        let back = box_cox_inverse(box_cox(-2.0, 0.5), 0.5);
        assert!((back + 2.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_errors() {
        assert!(matches!(
            Transformation::log().evaluate(0.0),
            Err(StarError::Domain(_))
        ));
        assert!(matches!(
            Transformation::sqrt().evaluate(f64::NAN),
            Err(StarError::Input(_))
        ));
        assert!(np_transform().evaluate(-1.0).is_err());
    }

    #[test]
    fn ispline_shift_and_scale_constraints() {
        let g = np_transform();
        assert_eq!(g.evaluate(0.0).unwrap(), 0.0);
        let Transformation::ISpline(s) = &g else { unreachable!() };
        let right = s.basis.right_boundary();
        assert!((g.evaluate(right).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(g.support_max(), Some(23));
    }

    #[test]
    fn ispline_inverse_matches_brute_force_scan() {
        let Transformation::ISpline(s) = np_transform() else { unreachable!() };
        let grid: Vec<f64> = (0..=240).map(|k| k as f64 * 0.1).collect();
        for k in 0..=40 {
            let target = k as f64 / 40.0;
            let coarse = s.inverse_on_grid(target, &grid);
            let refined = s.inverse(target);
            assert!((coarse - refined).abs() <= 0.1 + 1e-12, "s={target}");
            assert!((s.eval(refined) - target).abs() <= (s.eval(coarse) - target).abs() + 1e-15);
        }
    }

    #[test]
    fn ispline_inverse_of_identity_line() {
        // weights fit to the identity line on {0, ..., 10}
        let y: Vec<u64> = (0..=10).chain(0..=10).collect();
        let basis = build_knots(&y).unwrap();
        let mut sp = ISplineTransform::centered(basis, 1.0).unwrap();
        let target: Vec<f64> = (0..=11).map(|t| t as f64 / 10.0).collect();
        let w = ispline::fit_positive_weights(sp.basis.grid_matrix(), &target, 1e-6).unwrap();
        let total: f64 = w.iter().sum();
        sp.weights = w.into_iter().map(|v| v / total).collect();
        let grid: Vec<f64> = (0..=10).map(|t| t as f64).collect();
        let s = 0.37;
        let got = sp.inverse_on_grid(s, &grid);
        // brute-force scan
        let brute = grid
            .iter()
            .cloned()
            .min_by(|a, b| {
                (s - sp.eval(*a)).abs().partial_cmp(&(s - sp.eval(*b)).abs()).unwrap()
            })
            .unwrap();
        assert_eq!(got, brute);
        assert_eq!(got, 4.0);
    }

    #[test]
    fn serialization_shape() {
        let j = serde_json::to_value(Transformation::log()).unwrap();
        assert_eq!(j["kind"], "box-cox");
        assert_eq!(j["lambda"], 0.0);
        let np = np_transform();
        let j = serde_json::to_value(&np).unwrap();
        assert_eq!(j["kind"], "i-spline");
        assert!(j["knots"].is_array());
        assert!(j["weights"].is_array());
        let back: Transformation = serde_json::from_value(j).unwrap();
        assert_eq!(back, np);
    }
}
