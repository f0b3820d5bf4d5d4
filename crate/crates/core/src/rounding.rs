//! Rounding operator `h`, its partition `{A_j}` of the latent domain and the
//! integer-valued pmf it induces under a Gaussian latent model.
//!
//! Cells are `A_j = [j, j + 1)` for `j >= 1` and `A_0 = (-inf, 1)` (or `(0, 1)`
//! under the log transformation, whose image is the same `(-inf, 0)`). The
//! bounded and right-censored variants merge every cell from `K` upward into
//! `A_K = [K, inf)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::normal;
use crate::transform::Transformation;

/// Upper limit on the truncation point of moment sums.
pub const MAX_TRUNCATION: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RoundingKind {
    Floor,
    /// Counts are known to satisfy `y <= k`.
    FloorBounded { k: u64 },
    /// Counts are recorded as `min(y, k)`.
    FloorCensored { k: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingScheme {
    #[serde(flatten)]
    pub kind: RoundingKind,
    /// Counts recorded as `max(y, l)`: the bottom cell becomes `(-inf, l + 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_censor: Option<u64>,
}

impl Default for RoundingScheme {
    fn default() -> Self {
        Self::floor()
    }
}

impl RoundingScheme {
    pub fn floor() -> Self {
        RoundingScheme {
            kind: RoundingKind::Floor,
            left_censor: None,
        }
    }

    pub fn bounded(k: u64) -> Self {
        RoundingScheme {
            kind: RoundingKind::FloorBounded { k },
            left_censor: None,
        }
    }

    pub fn censored(k: u64) -> Self {
        RoundingScheme {
            kind: RoundingKind::FloorCensored { k },
            left_censor: None,
        }
    }

    pub fn with_left_censor(mut self, l: u64) -> Self {
        self.left_censor = Some(l);
        self
    }

    /// Top cell index of the scheme alone.
    pub fn bound(&self) -> Option<u64> {
        match self.kind {
            RoundingKind::Floor => None,
            RoundingKind::FloorBounded { k } | RoundingKind::FloorCensored { k } => Some(k),
        }
    }

    /// Top cell index once the transformation's own support is accounted for.
    pub fn top(&self, g: &Transformation) -> Option<u64> {
        match (self.bound(), g.support_max()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn bottom(&self) -> u64 {
        self.left_censor.unwrap_or(0)
    }

    /// Lower edge `a_j` on the latent continuous scale.
    pub fn lower_edge(&self, j: u64, g: &Transformation) -> f64 {
        if j <= self.bottom() {
            if g.is_log() && self.left_censor.is_none() {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            j as f64
        }
    }

    /// Cell `g(A_j)` on the transformed (Gaussian) scale as `[lo, hi)`.
    /// Indices outside the support give an empty cell.
    pub fn latent_cell(&self, j: u64, g: &Transformation) -> (f64, f64) {
        self.latent_cell_with(j, self.top(g), |k| g.eval_edge(k))
    }

    /// As [`latent_cell`](Self::latent_cell) with `g(k)` supplied by `edge`
    /// for `k >= 1` and the top cell index given explicitly.
    pub fn latent_cell_with(&self, j: u64, top: Option<u64>, edge: impl Fn(u64) -> f64) -> (f64, f64) {
        if j < self.bottom() || top.is_some_and(|k| j > k) {
            return (f64::INFINITY, f64::INFINITY);
        }
        let lo = if j <= self.bottom() {
            f64::NEG_INFINITY
        } else {
            edge(j)
        };
        let hi = if top.is_some_and(|k| j >= k) {
            f64::INFINITY
        } else {
            edge(j + 1)
        };
        (lo, hi)
    }

    /// Rounding operator `h`: the unique `j` with `y_star` in `A_j`.
    pub fn round_latent(&self, y_star: f64) -> u64 {
        let j = if y_star < 1.0 || y_star.is_nan() {
            0
        } else if y_star >= MAX_TRUNCATION as f64 {
            MAX_TRUNCATION
        } else {
            y_star.floor() as u64
        };
        let j = j.max(self.bottom());
        match self.bound() {
            Some(k) => j.min(k),
            None => j,
        }
    }

    /// Rounds a latent Gaussian value `z` through `g^{-1}` and `h`, honouring
    /// the transformation's support.
    pub fn round_transformed(&self, z: f64, g: &Transformation) -> u64 {
        let j = self.round_latent(g.inverse(z));
        match g.support_max() {
            Some(k) => j.min(k),
            None => j,
        }
    }

    /// Checks observed counts against the scheme; censored schemes clamp
    /// values above `k`, bounded schemes reject them.
    pub fn prepare_counts(&self, y: &[u64]) -> Result<Vec<u64>> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| match self.kind {
                RoundingKind::FloorBounded { k } if v > k => Err(StarError::Input(format!(
                    "observation {i} = {v} exceeds the bound {k}"
                ))),
                RoundingKind::FloorCensored { k } => Ok(v.min(k).max(self.bottom())),
                _ => Ok(v.max(self.bottom())),
            })
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(StarError::Parameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// `P(y = j)` under `z* ~ N(mu, sigma^2)`.
pub fn pmf(j: u64, g: &Transformation, scheme: &RoundingScheme, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let (lo, hi) = scheme.latent_cell(j, g);
    Ok(normal::interval_prob((lo - mu) / sigma, (hi - mu) / sigma))
}

/// `log P(y = j)`, stable far into the tails.
pub fn ln_pmf(
    j: u64,
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: f64,
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    let (lo, hi) = scheme.latent_cell(j, g);
    Ok(normal::ln_interval_prob((lo - mu) / sigma, (hi - mu) / sigma))
}

/// `P(y > j)`.
pub fn survival(j: u64, g: &Transformation, scheme: &RoundingScheme, mu: f64, sigma: f64) -> f64 {
    if scheme.top(g).is_some_and(|k| j >= k) {
        return 0.0;
    }
    let (_, hi) = scheme.latent_cell(j, g);
    normal::cdf(-(hi - mu) / sigma)
}

/// Truncation point `J = h(g^{-1}(z_q))` for the `q` quantile of the latent.
pub fn truncation_point(
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: f64,
    sigma: f64,
    tail_quantile: f64,
) -> u64 {
    let zq = mu + sigma * normal::quantile(tail_quantile);
    let t = g.inverse(zq);
    let j = if t.is_finite() {
        scheme.round_transformed(zq, g)
    } else {
        MAX_TRUNCATION
    };
    let j = j.min(MAX_TRUNCATION);
    match scheme.top(g) {
        Some(k) => j.min(k),
        None => j,
    }
}

/// `E[y] ~ sum_{j=1}^{J} j P(y = j)`, truncated at the `tail_quantile` point.
pub fn conditional_expectation(
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: f64,
    sigma: f64,
    tail_quantile: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    if !(tail_quantile > 0.5 && tail_quantile < 1.0) {
        return Err(StarError::Parameter(format!(
            "tail quantile must lie in (0.5, 1), got {tail_quantile}"
        )));
    }
    let jmax = truncation_point(g, scheme, mu, sigma, tail_quantile);
    let mut total = 0.0;
    let mut lower = scheme.latent_cell(1, g).0;
    for j in 1..=jmax {
        let (_, hi) = scheme.latent_cell(j, g);
        total += j as f64 * normal::interval_prob((lower - mu) / sigma, (hi - mu) / sigma);
        lower = hi;
    }
    Ok(total)
}

/// Mean, variance and zero probability of the STAR count distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionRow {
    pub mu: f64,
    pub sigma: f64,
    pub mean: f64,
    pub variance: f64,
    pub p_zero: f64,
}

/// Moments by truncated sums; the mass beyond the truncation point is
/// assigned to the last summed cell.
pub fn moments(
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: f64,
    sigma: f64,
) -> Result<DispersionRow> {
    check_sigma(sigma)?;
    let jmax = truncation_point(g, scheme, mu, sigma, 1.0 - 1e-12).max(1);
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    let mut mass = 0.0;
    for j in 0..=jmax {
        let mut p = pmf(j, g, scheme, mu, sigma)?;
        if j == jmax {
            p += survival(j, g, scheme, mu, sigma);
        }
        mass += p;
        m1 += j as f64 * p;
        m2 += (j as f64).powi(2) * p;
    }
    let mean = m1 / mass;
    Ok(DispersionRow {
        mu,
        sigma,
        mean,
        variance: (m2 / mass - mean * mean).max(0.0),
        p_zero: pmf(0, g, scheme, mu, sigma)?,
    })
}

/// Table of `(E[y], Var(y), P(y = 0))` over a grid of latent means and scales.
pub fn dispersion_profile(
    g: &Transformation,
    scheme: &RoundingScheme,
    mus: &[f64],
    sigmas: &[f64],
) -> Result<Vec<DispersionRow>> {
    if mus.iter().chain(sigmas).any(|v| !v.is_finite()) {
        return Err(StarError::Input("grid values must be finite".into()));
    }
    let mut rows = Vec::with_capacity(mus.len() * sigmas.len());
    for &s in sigmas {
        for &m in mus {
            rows.push(moments(g, scheme, m, s)?);
        }
    }
    Ok(rows)
}

pub fn write_dispersion_csv<W: Write>(rows: &[DispersionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `(j, probability)` table for `j = 0..=max_j`.
pub fn pmf_table(
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: f64,
    sigma: f64,
    max_j: u64,
) -> Result<Vec<(u64, f64)>> {
    (0..=max_j)
        .map(|j| pmf(j, g, scheme, mu, sigma).map(|p| (j, p)))
        .collect()
}
