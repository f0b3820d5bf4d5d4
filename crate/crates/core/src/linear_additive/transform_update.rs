//! Updates of the transformation parameters given the mean and scale.
//!
//! Both updates target the collapsed likelihood `prod_i P(y_i | mu_i, sigma, g)`
//! with the latents integrated out: a slice step for the Box-Cox parameter and
//! a RAM step on `xi = log(gamma_tilde)` for the I-spline weights, followed by
//! the draw of the weight prior variance.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::latent::{collapsed_loglik, collapsed_loglik_with};
use crate::config::McmcConfig;
use crate::error::{Result, StarError};
use crate::normal;
use crate::rounding::RoundingScheme;
use crate::samplers::{draw_gamma, slice_sample, RamState, SliceConfig};
use crate::transform::Transformation;

const SIGMA_GAMMA_A: f64 = 0.001;
const SIGMA_GAMMA_B: f64 = 0.001;
const RAM_INITIAL_SCALE: f64 = 0.1;

#[derive(Clone, Debug)]
struct SplineSampler {
    xi: DVector<f64>,
    ram: RamState,
    /// Basis rows at integers `0..=support + 1`.
    rows: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformStats {
    pub proposals: u64,
    pub accepted: u64,
    pub ram_fallbacks: u64,
    pub variance_proposals: u64,
    pub variance_accepted: u64,
}

impl TransformStats {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }

    pub fn merge(&mut self, other: &TransformStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.ram_fallbacks += other.ram_fallbacks;
        self.variance_proposals += other.variance_proposals;
        self.variance_accepted += other.variance_accepted;
    }
}

/// Current transformation plus whatever sampler state it needs.
#[derive(Clone, Debug)]
pub struct TransformState {
    pub g: Transformation,
    spline: Option<SplineSampler>,
    pub stats: TransformStats,
}

impl TransformState {
    pub fn new(g: Transformation, mcmc: &McmcConfig) -> Self {
        let spline = match &g {
            Transformation::ISpline(s) => {
                let top = s.basis.right_boundary().floor() as u64;
                let mut ram = RamState::new(s.weights.len(), RAM_INITIAL_SCALE);
                ram.target_accept = mcmc.ram_target_accept;
                ram.adapt_rate = mcmc.ram_adapt_rate;
                Some(SplineSampler {
                    xi: DVector::from_iterator(s.weights.len(), s.weights.iter().map(|w| w.ln())),
                    ram,
                    rows: (0..=top + 1).map(|j| s.basis.row_at_integer(j).into_owned()).collect(),
                })
            }
            _ => None,
        };
        TransformState {
            g,
            spline,
            stats: TransformStats::default(),
        }
    }

    pub fn is_learned(&self) -> bool {
        self.g.is_learned()
    }

    /// Parameters recorded per saved draw: `[lambda]`, the normalized
    /// weights, or nothing for a fixed transformation.
    pub fn params(&self) -> Vec<f64> {
        match &self.g {
            Transformation::BoxCoxLearned { lambda, .. } => vec![*lambda],
            Transformation::ISpline(s) => s.weights.clone(),
            Transformation::BoxCox { .. } => Vec::new(),
        }
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        y: &[u64],
        mu: &[f64],
        sigma: f64,
        scheme: &RoundingScheme,
        adapt: bool,
        slice: SliceConfig,
        rng: &mut R,
    ) -> Result<()> {
        match &mut self.g {
            Transformation::BoxCox { .. } => Ok(()),
            Transformation::BoxCoxLearned { lambda, prior } => {
                let prior = *prior;
                let target = |l: f64| {
                    let g = Transformation::BoxCox { lambda: l };
                    prior.ln_density(l) + collapsed_loglik(y, mu, sigma, scheme, &g)
                };
                *lambda = slice_sample(target, *lambda, slice, (prior.lower, prior.upper), rng)?;
                Ok(())
            }
            Transformation::ISpline(s) => {
                let sp = self
                    .spline
                    .as_mut()
                    .ok_or_else(|| StarError::State("missing I-spline sampler state".into()))?;
                let support = sp.rows.len() as u64 - 2;
                let top = Some(scheme.bound().map_or(support, |k| k.min(support)));
                let prior_mean = s.prior_mean.clone();
                let var = s.prior_var;
                let rows = &sp.rows;
                let log_target = |xi: &DVector<f64>| {
                    let gt: Vec<f64> = xi.iter().map(|v| v.exp()).collect();
                    let total: f64 = gt.iter().sum();
                    if !(total > 0.0) || !total.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    let edges: Vec<f64> = rows
                        .iter()
                        .map(|r| r.iter().zip(&gt).map(|(b, w)| b * w).sum::<f64>() / total)
                        .collect();
                    let ll = collapsed_loglik_with(y, mu, sigma, scheme, top, |k| edges[k as usize]);
                    let lp: f64 = gt
                        .iter()
                        .zip(&prior_mean)
                        .map(|(g, m)| -0.5 * (g - m).powi(2) / var)
                        .sum();
                    ll + lp + xi.sum()
                };
                let current_lp = log_target(&sp.xi);
                if !current_lp.is_finite() {
                    return Err(StarError::State(
                        "I-spline weights have zero likelihood at the current state".into(),
                    ));
                }
                sp.ram.adapt = adapt;
                let out = sp.ram.step(&sp.xi, current_lp, log_target, rng);
                self.stats.proposals += 1;
                self.stats.accepted += out.accepted as u64;
                self.stats.ram_fallbacks += out.fallback as u64;
                sp.xi = out.point;

                let gt: Vec<f64> = sp.xi.iter().map(|v| v.exp()).collect();
                let total: f64 = gt.iter().sum();
                s.weights = gt.iter().map(|g| g / total).collect();

                // sigma_gamma^{-2}: Gamma proposal from the conjugate kernel,
                // corrected for the half-normal normalizing constants
                let ss: f64 = gt.iter().zip(&s.prior_mean).map(|(g, m)| (g - m).powi(2)).sum();
                let shape = SIGMA_GAMMA_A + 0.5 * gt.len() as f64;
                let prec_new = draw_gamma(shape, SIGMA_GAMMA_B + 0.5 * ss, rng)?;
                let prec_old = 1.0 / s.prior_var;
                let log_ratio: f64 = s
                    .prior_mean
                    .iter()
                    .map(|m| normal::ln_cdf(m * prec_old.sqrt()) - normal::ln_cdf(m * prec_new.sqrt()))
                    .sum();
                self.stats.variance_proposals += 1;
                if rng.random::<f64>().ln() < log_ratio {
                    s.prior_var = 1.0 / prec_new;
                    self.stats.variance_accepted += 1;
                }
                Ok(())
            }
        }
    }
}
