//! Latent data augmentation and the collapsed STAR likelihood.

use crate::error::{Result, StarError};
use crate::normal;
use crate::rounding::RoundingScheme;
use crate::samplers::sample_truncated_normal;
use crate::transform::Transformation;
use rand::Rng;

/// Draws `z*_i ~ N(mu_i, sigma^2)` truncated to `g(A_{y_i})`.
pub fn impute_latents<R: Rng + ?Sized>(
    y: &[u64],
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut z = vec![0.0; y.len()];
    impute_latents_into(y, g, scheme, mu, sigma, rng, &mut z)?;
    Ok(z)
}

pub fn impute_latents_into<R: Rng + ?Sized>(
    y: &[u64],
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: &[f64],
    sigma: f64,
    rng: &mut R,
    z: &mut [f64],
) -> Result<()> {
    let top = scheme.top(g);
    for (i, &yi) in y.iter().enumerate() {
        let (lo, hi) = scheme.latent_cell_with(yi, top, |k| g.eval_edge(k));
        if !(hi > lo) {
            return Err(StarError::Degeneracy(format!(
                "observation {i} (y = {yi}) has an empty latent cell [{lo}, {hi})"
            )));
        }
        z[i] = sample_truncated_normal(mu[i], sigma, lo, hi, rng)?;
        debug_assert!(z[i] >= lo && z[i] <= hi);
    }
    Ok(())
}

/// Deterministic starting latents: `g(y + 1/2)` moved inside each cell.
pub fn initial_latents(y: &[u64], g: &Transformation, scheme: &RoundingScheme) -> Result<Vec<f64>> {
    let top = scheme.top(g);
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let (lo, hi) = scheme.latent_cell_with(yi, top, |k| g.eval_edge(k));
            if !(hi > lo) {
                return Err(StarError::Degeneracy(format!(
                    "observation {i} (y = {yi}) has an empty latent cell"
                )));
            }
            let c = g.evaluate(yi as f64 + 0.5)?;
            Ok(if c >= lo && c < hi {
                c
            } else if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo
            } else {
                hi - 1.0
            })
        })
        .collect()
}

/// `sum_i log P(y_i | mu_i, sigma, g)` with the cell edges supplied by `edge`.
pub fn collapsed_loglik_with(
    y: &[u64],
    mu: &[f64],
    sigma: f64,
    scheme: &RoundingScheme,
    top: Option<u64>,
    edge: impl Fn(u64) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (&yi, &m) in y.iter().zip(mu) {
        let (lo, hi) = scheme.latent_cell_with(yi, top, &edge);
        total += normal::ln_interval_prob((lo - m) / sigma, (hi - m) / sigma);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

pub fn collapsed_loglik(
    y: &[u64],
    mu: &[f64],
    sigma: f64,
    scheme: &RoundingScheme,
    g: &Transformation,
) -> f64 {
    collapsed_loglik_with(y, mu, sigma, scheme, scheme.top(g), |k| g.eval_edge(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RngStream;

    #[test]
    fn lemma_one_zeros_are_negative() {
        let mut rng = RngStream::new(1, 0);
        let s = RoundingScheme::floor();
        for g in [Transformation::identity(), Transformation::sqrt(), Transformation::log()] {
            let z = impute_latents(&[0; 500], &g, &s, &[0.7; 500], 1.3, &mut rng).unwrap();
            assert!(z.iter().all(|&v| v < 0.0));
        }
    }

    #[test]
    fn identity_cell_for_three() {
        let mut rng = RngStream::new(2, 0);
        let z = impute_latents(
            &[3; 1000],
            &Transformation::identity(),
            &RoundingScheme::floor(),
            &[0.0; 1000],
            2.0,
            &mut rng,
        )
        .unwrap();
        assert!(z.iter().all(|&v| (2.0..=3.0).contains(&v)));
    }

    #[test]
    fn intercept_only_imputation_matches_truncated_mean() {
        // doubly truncated normal mean: mu + sigma (phi(a) - phi(b)) / (Phi(b) - Phi(a))
        let g = Transformation::sqrt();
        let s = RoundingScheme::floor();
        let (mu, sigma) = (1.0, 0.8);
        let (lo, hi) = s.latent_cell(2, &g);
        let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
        let exact = mu + sigma * (normal::pdf(a) - normal::pdf(b)) / normal::interval_prob(a, b);
        let mut rng = RngStream::new(3, 0);
        let mut total = 0.0;
        let sweeps = 10_000;
        for _ in 0..sweeps {
            total += impute_latents(&[2], &g, &s, &[mu], sigma, &mut rng).unwrap()[0];
        }
        assert!((total / sweeps as f64 - exact).abs() < 1e-2);
    }

    #[test]
    fn initial_latents_sit_in_cells() {
        let y = [0u64, 1, 4, 5];
        for g in [Transformation::identity(), Transformation::log()] {
            let s = RoundingScheme::censored(5);
            let z = initial_latents(&y, &g, &s).unwrap();
            for (&yi, &zi) in y.iter().zip(&z) {
                let (lo, hi) = s.latent_cell(yi, &g);
                assert!(zi >= lo && zi < hi);
            }
        }
    }
}
