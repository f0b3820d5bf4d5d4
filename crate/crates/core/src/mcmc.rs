//! Generic STAR chain: latent imputation, a mean-model sweep and the
//! transformation update, with thinned storage of the saved states.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{Likelihood, McmcConfig};
use crate::draws::PosteriorDraws;
use crate::error::Result;
use crate::linear_additive::latent::{impute_latents_into, initial_latents};
use crate::linear_additive::transform_update::{TransformState, TransformStats};
use crate::normal;
use crate::rounding::RoundingScheme;
use crate::samplers::RngStream;
use crate::transform::Transformation;

/// A conditionally Gaussian model for the latent data.
pub trait MeanModel: Clone + Send + Sync {
    type Snapshot: Send;

    /// Current `mu(x_i)` at the training rows.
    fn mean(&self) -> &[f64];
    fn sigma(&self) -> f64;
    /// Updates every mean-model parameter and `sigma` given latents `z`.
    fn update(&mut self, z: &[f64], rng: &mut RngStream) -> Result<()>;
    fn beta(&self) -> Vec<f64> {
        Vec::new()
    }
    fn alpha(&self) -> Vec<f64> {
        Vec::new()
    }
    fn snapshot(&self) -> Self::Snapshot;
}

/// Inputs shared by every chain of one fit.
#[derive(Clone, Debug)]
pub struct ChainSetup<'a> {
    pub y: &'a [u64],
    pub scheme: RoundingScheme,
    pub likelihood: Likelihood,
    pub mcmc: McmcConfig,
    /// Keep a model snapshot at every `snapshot_every`-th saved draw.
    pub snapshot_every: Option<usize>,
}

pub struct ChainOutput<S> {
    pub draws: PosteriorDraws,
    /// `(saved draw index, snapshot)` pairs.
    pub snapshots: Vec<(usize, S)>,
    pub stats: TransformStats,
    pub final_transform: Transformation,
}

/// Latent starting values: `g(y + 1/2)` for STAR, `log(y + 1)` otherwise.
pub fn starting_latents(
    y: &[u64],
    g: &Transformation,
    scheme: &RoundingScheme,
    likelihood: Likelihood,
) -> Result<Vec<f64>> {
    match likelihood {
        Likelihood::Star => initial_latents(y, g, scheme),
        Likelihood::Gaussian => Ok(y.iter().map(|&v| (v as f64).ln_1p()).collect()),
    }
}

/// Pointwise log-likelihood under the STAR pmf.
pub fn star_loglik_row(
    y: &[u64],
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: &[f64],
    sigma: f64,
) -> Vec<f64> {
    let top = scheme.top(g);
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            let (lo, hi) = scheme.latent_cell_with(yi, top, |k| g.eval_edge(k));
            normal::ln_interval_prob((lo - m) / sigma, (hi - m) / sigma)
        })
        .collect()
}

/// Gaussian log-density of `log(y + 1)` with the Jacobian to the count scale.
pub fn gaussian_log_loglik_row(y: &[u64], mu: &[f64], sigma: f64) -> Vec<f64> {
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            let z = (yi as f64).ln_1p();
            let r = (z - m) / sigma;
            -0.5 * r * r - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - z
        })
        .collect()
}

/// Posterior predictive counts `h(g^{-1}(mu + sigma eps))`.
pub fn star_predictive_row<R: Rng + ?Sized>(
    g: &Transformation,
    scheme: &RoundingScheme,
    mu: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    let fine = match g {
        Transformation::ISpline(s) => Some((s, s.fine_values())),
        _ => None,
    };
    let support = g.support_max();
    mu.iter()
        .map(|&m| {
            let z = m + sigma * rng.sample::<f64, _>(StandardNormal);
            let t = match &fine {
                Some((s, values)) => s.inverse_with(z, values),
                None => g.inverse(z),
            };
            let j = scheme.round_latent(t);
            support.map_or(j, |k| j.min(k)) as f64
        })
        .collect()
}

/// Predictive draws on the count scale for the Gaussian model of `log(y + 1)`.
pub fn gaussian_predictive_row<R: Rng + ?Sized>(mu: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    mu.iter()
        .map(|&m| (m + sigma * rng.sample::<f64, _>(StandardNormal)).exp() - 1.0)
        .collect()
}

pub fn run_chain<M: MeanModel>(
    mut model: M,
    mut transform: TransformState,
    setup: &ChainSetup<'_>,
    chain: u64,
) -> Result<ChainOutput<M::Snapshot>> {
    let mcmc = &setup.mcmc;
    let y = setup.y;
    let mut rng = RngStream::new(mcmc.seed, chain);
    let mut z = starting_latents(y, &transform.g, &setup.scheme, setup.likelihood)?;
    let n = y.len();
    let mut draws = PosteriorDraws::empty(
        model.beta().len(),
        model.alpha().len(),
        transform.params().len(),
        n,
    );
    let mut snapshots = Vec::new();
    let total = mcmc.burn_in + mcmc.saved * mcmc.thin;
    let adapt_until = (mcmc.burn_in as f64 * mcmc.adapt_fraction).floor() as usize;
    let star = setup.likelihood == Likelihood::Star;

    for it in 0..total {
        if star && it > 0 {
            impute_latents_into(y, &transform.g, &setup.scheme, model.mean(), model.sigma(), &mut rng, &mut z)?;
        }
        model.update(&z, &mut rng)?;
        if star && transform.is_learned() {
            transform.update(
                y,
                model.mean(),
                model.sigma(),
                &setup.scheme,
                it < adapt_until,
                mcmc.slice,
                &mut rng,
            )?;
        }
        if it >= mcmc.burn_in && (it - mcmc.burn_in + 1).is_multiple_of(mcmc.thin) {
            let s = draws.len();
            let (mu, sigma) = (model.mean(), model.sigma());
            draws.beta.push(&model.beta());
            draws.alpha.push(&model.alpha());
            draws.sigma.push(&[sigma]);
            draws.transform.push(&transform.params());
            draws.mu.push(mu);
            if star {
                draws.loglik.push(&star_loglik_row(y, &transform.g, &setup.scheme, mu, sigma));
                draws.y_pred.push(&star_predictive_row(&transform.g, &setup.scheme, mu, sigma, &mut rng));
            } else {
                draws.loglik.push(&gaussian_log_loglik_row(y, mu, sigma));
                draws.y_pred.push(&gaussian_predictive_row(mu, sigma, &mut rng));
            }
            if setup.snapshot_every.is_some_and(|k| s.is_multiple_of(k)) {
                snapshots.push((s, model.snapshot()));
            }
        }
    }
    draws.chain_lengths = vec![draws.len()];
    Ok(ChainOutput {
        draws,
        snapshots,
        stats: transform.stats,
        final_transform: transform.g,
    })
}

/// Runs `mcmc.chains` chains concurrently (stream `c` for chain `c`) and
/// merges them in chain order.
pub fn run_chains<M: MeanModel>(
    model: &M,
    transform: &TransformState,
    setup: &ChainSetup<'_>,
) -> Result<ChainOutput<M::Snapshot>> {
    setup.mcmc.validate()?;
    let outputs: Vec<Result<ChainOutput<M::Snapshot>>> = (0..setup.mcmc.chains as u64)
        .into_par_iter()
        .map(|c| run_chain(model.clone(), transform.clone(), setup, c))
        .collect();
    let mut iter = outputs.into_iter();
    let mut merged = iter.next().expect("at least one chain")?;
    for out in iter {
        let out = out?;
        let offset = merged.draws.len();
        merged.draws.append(&out.draws);
        merged
            .snapshots
            .extend(out.snapshots.into_iter().map(|(s, snap)| (s + offset, snap)));
        merged.stats.merge(&out.stats);
    }
    Ok(merged)
}
