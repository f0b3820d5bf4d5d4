//! BART-STAR: a sum-of-trees latent mean updated by Bayesian backfitting
//! inside the STAR data-augmentation sampler.

pub mod tree;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub use tree::{NodeRepr, Tree};

use crate::config::{BartConfig, FitConfig, Likelihood, ModelKind};
use crate::data::Dataset;
use crate::error::{Result, StarError};
use crate::fit::{Diagnostics, Fit, FitHeader, ModelDesign};
use crate::linear_additive::{fit_star_additive, TransformState};
use crate::mcmc::{run_chains, starting_latents, ChainSetup, MeanModel};
use crate::samplers::{draw_inverse_gamma_variance, RngStream};

/// Chipman et al. tree prior and proposal settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub alpha: f64,
    pub beta: f64,
    /// Leaf prior standard deviation on the scaled response.
    pub leaf_sd: f64,
    pub min_leaf: usize,
    pub p_grow: f64,
    pub p_prune: f64,
}

impl TreePrior {
    pub fn from_config(cfg: &BartConfig) -> Self {
        TreePrior {
            alpha: cfg.alpha,
            beta: cfg.beta,
            leaf_sd: 0.5 / (cfg.k * (cfg.trees as f64).sqrt()),
            min_leaf: cfg.min_leaf,
            p_grow: cfg.p_grow,
            p_prune: cfg.p_prune,
        }
    }

    /// Prior probability that a node at `depth` splits: `alpha (1 + d)^{-beta}`.
    pub fn split_prob(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }

    fn grow_prob(&self, t: &Tree) -> f64 {
        if t.is_stump() {
            1.0
        } else {
            self.p_grow
        }
    }

    fn prune_prob(&self, t: &Tree) -> f64 {
        if t.is_stump() {
            0.0
        } else {
            self.p_prune
        }
    }

    /// Proposal probabilities `(grow, prune, change)` for the current tree.
    pub fn move_probs(&self, t: &Tree) -> (f64, f64, f64) {
        if t.is_stump() {
            (1.0, 0.0, 0.0)
        } else {
            (self.p_grow, self.p_prune, 1.0 - self.p_grow - self.p_prune)
        }
    }

    /// Log prior ratio for splitting a leaf at `depth` into two leaves.
    fn log_split_ratio(&self, depth: usize) -> f64 {
        let p = self.split_prob(depth);
        let pc = self.split_prob(depth + 1);
        p.ln() + 2.0 * (1.0 - pc).ln() - (1.0 - p).ln()
    }
}

/// Inverse-chi-square prior `sigma^2 ~ nu lambda / chi^2_nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPrior {
    pub nu: f64,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub q: f64,
}

impl SigmaPrior {
    /// Prior with `P(sigma < sigma_hat) = q`.
    pub fn from_estimate(sigma_hat: f64, nu: f64, q: f64) -> Result<Self> {
        if !(sigma_hat > 0.0) || !(nu > 0.0) || !(q > 0.0 && q < 1.0) {
            return Err(StarError::Parameter(format!(
                "invalid sigma prior inputs ({sigma_hat}, {nu}, {q})"
            )));
        }
        let chi = ChiSquared::new(nu).map_err(|e| StarError::Parameter(e.to_string()))?;
        let lambda = sigma_hat * sigma_hat * chi.inverse_cdf(1.0 - q) / nu;
        Ok(SigmaPrior {
            nu,
            lambda,
            sigma_hat,
            q,
        })
    }

    /// Prior `P(sigma < s)`.
    pub fn cdf(&self, s: f64) -> f64 {
        let chi = ChiSquared::new(self.nu).expect("validated degrees of freedom");
        1.0 - chi.cdf(self.nu * self.lambda / (s * s))
    }
}

/// Fits the STAR linear model with the same transformation and sets the
/// `sigma` prior from the posterior median of `sigma`.
pub fn calibrate_sigma_prior(data: &Dataset, config: &FitConfig) -> Result<SigmaPrior> {
    let mut lin = config.clone();
    lin.model = ModelKind::Linear;
    lin.mcmc = config.bart.calibration;
    lin.mcmc.seed = config.mcmc.seed.wrapping_add(0x5eed);
    lin.mcmc.chains = 1;
    let fit = fit_star_additive(data, &lin)?;
    let mut s = fit.draws.sigma.column(0);
    s.sort_by(f64::total_cmp);
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
    };
    SigmaPrior::from_estimate(median, config.bart.nu, config.bart.q)
}

/// Log marginal likelihood of a leaf with `n` residuals summing to `s`,
/// without the terms that cancel in every move ratio.
fn leaf_lml(n: usize, s: f64, sigma2: f64, tau2: f64) -> f64 {
    let d = sigma2 + n as f64 * tau2;
    0.5 * (sigma2 / d).ln() + tau2 * s * s / (2.0 * sigma2 * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Grow,
    Prune,
    Change,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoveOutcome {
    pub kind: Move,
    pub accepted: bool,
}

/// Candidate split of the observations `obs` at a random available rule.
fn propose_rule<R: Rng + ?Sized>(
    obs: &[usize],
    x: &[Vec<f64>],
    rng: &mut R,
) -> Option<(usize, f64)> {
    let vars: Vec<usize> = (0..x.len())
        .filter(|&j| {
            let first = x[j][obs[0]];
            obs.iter().any(|&i| x[j][i] != first)
        })
        .collect();
    if vars.is_empty() {
        return None;
    }
    let var = vars[rng.random_range(0..vars.len())];
    let mut vals: Vec<f64> = obs.iter().map(|&i| x[var][i]).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    // the smallest value would leave the left child empty
    let cut = vals[rng.random_range(1..vals.len())];
    Some((var, cut))
}

fn split_stats(obs: &[usize], x: &[Vec<f64>], resid: &[f64], var: usize, cut: f64) -> ((usize, f64), (usize, f64)) {
    let mut l = (0, 0.0);
    let mut r = (0, 0.0);
    for &i in obs {
        if x[var][i] < cut {
            l.0 += 1;
            l.1 += resid[i];
        } else {
            r.0 += 1;
            r.1 += resid[i];
        }
    }
    (l, r)
}

/// One grow/prune/change Metropolis-Hastings move on `tree` for the partial
/// residual `resid`, followed by a Gibbs draw of every leaf value.
pub fn tree_update<R: Rng + ?Sized>(
    tree: &mut Tree,
    resid: &[f64],
    x: &[Vec<f64>],
    sigma2: f64,
    prior: &TreePrior,
    rng: &mut R,
) -> MoveOutcome {
    let n = resid.len();
    let tau2 = prior.leaf_sd * prior.leaf_sd;
    let assign = tree.assign(x, n);
    let members = |node: usize| -> Vec<usize> { (0..n).filter(|&i| assign[i] == node).collect() };
    let sum = |obs: &[usize]| -> f64 { obs.iter().map(|&i| resid[i]).sum() };

    let (pg, pp, _) = prior.move_probs(tree);
    let u: f64 = rng.random();
    let kind = if u < pg {
        Move::Grow
    } else if u < pg + pp {
        Move::Prune
    } else {
        Move::Change
    };

    let accepted = match kind {
        Move::Grow => {
            let leaves = tree.leaves();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let obs = members(leaf);
            match (obs.len() >= 2 * prior.min_leaf)
                .then(|| propose_rule(&obs, x, rng))
                .flatten()
            {
                None => false,
                Some((var, cut)) => {
                    let ((nl, sl), (nr, sr)) = split_stats(&obs, x, resid, var, cut);
                    if nl < prior.min_leaf || nr < prior.min_leaf {
                        false
                    } else {
                        let mut grown = tree.clone();
                        grown.grow(leaf, var, cut);
                        let log_lik = leaf_lml(nl, sl, sigma2, tau2) + leaf_lml(nr, sr, sigma2, tau2)
                            - leaf_lml(obs.len(), sum(&obs), sigma2, tau2);
                        let log_prop = (prior.prune_prob(&grown) / grown.nogs().len() as f64).ln()
                            - (prior.grow_prob(tree) / leaves.len() as f64).ln();
                        let log_r = log_lik + prior.log_split_ratio(tree.depth(leaf)) + log_prop;
                        let ok = rng.random::<f64>().ln() < log_r;
                        if ok {
                            *tree = grown;
                        }
                        ok
                    }
                }
            }
        }
        Move::Prune => {
            let nogs = tree.nogs();
            let node = nogs[rng.random_range(0..nogs.len())];
            let (l, r) = tree.children(node).expect("nog has children");
            let (ol, or) = (members(l), members(r));
            let (sl, sr) = (sum(&ol), sum(&or));
            let mut pruned = tree.clone();
            pruned.prune(node, 0.0);
            let log_lik = leaf_lml(ol.len() + or.len(), sl + sr, sigma2, tau2)
                - leaf_lml(ol.len(), sl, sigma2, tau2)
                - leaf_lml(or.len(), sr, sigma2, tau2);
            let log_prop = (prior.grow_prob(&pruned) / pruned.leaves().len() as f64).ln()
                - (prior.prune_prob(tree) / nogs.len() as f64).ln();
            let log_r = log_lik - prior.log_split_ratio(tree.depth(node)) + log_prop;
            let ok = rng.random::<f64>().ln() < log_r;
            if ok {
                *tree = pruned;
            }
            ok
        }
        Move::Change => {
            let nogs = tree.nogs();
            let node = nogs[rng.random_range(0..nogs.len())];
            let (l, r) = tree.children(node).expect("nog has children");
            let (ol, or) = (members(l), members(r));
            let mut obs = ol.clone();
            obs.extend_from_slice(&or);
            obs.sort_unstable();
            match propose_rule(&obs, x, rng) {
                None => false,
                Some((var, cut)) => {
                    let ((nl, sl), (nr, sr)) = split_stats(&obs, x, resid, var, cut);
                    if nl < prior.min_leaf || nr < prior.min_leaf {
                        false
                    } else {
                        let log_r = leaf_lml(nl, sl, sigma2, tau2) + leaf_lml(nr, sr, sigma2, tau2)
                            - leaf_lml(ol.len(), sum(&ol), sigma2, tau2)
                            - leaf_lml(or.len(), sum(&or), sigma2, tau2);
                        let ok = rng.random::<f64>().ln() < log_r;
                        if ok {
                            tree.set_rule(node, var, cut);
                        }
                        ok
                    }
                }
            }
        }
    };

    draw_leaves(tree, resid, x, sigma2, tau2, rng);
    MoveOutcome { kind, accepted }
}

/// Leaf values from `N(tau^2 S / (sigma^2 + n tau^2), sigma^2 tau^2 / (sigma^2 + n tau^2))`.
pub fn draw_leaves<R: Rng + ?Sized>(
    tree: &mut Tree,
    resid: &[f64],
    x: &[Vec<f64>],
    sigma2: f64,
    tau2: f64,
    rng: &mut R,
) {
    let assign = tree.assign(x, resid.len());
    let mut stats = vec![(0usize, 0.0f64); tree.len()];
    for (i, &leaf) in assign.iter().enumerate() {
        stats[leaf].0 += 1;
        stats[leaf].1 += resid[i];
    }
    for leaf in tree.leaves() {
        let (n, s) = stats[leaf];
        let d = sigma2 + n as f64 * tau2;
        let mean = tau2 * s / d;
        let sd = (sigma2 * tau2 / d).sqrt();
        tree.set_leaf_value(leaf, mean + sd * rng.sample::<f64, _>(StandardNormal));
    }
}

/// Sum of trees on the scaled response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn predict(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum()
    }
}

/// `mu(x) = sum_k f(x; T_k, M_k)` on the scale of the latent data.
pub fn predict_ensemble(ensemble: &Ensemble, scaling: (f64, f64), x: &[f64]) -> f64 {
    scaling.0 + scaling.1 * ensemble.predict(|j| x[j])
}

#[derive(Clone, Debug)]
pub struct BartModel {
    x: Arc<Vec<Vec<f64>>>,
    prior: TreePrior,
    sigma_prior: SigmaPrior,
    pub trees: Vec<Tree>,
    tree_fit: Vec<Vec<f64>>,
    /// Sum of tree fits, scaled units.
    total_fit: Vec<f64>,
    /// `(center, range)` mapping scaled units to latent units.
    pub scaling: (f64, f64),
    /// Residual variance in scaled units.
    sigma2: f64,
    mu: Vec<f64>,
    pub moves: [[u64; 2]; 3],
}

impl BartModel {
    /// Ensemble of stumps with the response scaling fixed from `z0`.
    pub fn new(columns: Vec<Vec<f64>>, z0: &[f64], cfg: &BartConfig, sigma_prior: SigmaPrior) -> Result<Self> {
        if cfg.trees == 0 {
            return Err(StarError::Parameter("BART needs at least one tree".into()));
        }
        let n = z0.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(StarError::Design("predictor rows do not match the response".into()));
        }
        let lo = z0.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = z0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        let center = if hi > lo { 0.5 * (hi + lo) } else { lo };
        let sigma2 = (sigma_prior.sigma_hat / range).powi(2);
        let mut m = BartModel {
            x: Arc::new(columns),
            prior: TreePrior::from_config(cfg),
            sigma_prior,
            trees: vec![Tree::stump(0.0); cfg.trees],
            tree_fit: vec![vec![0.0; n]; cfg.trees],
            total_fit: vec![0.0; n],
            scaling: (center, range),
            sigma2,
            mu: vec![center; n],
            moves: [[0; 2]; 3],
        };
        m.refresh_mu();
        Ok(m)
    }

    fn refresh_mu(&mut self) {
        let (c, r) = self.scaling;
        for (m, f) in self.mu.iter_mut().zip(&self.total_fit) {
            *m = c + r * f;
        }
    }

    /// Scaled residual `z~ - sum_k tree_k(x)` kept by the backfitting loop.
    pub fn scaled_residual(&self, z: &[f64]) -> Vec<f64> {
        let (c, r) = self.scaling;
        z.iter().zip(&self.total_fit).map(|(zi, f)| (zi - c) / r - f).collect()
    }

    /// Recomputes every tree fit from scratch.
    pub fn recomputed_fit(&self) -> Vec<f64> {
        let n = self.total_fit.len();
        (0..n)
            .map(|i| self.trees.iter().map(|t| t.predict(|j| self.x[j][i])).sum())
            .collect()
    }

    pub fn ensemble(&self) -> Ensemble {
        Ensemble {
            trees: self.trees.clone(),
        }
    }
}

impl MeanModel for BartModel {
    type Snapshot = Ensemble;

    fn mean(&self) -> &[f64] {
        &self.mu
    }

    fn sigma(&self) -> f64 {
        self.sigma2.sqrt() * self.scaling.1
    }

    fn update(&mut self, z: &[f64], rng: &mut RngStream) -> Result<()> {
        let (c, r) = self.scaling;
        let n = z.len();
        let zs: Vec<f64> = z.iter().map(|v| (v - c) / r).collect();
        let mut partial = vec![0.0; n];
        for k in 0..self.trees.len() {
            for i in 0..n {
                partial[i] = zs[i] - (self.total_fit[i] - self.tree_fit[k][i]);
            }
            let out = tree_update(&mut self.trees[k], &partial, &self.x, self.sigma2, &self.prior, rng);
            let idx = out.kind as usize;
            self.moves[idx][0] += 1;
            self.moves[idx][1] += out.accepted as u64;
            let tree = &self.trees[k];
            for i in 0..n {
                let v = tree.predict(|j| self.x[j][i]);
                self.total_fit[i] += v - self.tree_fit[k][i];
                self.tree_fit[k][i] = v;
            }
        }
        let ssr: f64 = zs.iter().zip(&self.total_fit).map(|(a, b)| (a - b).powi(2)).sum();
        let lambda_s = self.sigma_prior.lambda / (r * r);
        let nu = self.sigma_prior.nu;
        self.sigma2 = draw_inverse_gamma_variance(0.5 * (nu + n as f64), 0.5 * (nu * lambda_s + ssr), rng)?;
        self.refresh_mu();
        Ok(())
    }

    fn snapshot(&self) -> Ensemble {
        self.ensemble()
    }
}

/// Trees kept for prediction at new rows, tagged with their saved-draw index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredEnsemble {
    pub draw: usize,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BartDesign {
    pub predictors: Vec<String>,
    pub trees: usize,
    /// `(center, range)` of the scaled response.
    pub scaling: (f64, f64),
    pub tree_prior: TreePrior,
    pub sigma_prior: SigmaPrior,
    pub ensembles: Vec<StoredEnsemble>,
}

impl BartDesign {
    pub fn predict(&self, stored: &StoredEnsemble, x: &[f64]) -> f64 {
        self.scaling.0 + self.scaling.1 * stored.trees.iter().map(|t| t.predict(|j| x[j])).sum::<f64>()
    }
}

pub fn fit_bart_star(data: &Dataset, config: &FitConfig) -> Result<Fit> {
    if config.model != ModelKind::Bart {
        return Err(StarError::Parameter("configuration does not request a BART model".into()));
    }
    if data.n() == 0 || data.p() == 0 {
        return Err(StarError::Input("BART needs rows and at least one predictor".into()));
    }
    let y = config.scheme.prepare_counts(&data.y)?;
    let g0 = match config.likelihood {
        Likelihood::Star => config.transform.instantiate(&y)?,
        Likelihood::Gaussian => crate::transform::Transformation::log(),
    };
    let sigma_prior = calibrate_sigma_prior(data, config)?;
    let z0 = starting_latents(&y, &g0, &config.scheme, config.likelihood)?;
    let model = BartModel::new(data.columns.clone(), &z0, &config.bart, sigma_prior)?;
    let transform = TransformState::new(g0.clone(), &config.mcmc);
    let total = config.mcmc.saved * config.mcmc.chains;
    let every = total.div_ceil(config.bart.stored_ensembles.max(1)).max(1);
    let setup = ChainSetup {
        y: &y,
        scheme: config.scheme,
        likelihood: config.likelihood,
        mcmc: config.mcmc,
        snapshot_every: Some(every),
    };
    let out = run_chains(&model, &transform, &setup)?;
    let mut diagnostics = Diagnostics::from_run(&out.draws, &out.stats, Vec::new());
    diagnostics.trees = Some(config.bart.trees);
    let design = BartDesign {
        predictors: data.names.clone(),
        trees: config.bart.trees,
        scaling: model.scaling,
        tree_prior: TreePrior::from_config(&config.bart),
        sigma_prior,
        ensembles: out
            .snapshots
            .into_iter()
            .map(|(draw, e)| StoredEnsemble { draw, trees: e.trees })
            .collect(),
    };
    Ok(Fit {
        header: FitHeader::new(
            config.clone(),
            y,
            data.names.clone(),
            g0,
            out.final_transform,
            ModelDesign::Bart(design),
            &out.draws,
            diagnostics,
        ),
        draws: out.draws,
    })
}
