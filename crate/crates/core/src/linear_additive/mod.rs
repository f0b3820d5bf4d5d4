//! STAR linear and additive models: a linear block `U beta` plus smooth
//! terms `f_j(v_j) = B_j alpha_j`, fitted by data-augmentation Gibbs sampling.

pub mod design;
pub mod latent;
pub mod pspline;
pub mod transform_update;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use design::DesignSpec;
pub use latent::{impute_latents, initial_latents};
pub use pspline::PSplineBlock;
pub use transform_update::{TransformState, TransformStats};

use crate::config::{FitConfig, Likelihood, ModelKind};
use crate::data::Dataset;
use crate::error::{Result, StarError};
use crate::fit::{Diagnostics, Fit, FitHeader, ModelDesign};
use crate::mcmc::{run_chains, starting_latents, ChainSetup, MeanModel};
use crate::rounding::RoundingScheme;
use crate::samplers::{
    draw_gaussian_from_precision, draw_inverse_gamma_variance, draw_truncated_gamma, RngStream,
    SliceConfig,
};

/// Prior constants of the linear and additive models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdditivePriors {
    pub intercept_var: f64,
    /// `sigma^{-2} ~ Gamma(a, b)`.
    pub sigma_shape: f64,
    pub sigma_rate: f64,
    /// `sigma_alpha_j^{-2} ~ Gamma(a, b)`.
    pub smooth_shape: f64,
    pub smooth_rate: f64,
    /// `sigma_beta ~ Uniform(0, ridge_bound)`.
    pub ridge_bound: f64,
}

impl Default for AdditivePriors {
    fn default() -> Self {
        AdditivePriors {
            intercept_var: 1e6,
            sigma_shape: 0.001,
            sigma_rate: 0.001,
            smooth_shape: 0.1,
            smooth_rate: 0.1,
            ridge_bound: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveState {
    pub beta: DVector<f64>,
    pub alpha: Vec<DVector<f64>>,
    pub sigma2: f64,
    /// Ridge precision `sigma_beta^{-2}` of the non-intercept coefficients.
    pub ridge_precision: f64,
    pub smooth_var: Vec<f64>,
}

/// Gaussian full conditional of `beta`: precision `sigma^{-2} U'U + diag(prior)`
/// and mean `Q^{-1} sigma^{-2} U' r`.
pub fn beta_full_conditional(
    u: &DMatrix<f64>,
    resid: &DVector<f64>,
    sigma2: f64,
    prior_precision: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let q = u.tr_mul(u) / sigma2 + DMatrix::from_diagonal(prior_precision);
    let l = u.tr_mul(resid) / sigma2;
    let mean = q.clone().cholesky().map(|c| c.solve(&l)).unwrap_or_else(|| l.clone() * f64::NAN);
    (q, mean)
}

#[derive(Clone, Debug)]
pub struct AdditiveModel {
    u: Arc<DMatrix<f64>>,
    utu: Arc<DMatrix<f64>>,
    blocks: Arc<Vec<DMatrix<f64>>>,
    crossprod: Arc<Vec<Vec<f64>>>,
    priors: AdditivePriors,
    pub state: AdditiveState,
    fitted_linear: DVector<f64>,
    smooth: Vec<DVector<f64>>,
    mu: Vec<f64>,
}

impl AdditiveModel {
    /// Model at a least-squares start for the latents `z`.
    pub fn new(
        u: DMatrix<f64>,
        blocks: Vec<DMatrix<f64>>,
        priors: AdditivePriors,
        z: &[f64],
    ) -> Result<Self> {
        let n = u.nrows();
        if z.len() != n || blocks.iter().any(|b| b.nrows() != n) {
            return Err(StarError::Design("design rows do not match the response".into()));
        }
        let utu = u.tr_mul(&u);
        let crossprod = blocks
            .iter()
            .map(|b| (0..b.ncols()).map(|j| b.column(j).norm_squared()).collect())
            .collect();
        let p = u.ncols();
        let zv = DVector::from_column_slice(z);
        let mut prior = DVector::from_element(p, 1.0);
        prior[0] = 1.0 / priors.intercept_var;
        let (_, beta) = beta_full_conditional(&u, &zv, 1.0, &prior);
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(StarError::Numerical("initial least-squares fit failed".into()));
        }
        let fitted_linear = &u * &beta;
        let resid = &zv - &fitted_linear;
        let sigma2 = (resid.norm_squared() / n.max(1) as f64).max(1e-4);
        let alpha: Vec<DVector<f64>> = blocks.iter().map(|b| DVector::zeros(b.ncols())).collect();
        let smooth: Vec<DVector<f64>> = blocks.iter().map(|_| DVector::zeros(n)).collect();
        let mut m = AdditiveModel {
            u: Arc::new(u),
            utu: Arc::new(utu),
            crossprod: Arc::new(crossprod),
            priors,
            state: AdditiveState {
                beta,
                smooth_var: vec![1.0; blocks.len()],
                alpha,
                sigma2,
                ridge_precision: 1.0,
            },
            blocks: Arc::new(blocks),
            fitted_linear,
            smooth,
            mu: vec![0.0; n],
        };
        m.refresh_mean();
        Ok(m)
    }

    fn refresh_mean(&mut self) {
        for i in 0..self.mu.len() {
            self.mu[i] = self.fitted_linear[i] + self.smooth.iter().map(|f| f[i]).sum::<f64>();
        }
    }

    fn prior_precision(&self) -> DVector<f64> {
        let p = self.u.ncols();
        let mut d = DVector::from_element(p, self.state.ridge_precision);
        d[0] = 1.0 / self.priors.intercept_var;
        d
    }

    /// Steps 2 to 5 of the sweep plus the ridge update, given latents `z`.
    pub fn update_given_latents<R: Rng + ?Sized>(&mut self, z: &[f64], rng: &mut R) -> Result<()> {
        let n = z.len();
        let zv = DVector::from_column_slice(z);
        let sigma2 = self.state.sigma2;

        // beta | rest
        let mut r = zv.clone();
        for f in &self.smooth {
            r -= f;
        }
        let q = &*self.utu / sigma2 + DMatrix::from_diagonal(&self.prior_precision());
        let l = self.u.tr_mul(&r) / sigma2;
        self.state.beta = draw_gaussian_from_precision(&q, &l, rng).map_err(|e| {
            StarError::Numerical(format!(
                "{e}; state: sigma2 = {sigma2}, ridge precision = {}, beta = {:?}",
                self.state.ridge_precision,
                self.state.beta.as_slice()
            ))
        })?;
        self.fitted_linear = &*self.u * &self.state.beta;

        // alpha_j | rest, elementwise since B_j'B_j is diagonal
        for j in 0..self.blocks.len() {
            let b = &self.blocks[j];
            let mut rj = &zv - &self.fitted_linear;
            for (k, f) in self.smooth.iter().enumerate() {
                if k != j {
                    rj -= f;
                }
            }
            let lin = b.tr_mul(&rj) / sigma2;
            let prec_a = 1.0 / self.state.smooth_var[j];
            let a = DVector::from_fn(b.ncols(), |l, _| {
                let q = self.crossprod[j][l] / sigma2 + prec_a;
                lin[l] / q + rng.sample::<f64, _>(StandardNormal) / q.sqrt()
            });
            self.smooth[j] = b * &a;
            self.state.alpha[j] = a;
        }
        self.refresh_mean();

        // sigma^2 | rest
        let ssr: f64 = z.iter().zip(&self.mu).map(|(a, b)| (a - b).powi(2)).sum();
        self.state.sigma2 = draw_inverse_gamma_variance(
            self.priors.sigma_shape + 0.5 * n as f64,
            self.priors.sigma_rate + 0.5 * ssr,
            rng,
        )?;

        // sigma_alpha_j^2 | rest
        for j in 0..self.blocks.len() {
            let a = &self.state.alpha[j];
            self.state.smooth_var[j] = draw_inverse_gamma_variance(
                self.priors.smooth_shape + 0.5 * a.len() as f64,
                self.priors.smooth_rate + 0.5 * a.norm_squared(),
                rng,
            )?;
        }

        // ridge precision | beta, with sigma_beta ~ Uniform(0, A)
        let k = self.u.ncols() - 1;
        if k > 0 {
            let ss: f64 = self.state.beta.iter().skip(1).map(|b| b * b).sum();
            self.state.ridge_precision = draw_truncated_gamma(
                0.5 * (k as f64 - 1.0),
                (0.5 * ss).max(f64::MIN_POSITIVE),
                1.0 / self.priors.ridge_bound.powi(2),
                self.state.ridge_precision,
                rng,
            )?;
        }
        Ok(())
    }
}

impl MeanModel for AdditiveModel {
    type Snapshot = ();

    fn mean(&self) -> &[f64] {
        &self.mu
    }

    fn sigma(&self) -> f64 {
        self.state.sigma2.sqrt()
    }

    fn update(&mut self, z: &[f64], rng: &mut RngStream) -> Result<()> {
        self.update_given_latents(z, rng)
    }

    fn beta(&self) -> Vec<f64> {
        self.state.beta.iter().copied().collect()
    }

    fn alpha(&self) -> Vec<f64> {
        self.state.alpha.iter().flat_map(|a| a.iter().copied()).collect()
    }

    fn snapshot(&self) {}
}

/// One full sweep: latent imputation, the mean-model steps and the
/// transformation update when it is learned.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_sweep_additive<R: Rng + ?Sized>(
    model: &mut AdditiveModel,
    transform: &mut TransformState,
    y: &[u64],
    scheme: &RoundingScheme,
    adapt: bool,
    slice: SliceConfig,
    z: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    latent::impute_latents_into(y, &transform.g, scheme, model.mean(), model.sigma(), rng, z)?;
    model.update_given_latents(z, rng)?;
    if transform.is_learned() {
        let mu = model.mean().to_vec();
        transform.update(y, &mu, model.sigma(), scheme, adapt, slice, rng)?;
    }
    Ok(())
}

/// Fits the linear (`ModelKind::Linear`) or additive model.
pub fn fit_star_additive(data: &Dataset, config: &FitConfig) -> Result<Fit> {
    if data.n() == 0 {
        return Err(StarError::Input("dataset is empty".into()));
    }
    let nonlinear: &[String] = match config.model {
        ModelKind::Additive => &config.nonlinear,
        ModelKind::Linear => &[],
        ModelKind::Bart => {
            return Err(StarError::Parameter("use the BART fitter for tree models".into()))
        }
    };
    let y = config.scheme.prepare_counts(&data.y)?;
    let design = DesignSpec::build(data, nonlinear)?;
    let u = design.linear_matrix(data)?;
    let blocks = design.smooth_matrices(data)?;
    let g0 = match config.likelihood {
        Likelihood::Star => config.transform.instantiate(&y)?,
        Likelihood::Gaussian => crate::transform::Transformation::log(),
    };
    let z0 = starting_latents(&y, &g0, &config.scheme, config.likelihood)?;
    let model = AdditiveModel::new(u, blocks, AdditivePriors::default(), &z0)?;
    let transform = TransformState::new(g0.clone(), &config.mcmc);
    let setup = ChainSetup {
        y: &y,
        scheme: config.scheme,
        likelihood: config.likelihood,
        mcmc: config.mcmc,
        snapshot_every: None,
    };
    let out = run_chains(&model, &transform, &setup)?;
    let diagnostics = Diagnostics::from_run(&out.draws, &out.stats, design.demoted.clone());
    Ok(Fit {
        header: FitHeader::new(
            config.clone(),
            y,
            data.names.clone(),
            g0,
            out.final_transform,
            ModelDesign::Additive(design),
            &out.draws,
            diagnostics,
        ),
        draws: out.draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_conditional_identity_design() {
        let u = DMatrix::identity(2, 2);
        let z = DVector::from_vec(vec![1.4, -0.6]);
        let (q, mean) = beta_full_conditional(&u, &z, 1.0, &DVector::from_element(2, 1.0));
        assert_eq!(q, DMatrix::identity(2, 2) * 2.0);
        assert!((mean - z / 2.0).amax() < 1e-15);
    }

    #[test]
    fn prior_only_limit_draws_from_prior() {
        let u = DMatrix::<f64>::zeros(0, 2);
        let z = DVector::<f64>::zeros(0);
        let prior = DVector::from_vec(vec![1.0, 4.0]);
        let (q, mean) = beta_full_conditional(&u, &z, 1.0, &prior);
        assert_eq!(q, DMatrix::from_diagonal(&prior));
        assert_eq!(mean, DVector::zeros(2));
        let mut rng = RngStream::new(1, 0);
        let n = 50_000;
        let mut ss = [0.0; 2];
        for _ in 0..n {
            let b = draw_gaussian_from_precision(&q, &DVector::zeros(2), &mut rng).unwrap();
            ss[0] += b[0] * b[0];
            ss[1] += b[1] * b[1];
        }
        assert!((ss[0] / n as f64 - 1.0).abs() < 0.03);
        assert!((ss[1] / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn beta_step_matches_analytic_gaussian() {
        // with sigma, ridge and smooth terms frozen, repeated beta draws follow
        // N(Q^{-1} l, Q^{-1})
        let n = 40;
        let u = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => (i as f64 * 0.37).sin(),
            _ => (i as f64 * 0.11).cos(),
        });
        let z: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64 * 0.2).sin()).collect();
        let zv = DVector::from_column_slice(&z);
        let model = AdditiveModel::new(u.clone(), vec![], AdditivePriors::default(), &z).unwrap();
        let prior = model.prior_precision();
        let sigma2 = model.state.sigma2;
        let (q, mean) = beta_full_conditional(&u, &zv, sigma2, &prior);
        let cov = q.clone().try_inverse().unwrap();
        let mut rng = RngStream::new(2, 0);
        let reps = 40_000;
        let mut s = DVector::zeros(3);
        let mut ss = DMatrix::zeros(3, 3);
        for _ in 0..reps {
            let b = draw_gaussian_from_precision(&q, &(u.tr_mul(&zv) / sigma2), &mut rng).unwrap();
            ss += &b * b.transpose();
            s += b;
        }
        let m = s / reps as f64;
        let c = ss / reps as f64 - &m * m.transpose();
        for j in 0..3 {
            let se = (cov[(j, j)] / reps as f64).sqrt();
            assert!((m[j] - mean[j]).abs() < 4.0 * se, "mean {j}");
            assert!((c[(j, j)] / cov[(j, j)] - 1.0).abs() < 0.05, "var {j}");
        }
    }

    #[test]
    fn sweep_keeps_latents_in_cells() {
        let n = 80;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) * 2.0 - 1.0).collect();
        let y: Vec<u64> = x.iter().map(|v| ((1.5 + v).powi(2)).floor() as u64).collect();
        let data = Dataset::new(y.clone(), vec!["x".into()], vec![x]).unwrap();
        let design = DesignSpec::build(&data, &["x".to_string()]).unwrap();
        let g = crate::transform::Transformation::sqrt();
        let scheme = RoundingScheme::floor();
        let mut z = initial_latents(&y, &g, &scheme).unwrap();
        let mut model = AdditiveModel::new(
            design.linear_matrix(&data).unwrap(),
            design.smooth_matrices(&data).unwrap(),
            AdditivePriors::default(),
            &z,
        )
        .unwrap();
        let mut ts = TransformState::new(g.clone(), &Default::default());
        let mut rng = RngStream::new(3, 0);
        for _ in 0..200 {
            gibbs_sweep_additive(&mut model, &mut ts, &y, &scheme, false, SliceConfig::default(), &mut z, &mut rng)
                .unwrap();
            for (&yi, &zi) in y.iter().zip(&z) {
                let (lo, hi) = scheme.latent_cell(yi, &g);
                assert!(zi >= lo && zi <= hi);
            }
        }
        assert!(model.state.sigma2 > 0.0 && model.state.ridge_precision > 1e-8);
        assert!(model.state.smooth_var.iter().all(|&v| v > 0.0));
    }
}
