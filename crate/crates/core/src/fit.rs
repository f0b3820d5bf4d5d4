//! Fitted models: header metadata, persistence and prediction at new rows.
//!
//! A fit is stored as a JSON header (`fit.json`) next to a binary file with
//! the same stem (`fit.bin`) holding every draw block in column-major
//! little-endian order.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bart::{fit_bart_star, BartDesign};
use crate::config::{FitConfig, Likelihood, ModelKind};
use crate::data::Dataset;
use crate::draws::{BlockInfo, DrawMatrix, PosteriorDraws};
use crate::error::{Result, StarError};
use crate::linear_additive::{fit_star_additive, DesignSpec, TransformStats};
use crate::mcmc::{gaussian_log_loglik_row, gaussian_predictive_row, star_loglik_row, star_predictive_row};
use crate::metrics;
use crate::rounding;
use crate::samplers::RngStream;
use crate::transform::Transformation;

pub const FORMAT: &str = "star-fit/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelDesign {
    Additive(DesignSpec),
    Bart(BartDesign),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub saved_draws: usize,
    pub chains: usize,
    /// Acceptance rate of the I-spline weight proposals.
    pub transform_acceptance: Option<f64>,
    pub ram_fallbacks: u64,
    pub variance_acceptance: Option<f64>,
    pub ess_sigma: Option<f64>,
    pub ess_transform: Vec<f64>,
    pub demoted: Vec<String>,
    pub trees: Option<usize>,
}

impl Diagnostics {
    pub fn from_run(draws: &PosteriorDraws, stats: &TransformStats, demoted: Vec<String>) -> Self {
        let ess = |v: Vec<f64>| metrics::ess(&v).ok().map(|e| e.value);
        Diagnostics {
            saved_draws: draws.len(),
            chains: draws.chain_lengths.len(),
            transform_acceptance: stats.acceptance_rate(),
            ram_fallbacks: stats.ram_fallbacks,
            variance_acceptance: (stats.variance_proposals > 0)
                .then(|| stats.variance_accepted as f64 / stats.variance_proposals as f64),
            ess_sigma: ess(draws.sigma.column(0)),
            ess_transform: (0..draws.transform.cols())
                .filter_map(|j| ess(draws.transform.column(j)))
                .collect(),
            demoted,
            trees: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitHeader {
    pub format: String,
    pub label: String,
    pub config: FitConfig,
    /// Training counts after preparation for the rounding scheme.
    pub response: Vec<u64>,
    pub predictors: Vec<String>,
    /// Transformation at the start of sampling; learned parameters per draw
    /// live in the `transform` block.
    pub transformation: Transformation,
    pub final_transformation: Transformation,
    pub design: ModelDesign,
    pub blocks: Vec<BlockInfo>,
    pub chain_lengths: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl FitHeader {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: FitConfig,
        response: Vec<u64>,
        predictors: Vec<String>,
        transformation: Transformation,
        final_transformation: Transformation,
        design: ModelDesign,
        draws: &PosteriorDraws,
        diagnostics: Diagnostics,
    ) -> Self {
        FitHeader {
            format: FORMAT.to_string(),
            label: config.label(),
            config,
            response,
            predictors,
            transformation,
            final_transformation,
            design,
            blocks: draws.block_info(),
            chain_lengths: draws.chain_lengths.clone(),
            diagnostics,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub header: FitHeader,
    pub draws: PosteriorDraws,
}

/// Posterior means at new rows, with the saved-draw index of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanDraws {
    pub draw_index: Vec<usize>,
    pub mu: DrawMatrix,
}

/// Fits the configured model.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<Fit> {
    match config.model {
        ModelKind::Linear | ModelKind::Additive => fit_star_additive(data, config),
        ModelKind::Bart => fit_bart_star(data, config),
    }
}

/// `fit.json` -> `fit.bin`.
pub fn binary_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

impl Fit {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_vec_pretty(&self.header)?;
        json.push(b'\n');
        fs::write(path, json)?;
        fs::write(binary_path(path), self.draws.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let header: FitHeader = serde_json::from_slice(&fs::read(path)?)?;
        if header.format != FORMAT {
            return Err(StarError::Input(format!("unsupported fit format {:?}", header.format)));
        }
        let bytes = fs::read(binary_path(path))?;
        let draws = PosteriorDraws::from_bytes(&header.blocks, header.chain_lengths.clone(), &bytes)?;
        Ok(Fit { header, draws })
    }

    pub fn likelihood(&self) -> Likelihood {
        self.header.config.likelihood
    }

    pub fn transformation_at(&self, s: usize) -> Transformation {
        self.draws.transformation_at(&self.header.transformation, s)
    }

    /// Predictor columns of `data` in training order.
    fn columns<'a>(&self, data: &'a Dataset) -> Result<Vec<&'a [f64]>> {
        self.header.predictors.iter().map(|n| data.column(n)).collect()
    }

    /// Draws of `mu(x)` at the rows of `data`. Additive models use every
    /// saved draw; BART uses the stored ensembles.
    pub fn predict_mean(&self, data: &Dataset) -> Result<MeanDraws> {
        let n = data.n();
        let mut mu = DrawMatrix::new(n);
        let mut draw_index = Vec::new();
        match &self.header.design {
            ModelDesign::Additive(design) => {
                let u = design.linear_matrix(data)?;
                let blocks = design.smooth_matrices(data)?;
                let dims = design.smooth_dims();
                for s in 0..self.draws.len() {
                    let mut m = &u * DVector::from_row_slice(self.draws.beta.row(s));
                    let alpha = self.draws.alpha.row(s);
                    let mut off = 0;
                    for (b, &d) in blocks.iter().zip(&dims) {
                        m += b * DVector::from_row_slice(&alpha[off..off + d]);
                        off += d;
                    }
                    mu.push(m.as_slice());
                    draw_index.push(s);
                }
            }
            ModelDesign::Bart(design) => {
                let cols = self.columns(data)?;
                let mut row = vec![0.0; cols.len()];
                for stored in &design.ensembles {
                    let m: Vec<f64> = (0..n)
                        .map(|i| {
                            for (r, c) in row.iter_mut().zip(&cols) {
                                *r = c[i];
                            }
                            design.predict(stored, &row)
                        })
                        .collect();
                    mu.push(&m);
                    draw_index.push(stored.draw);
                }
            }
        }
        Ok(MeanDraws { draw_index, mu })
    }

    /// Pointwise log-likelihood of the counts in `data` under each draw.
    pub fn test_loglik(&self, data: &Dataset) -> Result<DrawMatrix> {
        let scheme = self.header.config.scheme;
        let y = scheme.prepare_counts(&data.y)?;
        let means = self.predict_mean(data)?;
        let mut out = DrawMatrix::new(y.len());
        for (r, &s) in means.draw_index.iter().enumerate() {
            let sigma = self.draws.sigma.get(s, 0);
            let mu = means.mu.row(r);
            let row = match self.likelihood() {
                Likelihood::Star => star_loglik_row(&y, &self.transformation_at(s), &scheme, mu, sigma),
                Likelihood::Gaussian => gaussian_log_loglik_row(&y, mu, sigma),
            };
            out.push(&row);
        }
        Ok(out)
    }

    /// Posterior predictive draws at the rows of `data`.
    pub fn predictive(&self, data: &Dataset, seed: u64) -> Result<DrawMatrix> {
        let scheme = self.header.config.scheme;
        let means = self.predict_mean(data)?;
        let mut rng = RngStream::new(seed, 0);
        let mut out = DrawMatrix::new(data.n());
        for (r, &s) in means.draw_index.iter().enumerate() {
            let sigma = self.draws.sigma.get(s, 0);
            let mu = means.mu.row(r);
            let row = match self.likelihood() {
                Likelihood::Star => star_predictive_row(&self.transformation_at(s), &scheme, mu, sigma, &mut rng),
                Likelihood::Gaussian => gaussian_predictive_row(mu, sigma, &mut rng),
            };
            out.push(&row);
        }
        Ok(out)
    }

    /// Draws of `P(y = 0 | x)` at the rows of `data`.
    pub fn zero_probability(&self, data: &Dataset) -> Result<DrawMatrix> {
        let scheme = self.header.config.scheme;
        let means = self.predict_mean(data)?;
        let mut out = DrawMatrix::new(data.n());
        for (r, &s) in means.draw_index.iter().enumerate() {
            let sigma = self.draws.sigma.get(s, 0);
            let g = self.transformation_at(s);
            let row: Vec<f64> = means
                .mu
                .row(r)
                .iter()
                .map(|&m| match self.likelihood() {
                    Likelihood::Star => rounding::pmf(0, &g, &scheme, m, sigma),
                    // P(exp(z) - 1 < 1/2) for the continuous Gaussian model
                    Likelihood::Gaussian => Ok(crate::normal::cdf((1.5f64.ln() - m) / sigma)),
                })
                .collect::<Result<_>>()?;
            out.push(&row);
        }
        Ok(out)
    }

    /// Posterior mean of `E[y | x]` at the training rows.
    pub fn fitted_expectation(&self) -> Result<Vec<f64>> {
        let n = self.header.response.len();
        let scheme = self.header.config.scheme;
        let q = self.header.config.tail_quantile;
        let s_total = self.draws.len();
        let mut acc = vec![0.0; n];
        for s in 0..s_total {
            let sigma = self.draws.sigma.get(s, 0);
            let g = self.transformation_at(s);
            for (i, a) in acc.iter_mut().enumerate() {
                let m = self.draws.mu.get(s, i);
                *a += match self.likelihood() {
                    Likelihood::Star => rounding::conditional_expectation(&g, &scheme, m, sigma, q)?,
                    Likelihood::Gaussian => (m + 0.5 * sigma * sigma).exp() - 1.0,
                };
            }
        }
        Ok(acc.into_iter().map(|a| a / s_total.max(1) as f64).collect())
    }
}
