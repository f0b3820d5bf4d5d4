//! Synthetic negative-binomial designs and the replicated-experiment driver.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BartConfig, FitConfig, Likelihood, McmcConfig};
use crate::data::Dataset;
use crate::error::{Result, StarError};
use crate::fit::fit;
use crate::metrics::{rmse_vs_truth, waic};
use crate::samplers::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    Linear,
    Friedman,
}

impl std::str::FromStr for Design {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Design::Linear),
            "friedman" => Ok(Design::Friedman),
            _ => Err(StarError::Input(format!("unknown design {s:?}"))),
        }
    }
}

/// `(beta_0, ..., beta_6)` of the linear design.
pub fn linear_coefficients() -> [f64; 7] {
    let b = 2.0f64.ln();
    [1.5f64.ln(), b, b, b, 0.0, 0.0, 0.0]
}

/// `(beta_0, beta_1)` of the Friedman design.
pub fn friedman_coefficients() -> [f64; 2] {
    [1.5f64.ln(), 5.0f64.ln()]
}

/// `10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5`.
pub fn friedman_raw(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// Negative binomial with mean `mean` and variance `mean (1 + mean / r)`,
/// drawn as a Gamma-Poisson mixture.
pub fn draw_negbin<R: Rng + ?Sized>(mean: f64, r: f64, rng: &mut R) -> Result<u64> {
    if !(mean > 0.0) || !(r > 0.0) || !mean.is_finite() || !r.is_finite() {
        return Err(StarError::Parameter(format!(
            "negative binomial needs positive mean and dispersion, got ({mean}, {r})"
        )));
    }
    let rate = Gamma::new(r, mean / r)
        .map_err(|e| StarError::Parameter(e.to_string()))?
        .sample(rng);
    if rate <= 0.0 {
        return Ok(0);
    }
    let y = Poisson::new(rate)
        .map_err(|e| StarError::Parameter(e.to_string()))?
        .sample(rng);
    Ok(y as u64)
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn emit<R: Rng + ?Sized>(
    log_lambda: Vec<f64>,
    columns: Vec<Vec<f64>>,
    r_star: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let lambda: Vec<f64> = log_lambda.iter().map(|v| v.exp()).collect();
    let y = lambda.iter().map(|&l| draw_negbin(l, r_star, rng)).collect::<Result<_>>()?;
    let mut d = Dataset::new(y, names(columns.len()), columns)?;
    d.lambda_star = Some(lambda);
    Ok(d)
}

/// Six standard-normal predictors and `log lambda* = x' beta`.
pub fn simulate_negbin_linear<R: Rng + ?Sized>(n: usize, r_star: f64, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(StarError::Parameter("sample size must be positive".into()));
    }
    let beta = linear_coefficients();
    let mut columns: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(n)).collect();
    let mut log_lambda = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = beta[0];
        for (j, col) in columns.iter_mut().enumerate() {
            let x: f64 = rng.sample(StandardNormal);
            eta += beta[j + 1] * x;
            col.push(x);
        }
        log_lambda.push(eta);
    }
    emit(log_lambda, columns, r_star, rng)
}

/// Ten uniform predictors and `log lambda* = log 1.5 + log 5 f~(x)` with the
/// Friedman function centered and scaled over the sample.
pub fn simulate_negbin_friedman<R: Rng + ?Sized>(n: usize, r_star: f64, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(StarError::Parameter(
            "the Friedman design needs at least two rows to center and scale".into(),
        ));
    }
    let mut columns: Vec<Vec<f64>> = (0..10).map(|_| Vec::with_capacity(n)).collect();
    let mut raw = Vec::with_capacity(n);
    let mut x = [0.0; 10];
    for _ in 0..n {
        for (j, col) in columns.iter_mut().enumerate() {
            x[j] = rng.random::<f64>();
            col.push(x[j]);
        }
        raw.push(friedman_raw(&x));
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let b = friedman_coefficients();
    let log_lambda = raw.iter().map(|f| b[0] + b[1] * (f - mean) / sd).collect();
    emit(log_lambda, columns, r_star, rng)
}

pub fn simulate<R: Rng + ?Sized>(design: Design, n: usize, r_star: f64, rng: &mut R) -> Result<Dataset> {
    match design {
        Design::Linear => simulate_negbin_linear(n, r_star, rng),
        Design::Friedman => simulate_negbin_friedman(n, r_star, rng),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub design: Design,
    pub n: usize,
    pub dispersion: f64,
    pub replicates: usize,
    pub seed: u64,
    pub models: Vec<FitConfig>,
    /// Label of the reference model; the first Gaussian model when absent.
    pub baseline: Option<String>,
    /// Schedule applied to every model when set.
    pub mcmc: Option<McmcConfig>,
    pub bart: Option<BartConfig>,
    pub rmse: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            design: Design::Linear,
            n: 100,
            dispersion: 1.0,
            replicates: 20,
            seed: 0,
            models: Vec::new(),
            baseline: None,
            mcmc: None,
            bart: None,
            rmse: true,
        }
    }
}

impl ExperimentConfig {
    pub fn baseline_label(&self) -> Result<String> {
        if let Some(b) = &self.baseline {
            if self.models.iter().any(|m| &m.label() == b) {
                return Ok(b.clone());
            }
            return Err(StarError::Parameter(format!("baseline {b:?} is not among the models")));
        }
        self.models
            .iter()
            .find(|m| m.likelihood == Likelihood::Gaussian)
            .or(self.models.first())
            .map(|m| m.label())
            .ok_or_else(|| StarError::Parameter("experiment lists no models".into()))
    }

    /// Model configuration for cell `(replicate, model)` with its own seed.
    pub fn cell_config(&self, replicate: usize, model: usize) -> FitConfig {
        let mut cfg = self.models[model].clone();
        if let Some(m) = self.mcmc {
            cfg.mcmc = m;
        }
        if let Some(b) = self.bart {
            cfg.bart = b;
        }
        cfg.mcmc.seed = cell_seed(self.seed, replicate as u64 + 1, model as u64 + 1);
        cfg
    }
}

/// SplitMix64 mixing of the master seed with a cell index pair.
pub fn cell_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub replicate: usize,
    pub label: String,
    pub waic: Option<f64>,
    pub lpd: Option<f64>,
    pub d_eff: Option<f64>,
    pub rmse: Option<f64>,
    pub relative_waic: Option<f64>,
    pub relative_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub label: String,
    pub fits: usize,
    pub failures: usize,
    pub median_relative_waic: Option<f64>,
    /// Fraction of replicates with relative WAIC below one.
    pub share_waic_below_one: Option<f64>,
    pub median_relative_rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub baseline: String,
    pub cells: Vec<CellResult>,
    pub summary: Vec<ModelSummary>,
}

impl ExperimentReport {
    /// Relative WAIC of `label` in each replicate, in replicate order.
    pub fn relative_waic(&self, label: &str) -> Vec<Option<f64>> {
        self.cells.iter().filter(|c| c.label == label).map(|c| c.relative_waic).collect()
    }

    pub fn waic_by_replicate(&self, label: &str) -> Vec<Option<f64>> {
        self.cells.iter().filter(|c| c.label == label).map(|c| c.waic).collect()
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn run_cell(cfg: &ExperimentConfig, data: &Dataset, replicate: usize, model: usize) -> CellResult {
    let fc = cfg.cell_config(replicate, model);
    let mut out = CellResult {
        replicate,
        label: fc.label(),
        waic: None,
        lpd: None,
        d_eff: None,
        rmse: None,
        relative_waic: None,
        relative_rmse: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let f = fit(data, &fc)?;
        let w = waic(&f.draws.loglik)?;
        out.waic = Some(w.waic);
        out.lpd = Some(w.lpd);
        out.d_eff = Some(w.d_eff);
        if let (true, Some(truth)) = (cfg.rmse, &data.lambda_star) {
            out.rmse = Some(rmse_vs_truth(&f.fitted_expectation()?, truth)?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

/// Fits every model to every replicate. Failed fits are recorded in their
/// cell without stopping the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let baseline = cfg.baseline_label()?;
    if cfg.replicates == 0 {
        return Err(StarError::Parameter("experiment needs at least one replicate".into()));
    }
    let datasets: Vec<Dataset> = (0..cfg.replicates)
        .map(|r| {
            let mut rng = RngStream::new(cell_seed(cfg.seed, r as u64 + 1, 0), 0);
            simulate(cfg.design, cfg.n, cfg.dispersion, &mut rng)
        })
        .collect::<Result<_>>()?;
    let m = cfg.models.len();
    let mut cells: Vec<CellResult> = (0..cfg.replicates * m)
        .into_par_iter()
        .map(|k| run_cell(cfg, &datasets[k / m], k / m, k % m))
        .collect();
    for r in 0..cfg.replicates {
        let row = &mut cells[r * m..(r + 1) * m];
        let base = row.iter().find(|c| c.label == baseline).cloned();
        for c in row.iter_mut() {
            if let Some(b) = &base {
                c.relative_waic = c.waic.zip(b.waic).map(|(a, b)| a / b);
                c.relative_rmse = c.rmse.zip(b.rmse).map(|(a, b)| a / b);
            }
        }
    }
    let mut labels: Vec<String> = Vec::new();
    for c in &cfg.models {
        if !labels.contains(&c.label()) {
            labels.push(c.label());
        }
    }
    let summary = labels
        .into_iter()
        .map(|label| {
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.label == label).collect();
            let mut rw: Vec<f64> = mine.iter().filter_map(|c| c.relative_waic).collect();
            let mut rr: Vec<f64> = mine.iter().filter_map(|c| c.relative_rmse).collect();
            let below = rw.iter().filter(|&&v| v < 1.0).count();
            ModelSummary {
                fits: mine.len(),
                failures: mine.iter().filter(|c| c.error.is_some()).count(),
                share_waic_below_one: (!rw.is_empty()).then(|| below as f64 / rw.len() as f64),
                median_relative_waic: median(&mut rw),
                median_relative_rmse: median(&mut rr),
                label,
            }
        })
        .collect();
    Ok(ExperimentReport {
        baseline,
        cells,
        summary,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `replicates.csv` and `summary.json` into `dir`.
pub fn write_report<P: AsRef<Path>>(report: &ExperimentReport, dir: P) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    w.write_record([
        "replicate",
        "model",
        "waic",
        "lpd",
        "d_eff",
        "rmse",
        "relative_waic",
        "relative_rmse",
        "error",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.replicate.to_string(),
            c.label.clone(),
            opt(c.waic),
            opt(c.lpd),
            opt(c.d_eff),
            opt(c.rmse),
            opt(c.relative_waic),
            opt(c.relative_rmse),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "baseline": report.baseline,
        "models": report.summary,
    });
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    fs::write(dir.join("summary.json"), bytes)?;
    Ok(())
}
