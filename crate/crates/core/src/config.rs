//! Fit configuration: model, transformation, rounding scheme and MCMC schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::rounding::RoundingScheme;
use crate::samplers::SliceConfig;
use crate::transform::TransformSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Additive,
    Bart,
}

impl std::str::FromStr for ModelKind {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "additive" => Ok(ModelKind::Additive),
            "bart" => Ok(ModelKind::Bart),
            _ => Err(StarError::Input(format!("unknown model {s:?}"))),
        }
    }
}

/// `Star` couples the latent model with rounding; `Gaussian` fits the
/// latent model directly to `log(y + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    Star,
    Gaussian,
}

impl std::str::FromStr for Likelihood {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Likelihood::Star),
            "gaussian" => Ok(Likelihood::Gaussian),
            _ => Err(StarError::Input(format!("unknown likelihood {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub saved: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Fraction of burn-in during which RAM adapts.
    pub adapt_fraction: f64,
    pub ram_target_accept: f64,
    pub ram_adapt_rate: f64,
    pub slice: SliceConfig,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 5000,
            saved: 5000,
            thin: 3,
            chains: 1,
            seed: 0,
            adapt_fraction: 0.5,
            ram_target_accept: 0.30,
            ram_adapt_rate: 0.75,
            slice: SliceConfig::default(),
        }
    }
}

impl McmcConfig {
    pub fn short(burn_in: usize, saved: usize, thin: usize, seed: u64) -> Self {
        McmcConfig {
            burn_in,
            saved,
            thin,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.saved == 0 || self.thin == 0 || self.chains == 0 {
            return Err(StarError::Parameter(
                "saved draws, thinning and chain count must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.adapt_fraction) {
            return Err(StarError::Parameter("adapt_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartConfig {
    pub trees: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub min_leaf: usize,
    pub p_grow: f64,
    pub p_prune: f64,
    /// Number of saved ensembles kept for prediction at new points.
    pub stored_ensembles: usize,
    /// Schedule of the STAR linear fit that calibrates the sigma prior.
    pub calibration: McmcConfig,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            trees: 50,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.9,
            min_leaf: 5,
            p_grow: 0.25,
            p_prune: 0.25,
            stored_ensembles: 200,
            calibration: McmcConfig::short(500, 500, 1, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub model: ModelKind,
    pub transform: TransformSpec,
    pub likelihood: Likelihood,
    pub scheme: RoundingScheme,
    /// Predictors entering through smooth functions (additive model only).
    pub nonlinear: Vec<String>,
    pub mcmc: McmcConfig,
    pub bart: BartConfig,
    /// Tail quantile for the truncated conditional-expectation sum.
    pub tail_quantile: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            model: ModelKind::Linear,
            transform: TransformSpec::BoxCox,
            likelihood: Likelihood::Star,
            scheme: RoundingScheme::floor(),
            nonlinear: Vec::new(),
            mcmc: McmcConfig::default(),
            bart: BartConfig::default(),
            tail_quantile: 0.9999,
        }
    }
}

impl FitConfig {
    /// Short label such as `star-linear-bc` or `gaussian-bart-log`.
    pub fn label(&self) -> String {
        let model = match self.model {
            ModelKind::Linear => "linear",
            ModelKind::Additive => "additive",
            ModelKind::Bart => "bart",
        };
        match self.likelihood {
            Likelihood::Star => format!("star-{model}-{}", self.transform.name()),
            Likelihood::Gaussian => format!("gaussian-{model}-log"),
        }
    }
}
