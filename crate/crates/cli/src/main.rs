//! `star`: fit, score and simulate STAR count-regression models.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use star_core::config::{FitConfig, Likelihood, ModelKind};
use star_core::data::Dataset;
use star_core::fit::Fit;
use star_core::harness::{self, Design, ExperimentConfig};
use star_core::metrics;
use star_core::rounding::{self, RoundingScheme};
use star_core::samplers::RngStream;
use star_core::transform::{TransformSpec, Transformation};

#[derive(Parser)]
#[command(name = "star", version, about = "Bayesian count regression by simultaneous transformation and rounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a negative-binomial dataset.
    Simulate(SimulateArgs),
    /// Fit a model and write `fit.json` plus `fit.bin`.
    Fit(FitArgs),
    /// WAIC of a saved fit.
    Waic(WaicArgs),
    /// Out-of-sample scores of a saved fit on a test CSV.
    Score(ScoreArgs),
    /// Probability mass function `(j, probability)` as CSV.
    Pmf(PmfArgs),
    /// Mean, variance and zero probability over a grid of latent parameters.
    Dispersion(DispersionArgs),
    /// Posterior predictive checks of a saved fit.
    Ppc(PpcArgs),
    /// Replicated simulation experiment from a JSON configuration.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "linear")]
    design: Design,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Negative-binomial dispersion `r*`.
    #[arg(long, default_value_t = 1.0)]
    dispersion: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SchemeArgs {
    /// Counts are known not to exceed this value.
    #[arg(long, conflicts_with = "censored")]
    bounded: Option<u64>,
    /// Counts at or above this value were recorded as the value.
    #[arg(long)]
    censored: Option<u64>,
    /// Counts at or below this value were recorded as the value.
    #[arg(long)]
    left_censored: Option<u64>,
}

impl SchemeArgs {
    fn scheme(&self) -> Option<RoundingScheme> {
        let base = match (self.bounded, self.censored) {
            (Some(k), _) => Some(RoundingScheme::bounded(k)),
            (_, Some(k)) => Some(RoundingScheme::censored(k)),
            _ => None,
        };
        match (base, self.left_censored) {
            (b, Some(l)) => Some(b.unwrap_or_default().with_left_censor(l)),
            (b, None) => b,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    /// JSON fit configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    transform: Option<TransformSpec>,
    #[arg(long)]
    likelihood: Option<Likelihood>,
    /// Comma-separated predictors modeled with smooth functions.
    #[arg(long, value_delimiter = ',')]
    nonlinear: Vec<String>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    saved: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(Args)]
struct WaicArgs {
    fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    fit: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Seed of the predictive draws at the test rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmfArgs {
    #[arg(long, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value = "sqrt")]
    transform: TransformSpec,
    /// Box-Cox parameter used with `--transform box-cox`.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    max_j: u64,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DispersionArgs {
    #[arg(long, default_value = "sqrt")]
    transform: TransformSpec,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    mu_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    mu_max: f64,
    #[arg(long, default_value_t = 61)]
    steps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
    sigma: Vec<f64>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PpcArgs {
    fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for `replicates.csv` and `summary.json`.
    #[arg(long, default_value = "experiment")]
    out: PathBuf,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn json_bytes(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

/// Fixed transformation for the pmf and dispersion tables.
fn fixed_transform(spec: TransformSpec, lambda: f64) -> Result<Transformation> {
    Ok(match spec {
        TransformSpec::Id => Transformation::identity(),
        TransformSpec::Log => Transformation::log(),
        TransformSpec::Sqrt => Transformation::sqrt(),
        TransformSpec::BoxCox => {
            if lambda < 0.0 {
                bail!("Box-Cox parameter must be nonnegative");
            }
            Transformation::BoxCox { lambda }
        }
        TransformSpec::Np => bail!("the nonparametric transformation is learned from data; fit a model instead"),
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut rng = RngStream::new(a.seed, 0);
    let data = harness::simulate(a.design, a.n, a.dispersion, &mut rng)?;
    data.write_csv(&a.out)?;
    Ok(())
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    let mut cfg: FitConfig = match &a.config {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => FitConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(t) = a.transform {
        cfg.transform = t;
    }
    if let Some(l) = a.likelihood {
        cfg.likelihood = l;
    }
    if !a.nonlinear.is_empty() {
        cfg.nonlinear = a.nonlinear.clone();
        if a.model.is_none() && a.config.is_none() {
            cfg.model = ModelKind::Additive;
        }
    }
    if let Some(t) = a.trees {
        cfg.bart.trees = t;
    }
    let m = &mut cfg.mcmc;
    if let Some(v) = a.burn_in {
        m.burn_in = v;
    }
    if let Some(v) = a.saved {
        m.saved = v;
    }
    if let Some(v) = a.thin {
        m.thin = v;
    }
    if let Some(v) = a.chains {
        m.chains = v;
    }
    if let Some(v) = a.seed {
        m.seed = v;
    }
    if let Some(s) = a.scheme.scheme() {
        cfg.scheme = s;
    }
    Ok(cfg)
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = fit_config(&a)?;
    let data = Dataset::read_csv(&a.data, &a.response)?;
    let f = star_core::fit(&data, &cfg)?;
    f.save(&a.out)?;
    let d = &f.header.diagnostics;
    eprintln!(
        "{}: {} draws from {} chain(s) written to {}",
        f.header.label,
        d.saved_draws,
        d.chains,
        a.out.display()
    );
    if !d.demoted.is_empty() {
        eprintln!("predictors moved to the linear block: {}", d.demoted.join(", "));
    }
    Ok(())
}

fn waic_json(f: &Fit) -> Result<serde_json::Value> {
    let w = metrics::waic(&f.draws.loglik)?;
    Ok(json!({
        "model": f.header.label,
        "waic": w.waic,
        "lpd": w.lpd,
        "d_eff": w.d_eff,
        "draws": w.draws,
        "infinite_points": w.infinite_points,
    }))
}

fn waic(a: WaicArgs) -> Result<()> {
    let f = Fit::load(&a.fit)?;
    write_output(a.out.as_deref(), &json_bytes(&waic_json(&f)?)?)
}

fn score(a: ScoreArgs) -> Result<()> {
    let f = Fit::load(&a.fit)?;
    let test = Dataset::read_csv(&a.test, &a.response)?;
    let y = f.header.config.scheme.prepare_counts(&test.y)?;
    let mut report = waic_json(&f)?;
    let lpd = metrics::lpd_score(&f.test_loglik(&test)?)?;
    let nonzero = metrics::log_score_nonzero(&f.zero_probability(&test)?, &y)?;
    let intervals = metrics::interval_metrics(&f.predictive(&test, a.seed)?, &y, a.level)?;
    let obj = report.as_object_mut().expect("object");
    obj.insert("lpd_score".into(), json!(lpd.score));
    obj.insert("lpd_infinite_points".into(), json!(lpd.infinite_points));
    obj.insert("log_score_nonzero".into(), json!(nonzero));
    obj.insert("mpiw".into(), json!(intervals.mpiw));
    obj.insert("coverage".into(), json!(intervals.coverage));
    obj.insert("level".into(), json!(intervals.level));
    obj.insert("quantile_rule".into(), json!(intervals.quantile_rule));
    obj.insert("test_points".into(), json!(y.len()));
    write_output(a.out.as_deref(), &json_bytes(&report)?)
}

fn pmf(a: PmfArgs) -> Result<()> {
    let g = fixed_transform(a.transform, a.lambda)?;
    let scheme = a.scheme.scheme().unwrap_or_default();
    let table = rounding::pmf_table(&g, &scheme, a.mu, a.sigma, a.max_j)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "probability"])?;
    for (j, p) in table {
        w.write_record([j.to_string(), p.to_string()])?;
    }
    write_output(a.out.as_deref(), &w.into_inner()?)
}

fn dispersion(a: DispersionArgs) -> Result<()> {
    let g = fixed_transform(a.transform, a.lambda)?;
    let scheme = a.scheme.scheme().unwrap_or_default();
    if a.steps < 2 || a.mu_max.partial_cmp(&a.mu_min) != Some(std::cmp::Ordering::Greater) {
        bail!("need at least two grid steps over an increasing range");
    }
    let mus: Vec<f64> = (0..a.steps)
        .map(|k| a.mu_min + (a.mu_max - a.mu_min) * k as f64 / (a.steps - 1) as f64)
        .collect();
    let rows = rounding::dispersion_profile(&g, &scheme, &mus, &a.sigma)?;
    let mut buf = Vec::new();
    rounding::write_dispersion_csv(&rows, &mut buf)?;
    write_output(a.out.as_deref(), &buf)
}

fn ppc(a: PpcArgs) -> Result<()> {
    let f = Fit::load(&a.fit)?;
    let r = metrics::posterior_predictive_checks(&f.draws.y_pred, &f.header.response)?;
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    write_output(a.out.as_deref(), &buf)?;
    let inside = r.inside_central(0.95);
    for (k, name) in metrics::CHECK_NAMES.iter().enumerate() {
        eprintln!(
            "{name}: observed {:.4}, P(rep >= obs) = {:.3}, inside central 95%: {}",
            [r.observed.mean, r.observed.sd, r.observed.zero_fraction][k],
            r.upper_tail[k],
            inside[k]
        );
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg: ExperimentConfig = serde_json::from_slice(
        &fs::read(&a.config).with_context(|| format!("reading {}", a.config.display()))?,
    )?;
    let report = harness::run_experiment(&cfg)?;
    harness::write_report(&report, &a.out)?;
    for s in &report.summary {
        eprintln!(
            "{}: median relative WAIC {}, failures {}/{}",
            s.label,
            s.median_relative_waic.map_or("-".into(), |v| format!("{v:.4}")),
            s.failures,
            s.fits
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Waic(a) => waic(a),
        Command::Score(a) => score(a),
        Command::Pmf(a) => pmf(a),
        Command::Dispersion(a) => dispersion(a),
        Command::Ppc(a) => ppc(a),
        Command::Experiment(a) => experiment(a),
    }
}
