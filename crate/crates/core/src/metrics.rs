//! Model comparison and predictive evaluation.

use serde::Serialize;

use crate::draws::{DrawMatrix, PosteriorDraws};
use crate::error::{Result, StarError};
use crate::mcmc::star_loglik_row;
use crate::rounding::RoundingScheme;
use crate::transform::Transformation;

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` in the zero/nonzero score.
pub const CLIP: f64 = 1e-12;

fn log_mean_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut n = 0usize;
    let mut acc = 0.0;
    for x in v {
        acc += (x - m).exp();
        n += 1;
    }
    m + (acc / n as f64).ln()
}

/// `log(mean_s exp l_si)` for every column `i`.
pub fn pointwise_lpd(loglik: &DrawMatrix) -> Vec<f64> {
    (0..loglik.cols())
        .map(|i| log_mean_exp((0..loglik.rows()).map(move |s| loglik.get(s, i))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaicReport {
    pub waic: f64,
    pub lpd: f64,
    pub d_eff: f64,
    pub draws: usize,
    /// Points whose log-likelihood is `-inf` in every draw.
    pub infinite_points: Vec<usize>,
}

/// `WAIC = -2 (lpd - d)` with `d` the sum of pointwise log-likelihood
/// variances (denominator `S - 1`; zero for a single draw).
pub fn waic(loglik: &DrawMatrix) -> Result<WaicReport> {
    let s = loglik.rows();
    if s == 0 {
        return Err(StarError::Input("WAIC needs at least one draw".into()));
    }
    let point = pointwise_lpd(loglik);
    let infinite_points: Vec<usize> = point
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, _)| i)
        .collect();
    let lpd: f64 = point.iter().sum();
    let mut d_eff = 0.0;
    if s > 1 {
        for i in 0..loglik.cols() {
            let col = loglik.column(i);
            let m = col.iter().sum::<f64>() / s as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s - 1) as f64;
            if v.is_finite() {
                d_eff += v;
            } else if !col.iter().all(|x| *x == f64::NEG_INFINITY) {
                d_eff = f64::INFINITY;
            }
        }
    }
    Ok(WaicReport {
        waic: -2.0 * (lpd - d_eff),
        lpd,
        d_eff,
        draws: s,
        infinite_points,
    })
}

/// STAR pointwise log-likelihoods recomputed from stored `(mu, sigma, g)`.
pub fn star_pointwise_loglik(
    draws: &PosteriorDraws,
    y: &[u64],
    base: &Transformation,
    scheme: &RoundingScheme,
) -> Result<DrawMatrix> {
    if draws.mu.cols() != y.len() {
        return Err(StarError::Input(format!(
            "draws cover {} points but {} counts were given",
            draws.mu.cols(),
            y.len()
        )));
    }
    let mut out = DrawMatrix::new(y.len());
    for s in 0..draws.len() {
        let g = draws.transformation_at(base, s);
        out.push(&star_loglik_row(y, &g, scheme, draws.mu.row(s), draws.sigma.get(s, 0)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    /// Mean over the points with a finite score.
    pub score: f64,
    pub points: usize,
    pub infinite_points: Vec<usize>,
}

/// `(1/n) sum_i log(mean_s exp l_si)`; points with an infinite score are
/// listed and left out of the mean.
pub fn lpd_score(test_loglik: &DrawMatrix) -> Result<ScoreReport> {
    if test_loglik.rows() == 0 {
        return Err(StarError::Input("score needs at least one draw".into()));
    }
    let point = pointwise_lpd(test_loglik);
    let mut infinite_points = Vec::new();
    let mut total = 0.0;
    let mut count = 0;
    for (i, v) in point.iter().enumerate() {
        if v.is_finite() {
            total += v;
            count += 1;
        } else {
            infinite_points.push(i);
        }
    }
    Ok(ScoreReport {
        score: if count > 0 { total / count as f64 } else { f64::NEG_INFINITY },
        points: count,
        infinite_points,
    })
}

/// Mean log score of the event `{y > 0}` with `P = mean_s (1 - p0_si)`.
pub fn log_score_nonzero(p_zero: &DrawMatrix, y: &[u64]) -> Result<f64> {
    if p_zero.cols() != y.len() || p_zero.rows() == 0 {
        return Err(StarError::Input("zero-probability draws do not match the test counts".into()));
    }
    let p0 = p_zero.column_means();
    let total: f64 = y
        .iter()
        .zip(&p0)
        .map(|(&yi, &z)| {
            let p = (1.0 - z).clamp(CLIP, 1.0 - CLIP);
            if yi > 0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / y.len().max(1) as f64)
}

/// Inverse-empirical-CDF quantile: the `ceil(n p)`-th order statistic.
pub fn quantile_type1(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((n as f64 * p).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalReport {
    pub level: f64,
    pub mpiw: f64,
    pub coverage: f64,
    pub quantile_rule: &'static str,
}

/// Equal-tailed predictive intervals from the draws of each column.
pub fn interval_metrics(pred: &DrawMatrix, y: &[u64], level: f64) -> Result<IntervalReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StarError::Parameter(format!("interval level must lie in (0, 1), got {level}")));
    }
    if pred.cols() != y.len() {
        return Err(StarError::Input("predictive draws do not match the test counts".into()));
    }
    let tail = 0.5 * (1.0 - level);
    let min_draws = (1.0 / tail - 1e-9).ceil() as usize;
    if pred.rows() < min_draws {
        return Err(StarError::Input(format!(
            "{} predictive draws cannot resolve a {level} interval (need {min_draws})",
            pred.rows()
        )));
    }
    let mut width = 0.0;
    let mut inside = 0usize;
    for (i, &yi) in y.iter().enumerate() {
        let mut col = pred.column(i);
        col.sort_by(f64::total_cmp);
        let lo = quantile_type1(&col, tail);
        let hi = quantile_type1(&col, 1.0 - tail);
        width += hi - lo;
        let v = yi as f64;
        inside += (lo <= v && v <= hi) as usize;
    }
    let n = y.len().max(1) as f64;
    Ok(IntervalReport {
        level,
        mpiw: width / n,
        coverage: inside as f64 / n,
        quantile_rule: "type-1",
    })
}

/// `sqrt(sum_i (lambda*_i - yhat_i)^2)`.
pub fn rmse_vs_truth(fitted: &[f64], truth: &[f64]) -> Result<f64> {
    if fitted.len() != truth.len() {
        return Err(StarError::Input("fitted and true means differ in length".into()));
    }
    Ok(fitted.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ess {
    pub value: f64,
    /// Set when the chain has zero variance and the ESS defaults to its length.
    pub constant: bool,
}

/// Univariate effective sample size with Geyer's initial positive sequence.
pub fn ess(chain: &[f64]) -> Result<Ess> {
    let n = chain.len();
    if n < 10 {
        return Err(StarError::Input(format!("ESS needs at least 10 draws, got {n}")));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if c0 == 0.0 || !c0.is_finite() {
        return Ok(Ess {
            value: n as f64,
            constant: true,
        });
    }
    let rho = |k: usize| -> f64 {
        dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Ok(Ess {
        value: n as f64 / tau.max(1.0 / n as f64),
        constant: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckStats {
    pub mean: f64,
    pub sd: f64,
    pub zero_fraction: f64,
}

impl CheckStats {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        CheckStats {
            mean,
            sd,
            zero_fraction: v.iter().filter(|&&x| x == 0.0).count() as f64 / n,
        }
    }

    fn get(&self, k: usize) -> f64 {
        [self.mean, self.sd, self.zero_fraction][k]
    }
}

pub const CHECK_NAMES: [&str; 3] = ["mean", "sd", "zero_fraction"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PpcReport {
    pub observed: CheckStats,
    pub replicates: Vec<CheckStats>,
    /// `P(T(y_rep) >= T(y))` for mean, sd and zero fraction.
    pub upper_tail: [f64; 3],
}

impl PpcReport {
    /// Whether each observed statistic lies within the central `level`
    /// band of the replicate statistics.
    pub fn inside_central(&self, level: f64) -> [bool; 3] {
        let tail = 0.5 * (1.0 - level);
        let mut out = [false; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut v: Vec<f64> = self.replicates.iter().map(|r| r.get(k)).collect();
            v.sort_by(f64::total_cmp);
            let lo = quantile_type1(&v, tail);
            let hi = quantile_type1(&v, 1.0 - tail);
            let x = self.observed.get(k);
            *o = lo <= x && x <= hi;
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "mean", "sd", "zero_fraction"])?;
        w.write_record([
            "observed".to_string(),
            self.observed.mean.to_string(),
            self.observed.sd.to_string(),
            self.observed.zero_fraction.to_string(),
        ])?;
        for (s, r) in self.replicates.iter().enumerate() {
            w.write_record([
                s.to_string(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.zero_fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean, standard deviation and zero fraction of each predictive replicate
/// next to the observed values.
pub fn posterior_predictive_checks(pred: &DrawMatrix, y: &[u64]) -> Result<PpcReport> {
    if pred.cols() != y.len() || pred.rows() == 0 {
        return Err(StarError::Input("predictive draws do not match the observed counts".into()));
    }
    let obs: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let observed = CheckStats::of(&obs);
    let replicates: Vec<CheckStats> = (0..pred.rows()).map(|s| CheckStats::of(pred.row(s))).collect();
    let mut upper_tail = [0.0; 3];
    for (k, t) in upper_tail.iter_mut().enumerate() {
        let hits = replicates.iter().filter(|r| r.get(k) >= observed.get(k)).count();
        *t = hits as f64 / replicates.len() as f64;
    }
    Ok(PpcReport {
        observed,
        replicates,
        upper_tail,
    })
}
