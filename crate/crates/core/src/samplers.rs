//! MCMC kernels shared by every model: truncated-normal draws, slice
//! sampling, robust adaptive Metropolis and conjugate variance draws.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Result, StarError};
use crate::normal;

/// A reproducible random stream: one master seed, one stream id per chain.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Standardized bound beyond which the tail sampler replaces inversion.
const TAIL_SWITCH: f64 = 6.0;

/// Draw from `N(mu, sigma^2)` restricted to `[lower, upper]`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(StarError::Parameter(format!(
            "truncated normal needs finite mu and positive sigma, got ({mu}, {sigma})"
        )));
    }
    if !(upper > lower) {
        return Err(StarError::Parameter(format!(
            "empty truncation interval [{lower}, {upper})"
        )));
    }
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    if !(b > a) {
        return Err(StarError::Parameter(format!(
            "truncation interval [{lower}, {upper}) vanishes at scale {sigma}"
        )));
    }
    let x = if a >= 0.0 {
        standard_upper(a, b, rng)
    } else if b <= 0.0 {
        -standard_upper(-b, -a, rng)
    } else {
        standard_straddle(a, b, rng)
    };
    Ok((mu + sigma * x).clamp(lower, upper))
}

/// Standard normal on `[a, b]` with `0 <= a < b`.
fn standard_upper<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        return tail_rejection(a, b, rng);
    }
    // invert the survival function, which keeps full precision in the tail
    let sa = normal::cdf(-a);
    let sb = normal::cdf(-b);
    let u: f64 = rng.random();
    let s = sa - u * (sa - sb);
    if s <= 0.0 {
        return tail_rejection(a, b, rng);
    }
    (-normal::quantile(s)).clamp(a, b)
}

fn standard_straddle<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return rng.sample(StandardNormal);
    }
    let pa = normal::cdf(a);
    let pb = normal::cdf(b);
    let u: f64 = rng.random();
    normal::quantile(pa + u * (pb - pa)).clamp(a, b)
}

/// Robert (1995) rejection for `[a, b]` far in the upper tail. Narrow
/// intervals use a uniform proposal, wide ones a translated exponential.
fn tail_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    tail_rejection_counted(a, b, rng).0
}

pub(crate) fn tail_rejection_counted<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, u64) {
    let mut proposals = 0u64;
    if (b - a) * a < 1.0 {
        loop {
            proposals += 1;
            let x = a + (b - a) * rng.random::<f64>();
            let log_accept = 0.5 * (a * a - x * x);
            let e: f64 = rng.sample(Exp1);
            if -e <= log_accept {
                return (x, proposals);
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        proposals += 1;
        let e: f64 = rng.sample(Exp1);
        let x = a + e / rate;
        if x > b {
            continue;
        }
        let e2: f64 = rng.sample(Exp1);
        if e2 >= 0.5 * (x - rate).powi(2) {
            return (x, proposals);
        }
    }
}

/// Slice sampler tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub width: f64,
    pub max_steps: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            width: 1.0,
            max_steps: 100,
        }
    }
}

/// One univariate slice-sampling update with stepping out and shrinkage
/// (Neal 2003), confined to `bounds`.
pub fn slice_sample<F, R>(
    mut log_density: F,
    current: f64,
    config: SliceConfig,
    bounds: (f64, f64),
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let (lo, hi) = bounds;
    if !(current >= lo && current <= hi) {
        return Err(StarError::State(format!(
            "slice sampler started at {current} outside [{lo}, {hi}]"
        )));
    }
    let f0 = log_density(current);
    if f0 == f64::NEG_INFINITY || f0.is_nan() {
        return Err(StarError::State(format!(
            "log density is not finite at the current point {current}"
        )));
    }
    let level = f0 - rng.sample::<f64, _>(Exp1);
    let mut f = |x: f64| {
        if x < lo || x > hi {
            f64::NEG_INFINITY
        } else {
            log_density(x)
        }
    };

    let w = config.width;
    let mut left = current - w * rng.random::<f64>();
    let mut right = left + w;
    let m = config.max_steps;
    let mut j = (m as f64 * rng.random::<f64>()).floor() as usize;
    let mut k = m.saturating_sub(1).saturating_sub(j);
    while j > 0 && left > lo && f(left) > level {
        left -= w;
        j -= 1;
    }
    while k > 0 && right < hi && f(right) > level {
        right += w;
        k -= 1;
    }
    left = left.max(lo);
    right = right.min(hi);

    for _ in 0..10_000 {
        let x = left + (right - left) * rng.random::<f64>();
        if f(x) > level {
            return Ok(x);
        }
        if x < current {
            left = x;
        } else {
            right = x;
        }
        if right - left <= f64::EPSILON * current.abs().max(1.0) {
            break;
        }
    }
    Ok(current)
}

/// Robust adaptive Metropolis state (Vihola 2012).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamState {
    /// Lower-triangular proposal factor `S`.
    pub factor: DMatrix<f64>,
    pub target_accept: f64,
    pub adapt_rate: f64,
    pub step: u64,
    pub adapt: bool,
}

#[derive(Clone, Debug)]
pub struct RamOutcome {
    pub point: DVector<f64>,
    pub log_density: f64,
    pub accepted: bool,
    /// The adaptive update lost positive definiteness and was discarded.
    pub fallback: bool,
}

impl RamState {
    pub fn new(dim: usize, scale: f64) -> Self {
        RamState {
            factor: DMatrix::identity(dim, dim) * scale,
            target_accept: 0.30,
            adapt_rate: 0.75,
            step: 0,
            adapt: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// One Metropolis step from `current` whose log density is `current_lp`.
    pub fn step<F, R>(
        &mut self,
        current: &DVector<f64>,
        current_lp: f64,
        mut log_density: F,
        rng: &mut R,
    ) -> RamOutcome
    where
        F: FnMut(&DVector<f64>) -> f64,
        R: Rng + ?Sized,
    {
        let d = self.dim();
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = current + &self.factor * &u;
        let lp = log_density(&proposal);
        let log_ratio = lp - current_lp;
        let accept_prob = if log_ratio.is_nan() {
            0.0
        } else {
            log_ratio.exp().min(1.0)
        };
        let accepted = rng.random::<f64>() < accept_prob;

        let mut fallback = false;
        if self.adapt {
            self.step += 1;
            let eta = (d as f64 * (self.step as f64).powf(-self.adapt_rate)).min(1.0);
            let norm2 = u.norm_squared();
            if norm2 > 0.0 {
                let coef = eta * (accept_prob - self.target_accept) / norm2;
                let su = &self.factor * &u;
                let m = &self.factor * self.factor.transpose() + (su.clone() * su.transpose()) * coef;
                match m.cholesky() {
                    Some(c) if c.l().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) => {
                        self.factor = c.l();
                    }
                    _ => fallback = true,
                }
            }
        }

        if accepted {
            RamOutcome {
                point: proposal,
                log_density: lp,
                accepted,
                fallback,
            }
        } else {
            RamOutcome {
                point: current.clone(),
                log_density: current_lp,
                accepted,
                fallback,
            }
        }
    }
}

fn check_gamma(shape: f64, rate: f64) -> Result<()> {
    if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
        Ok(())
    } else {
        Err(StarError::Parameter(format!(
            "gamma parameters must be positive, got shape {shape} rate {rate}"
        )))
    }
}

/// Draw of a precision from `Gamma(shape, rate)`.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_gamma(shape, rate)?;
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| StarError::Parameter(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Draw of `sigma^2` where `sigma^{-2} ~ Gamma(shape, rate)`.
pub fn draw_inverse_gamma_variance<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut prec = draw_gamma(shape, rate, rng)?;
    if prec == 0.0 {
        prec = f64::MIN_POSITIVE;
    }
    Ok(1.0 / prec)
}

/// Draw of `tau ~ Gamma(shape, rate)` restricted to `tau > lower`. A
/// nonpositive shape is allowed; the truncation keeps the target proper and
/// the draw is then a slice update of `log tau` from `current`.
pub fn draw_truncated_gamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    lower: f64,
    current: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(rate > 0.0) || !(lower > 0.0) {
        return Err(StarError::Parameter(format!(
            "truncated gamma needs positive rate and bound, got {rate}, {lower}"
        )));
    }
    if shape > 0.0 {
        for _ in 0..64 {
            let t = draw_gamma(shape, rate, rng)?;
            if t > lower {
                return Ok(t);
            }
        }
        let dist = GammaDist::new(shape, rate)
            .map_err(|e| StarError::Parameter(format!("gamma({shape}, {rate}): {e}")))?;
        let f_lo = dist.cdf(lower);
        let u: f64 = rng.random();
        let t = dist.inverse_cdf(f_lo + u * (1.0 - f_lo));
        return Ok(if t > lower { t } else { lower * (1.0 + 1e-12) });
    }
    let start = current.max(lower).ln();
    let log_lower = lower.ln();
    let s = slice_sample(
        |s: f64| shape * s - rate * s.exp(),
        start,
        SliceConfig::default(),
        (log_lower, f64::INFINITY),
        rng,
    )?;
    Ok(s.exp())
}

/// Draw from `N(Q^{-1} l, Q^{-1})` through the Cholesky factor of `Q`.
pub fn draw_gaussian_from_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = precision.clone().cholesky().ok_or_else(|| {
        StarError::Numerical(format!(
            "precision matrix is not positive definite (dimension {}, diagonal {:?})",
            precision.nrows(),
            precision.diagonal().as_slice()
        ))
    })?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = chol.l().transpose();
    let noise = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| StarError::Numerical("singular Cholesky factor".into()))?;
    Ok(mean + noise)
}
