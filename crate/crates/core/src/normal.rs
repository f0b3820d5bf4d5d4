//! Standard normal CDF, quantile and interval-probability helpers.
//!
//! Interval probabilities `P(a <= Z < b)` are the building block of every
//! STAR likelihood term, so they are computed in whichever tail keeps the
//! arithmetic free of cancellation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;

/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// log Phi(x), accurate far into the lower tail.
pub fn ln_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x > 0.0 {
        return (-cdf(-x)).ln_1p();
    }
    if x > -37.0 {
        return cdf(x).ln();
    }
    // Asymptotic Mills-ratio series; truncation error below 1e-12 here.
    let x2 = x * x;
    let inv = 1.0 / x2;
    let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv.powi(3) + 105.0 * inv.powi(4);
    -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// Standard normal quantile function.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
        // one Halley step against the accurate CDF
        let e = if x < 0.0 { cdf(x) - p } else { (1.0 - p) - cdf(-x) };
        let u = e / pdf(x);
        if u.is_finite() { x - u / (1.0 + 0.5 * x * u) } else { x }
    }
}

/// `P(a <= Z < b)` for standard normal `Z`.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    if a >= 0.0 {
        // upper tail: Phi(-a) - Phi(-b), both small and exact
        return cdf(-a) - cdf(-b);
    }
    if b <= 0.0 {
        return cdf(b) - cdf(a);
    }
    // straddles zero: the two erf terms have the same sign, no cancellation
    0.5 * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2))
}

/// `ln P(a <= Z < b)` for standard normal `Z`; `-inf` for empty intervals.
pub fn ln_interval_prob(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    // mirror so that the interval never lies entirely in the upper tail
    let (a, b) = if a >= 0.0 { (-b, -a) } else { (a, b) };
    if a == f64::NEG_INFINITY {
        return ln_cdf(b);
    }
    if b <= 0.0 {
        let lb = ln_cdf(b);
        let la = ln_cdf(a);
        let r = (la - lb).exp();
        if r >= 1.0 {
            // numerically identical tail masses; fall back to a density width
            let w = (b - a) * pdf(0.5 * (a + b));
            return if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
        }
        return lb + (-r).ln_1p();
    }
    let p = interval_prob(a, b);
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}
