//! B-spline basis evaluation (Cox-de Boor) on clamped knot vectors.

/// Clamped knot vector: each boundary knot repeated `order` times around the
/// strictly increasing interior knots.
pub fn clamped_knots(lower: f64, upper: f64, interior: &[f64], order: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(interior.len() + 2 * order);
    t.extend(std::iter::repeat_n(lower, order));
    t.extend_from_slice(interior);
    t.extend(std::iter::repeat_n(upper, order));
    t
}

/// Uniform knot vector with `segments` equal intervals on `[lower, upper]`,
/// extended by `order - 1` equally spaced knots on each side.
pub fn uniform_knots(lower: f64, upper: f64, segments: usize, order: usize) -> Vec<f64> {
    let h = (upper - lower) / segments as f64;
    let k0 = order as isize - 1;
    (0..segments + 2 * order - 1)
        .map(|k| lower + (k as isize - k0) as f64 * h)
        .collect()
}

/// Number of B-spline functions of `order` on the clamped knot vector `t`.
pub fn basis_len(t: &[f64], order: usize) -> usize {
    t.len() - order
}

/// Values of all B-splines of the given order at `x`, writing into `out`.
///
/// `x` is clamped to `[t[order - 1], t[n]]`; the right end is evaluated on the
/// last span so the basis stays a partition of unity there.
pub fn eval_into(t: &[f64], order: usize, x: f64, out: &mut [f64]) {
    let n = basis_len(t, order);
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|v| *v = 0.0);
    let lo = t[order - 1];
    let hi = t[n];
    let x = x.clamp(lo, hi);
    // knot span: t[span] <= x < t[span + 1]
    let mut span = order - 1;
    while span + 1 < n && t[span + 1] <= x {
        span += 1;
    }
    // de Boor triangle for the `order` nonzero functions
    let mut vals = vec![0.0; order];
    vals[0] = 1.0;
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    for j in 1..order {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    for (k, v) in vals.into_iter().enumerate() {
        out[span + 1 - order + k] = v;
    }
}

pub fn eval(t: &[f64], order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis_len(t, order)];
    eval_into(t, order, x, &mut out);
    out
}
