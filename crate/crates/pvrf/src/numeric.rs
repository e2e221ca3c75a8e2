//! Small numerical utilities: normal distribution functions, adaptive
//! quadrature, and quantiles.

use crate::error::{Error, Result};

/// Standard normal density φ(z).
pub fn normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function Φ(z), via the complementary error
/// function for full relative accuracy in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function 1 − Φ(z) = Φ(−z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Inverse Mills ratio λ(z) = φ(z) / (1 − Φ(z)).
///
/// For large `z` both numerator and denominator underflow to zero, so beyond
/// `z > 30` we switch to the asymptotic expansion
/// λ(z) ≈ z + 1/z − 2/z³ + 10/z⁵ − 74/z⁷, whose truncation error at the
/// switch point is below 10⁻¹⁰ relative and falls off as z⁻⁸.
pub fn mills_ratio(z: f64) -> f64 {
    if z > 30.0 {
        let zi = 1.0 / z;
        let zi2 = zi * zi;
        z + zi * (1.0 + zi2 * (-2.0 + zi2 * (10.0 - 74.0 * zi2)))
    } else {
        normal_pdf(z) / normal_sf(z)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
///
/// Classic recursive bisection: each interval is accepted when the two-panel
/// refinement agrees with the one-panel estimate to within 15·tol (the factor
/// 15 comes from the error expansion of Simpson's rule), with Richardson
/// extrapolation applied to the accepted value.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Type-7 sample quantile (the default of most statistical environments):
/// linear interpolation between order statistics at position
/// `h = (n − 1)·p`.
///
/// `sorted` must be ascending; `p` must lie in `[0, 1]`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyData(String::from(" (quantile of empty sample)")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidRequest(format!(
            "quantile probability {p} outside [0, 1]"
        )));
    }
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        Ok(sorted[lo])
    } else {
        let frac = h - lo as f64;
        Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
    }
}

/// Sample mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population variance (divides by n), the normalization used by the
/// permutation-test moment formulas.
pub fn variance_population(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (divides by n − 1); 0 when fewer than two values.
pub fn variance_sample(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
