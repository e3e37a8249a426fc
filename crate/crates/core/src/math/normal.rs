//! Standard normal density, distribution and quantile.

use statrs::function::erf::erfc_inv;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile of the standard normal. `p` must lie in (0, 1).
#[inline]
pub fn inv_cdf(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Halley step against the accurate cdf
    let e = (cdf(x) - p) / pdf(x);
    if e.is_finite() {
        x - e / (1.0 + 0.5 * x * e)
    } else {
        x
    }
}
