//! Standard normal density, distribution and tail ratios.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - N(x)`, accurate for large positive `x`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - N(t)) / n(t)`.
pub fn mills_ratio(t: f64) -> f64 {
    if t < 30.0 {
        return norm_sf(t) / norm_pdf(t);
    }
    // continued fraction t + 1/(t + 2/(t + 3/(t + ...)))
    let mut acc = t;
    for k in (1..=40).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `N(y) / n(x)` without intermediate under- or overflow.
pub fn cdf_over_pdf(y: f64, x: f64) -> f64 {
    if y <= 0.0 {
        // N(y) = n(y) R(-y)
        mills_ratio(-y) * (0.5 * (x * x - y * y)).exp()
    } else if x.abs() < 37.0 {
        norm_cdf(y) / norm_pdf(x)
    } else {
        (norm_cdf(y).ln() + 0.5 * x * x + 0.5 * (2.0 * PI).ln()).exp()
    }
}

/// `(1 - N(y)) / n(x)`.
pub fn sf_over_pdf(y: f64, x: f64) -> f64 {
    cdf_over_pdf(-y, -x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!((norm_sf(10.0) / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mills_branches_join() {
        let below = norm_sf(29.9999999) / norm_pdf(29.9999999);
        assert!((below / 0.033_296_419_183_24 - 1.0).abs() < 1e-12);
        assert!((mills_ratio(30.0) / 0.033_296_419_072_497 - 1.0).abs() < 1e-14);
        assert!((mills_ratio(80.0) * 80.0 - 1.0).abs() < 2e-4);
    }

    #[test]
    fn ratios_match_direct_evaluation() {
        for &(y, x) in &[(-1.0, -0.5), (-3.0, -2.0), (0.7, 1.2), (2.0, 3.0), (-20.0, -19.0)] {
            let direct = norm_cdf(y) / norm_pdf(x);
            assert!((cdf_over_pdf(y, x) / direct - 1.0).abs() < 1e-12, "{y} {x}");
            let direct = norm_sf(y) / norm_pdf(x);
            assert!((sf_over_pdf(y, x) / direct - 1.0).abs() < 1e-12, "{y} {x}");
        }
    }
}
