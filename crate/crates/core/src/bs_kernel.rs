//! Black-Scholes call price and its spot derivatives up to sixth order.
//!
//! For `n >= 2` every derivative has the form
//! `d^n C / dS^n = n(d1) S^(1-n) P_n(d1)`, where `P_n` is a polynomial in
//! `d1` whose coefficients are polynomials in `1/s`, `s = sigma sqrt(T - t)`.
//! Starting from `P_2 = 1/s`,
//!
//! ```text
//! P_{n+1}(d) = (P_n'(d) - d P_n(d)) / s - (n - 1) P_n(d).
//! ```
//!
//! The integer coefficients are generated once at compile time.

use crate::error::{domain, Error, Result};
use crate::model::MarketParams;
use crate::special::{norm_cdf, norm_pdf};

pub const MAX_ORDER: usize = 6;

const DEG: usize = MAX_ORDER - 1; // powers of d: 0..=4
const POW: usize = MAX_ORDER; // powers of 1/s: 0..=5

/// `COEFF[n][j][k]` multiplies `d^j s^-k` in `P_n`.
const COEFF: [[[i64; POW]; DEG]; MAX_ORDER + 1] = build_coefficients();

const fn build_coefficients() -> [[[i64; POW]; DEG]; MAX_ORDER + 1] {
    let mut c = [[[0i64; POW]; DEG]; MAX_ORDER + 1];
    c[2][0][1] = 1;
    let mut n = 2;
    while n < MAX_ORDER {
        let mut j = 0;
        while j < DEG {
            let mut k = 0;
            while k < POW {
                let a = c[n][j][k];
                if a != 0 {
                    if j > 0 {
                        c[n + 1][j - 1][k + 1] += j as i64 * a;
                    }
                    c[n + 1][j + 1][k + 1] -= a;
                    c[n + 1][j][k] -= (n as i64 - 1) * a;
                }
                k += 1;
            }
            j += 1;
        }
        n += 1;
    }
    c
}

#[inline]
fn poly(n: usize, d: f64, inv_s: f64) -> f64 {
    let mut acc = 0.0;
    for j in (0..DEG).rev() {
        let mut cj = 0.0;
        for k in (0..POW).rev() {
            cj = cj * inv_s + COEFF[n][j][k] as f64;
        }
        acc = acc * d + cj;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreeksBundle {
    pub spot: f64,
    pub price: f64,
    pub d1: f64,
    pub d2: f64,
    /// Highest derivative order filled in `derivs`.
    pub order: usize,
    derivs: [f64; MAX_ORDER],
}

impl GreeksBundle {
    /// `d^n C / dS^n` for `1 <= n <= order`.
    pub fn derivative(&self, n: usize) -> Option<f64> {
        (n >= 1 && n <= self.order).then(|| self.derivs[n - 1])
    }

    /// Derivatives `1..=order` in ascending order.
    pub fn derivatives(&self) -> &[f64] {
        &self.derivs[..self.order]
    }

    /// `S^n d^n C / dS^n`.
    #[inline]
    pub fn scaled(&self, n: usize) -> f64 {
        debug_assert!(n >= 1 && n <= self.order);
        self.spot.powi(n as i32) * self.derivs[n - 1]
    }

    pub fn delta(&self) -> f64 {
        self.derivs[0]
    }
}

/// Black-Scholes call price. At `t = T` the payoff is returned.
pub fn bs_price(s: f64, t: f64, sigma_bar: f64, params: &MarketParams) -> Result<GreeksBundle> {
    check(s, t, sigma_bar, params)?;
    let tau = params.expiry - t;
    if tau == 0.0 {
        let k = params.strike;
        let d = if s > k {
            f64::INFINITY
        } else if s < k {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return Ok(GreeksBundle {
            spot: s,
            price: (s - k).max(0.0),
            d1: d,
            d2: d,
            order: 0,
            derivs: [f64::NAN; MAX_ORDER],
        });
    }
    Ok(greeks(s, tau, sigma_bar, params.r, params.strike, 0))
}

/// Price together with `d^n C / dS^n` for `n = 1..=max_order`.
pub fn bs_derivatives(
    s: f64,
    t: f64,
    sigma_bar: f64,
    params: &MarketParams,
    max_order: usize,
) -> Result<GreeksBundle> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(max_order));
    }
    check(s, t, sigma_bar, params)?;
    let tau = params.expiry - t;
    if tau == 0.0 {
        return domain("derivatives at t = T are distributions; evaluate at t < T");
    }
    Ok(greeks(s, tau, sigma_bar, params.r, params.strike, max_order))
}

fn check(s: f64, t: f64, sigma_bar: f64, params: &MarketParams) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return domain(format!("spot must be positive, got {s}"));
    }
    if !(sigma_bar > 0.0) || !sigma_bar.is_finite() {
        return domain(format!("sigma_bar must be positive, got {sigma_bar}"));
    }
    if !t.is_finite() || t > params.expiry {
        return domain(format!("t = {t} lies beyond expiry {}", params.expiry));
    }
    Ok(())
}

/// Unchecked evaluation at time to expiry `tau > 0`.
pub(crate) fn greeks(s: f64, tau: f64, sigma: f64, r: f64, k: f64, max_order: usize) -> GreeksBundle {
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    let disc_k = k * (-r * tau).exp();
    let price = s * norm_cdf(d1) - disc_k * norm_cdf(d2);
    let mut derivs = [f64::NAN; MAX_ORDER];
    if max_order >= 1 {
        derivs[0] = norm_cdf(d1);
    }
    if max_order >= 2 {
        let pdf = norm_pdf(d1);
        let inv_s = 1.0 / sd;
        let inv_spot = 1.0 / s;
        let mut scale = pdf * inv_spot; // n(d1) S^(1-n) at n = 2
        for n in 2..=max_order {
            derivs[n - 1] = scale * poly(n, d1, inv_s);
            scale *= inv_spot;
        }
    }
    GreeksBundle {
        spot: s,
        price,
        d1,
        d2,
        order: max_order,
        derivs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> MarketParams {
        MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0)
    }

    #[test]
    fn polynomial_table_low_orders() {
        // P_3 = -d/s^2 - 1/s
        assert_eq!(COEFF[3][1][2], -1);
        assert_eq!(COEFF[3][0][1], -1);
        // P_4 = (d^2 - 1)/s^3 + 3d/s^2 + 2/s
        assert_eq!(COEFF[4][2][3], 1);
        assert_eq!(COEFF[4][0][3], -1);
        assert_eq!(COEFF[4][1][2], 3);
        assert_eq!(COEFF[4][0][1], 2);
    }

    #[test]
    fn atm_reference() {
        let g = bs_derivatives(100.0, 0.0, 0.165, &fig3(), 2).unwrap();
        assert!((g.d1 - 0.562_785_296_490).abs() < 1e-11);
        assert!((g.price - 17.297_844_406_90).abs() < 1e-10, "{}", g.price);
        assert!((g.derivative(2).unwrap() - 0.011_914_862_561_431).abs() < 1e-15);
    }

    #[test]
    fn expiry_behaviour() {
        let p = fig3();
        assert_eq!(bs_price(120.0, 3.0, 0.2, &p).unwrap().price, 20.0);
        assert_eq!(bs_price(80.0, 3.0, 0.2, &p).unwrap().price, 0.0);
        assert!(bs_derivatives(80.0, 3.0, 0.2, &p, 2).is_err());
        let near = bs_price(120.0, 3.0 - 1e-10, 0.2, &p).unwrap().price;
        assert!((near - 20.0).abs() < 1e-6);
    }

    #[test]
    fn deep_money_limits() {
        let g = bs_derivatives(1e4, 0.0, 0.165, &fig3(), 6).unwrap();
        assert!((g.delta() - 1.0).abs() < 1e-15);
        for n in 2..=6 {
            assert!(g.derivative(n).unwrap().abs() < 1e-40);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = fig3();
        assert!(matches!(bs_derivatives(100.0, 0.0, 0.2, &p, 7), Err(Error::UnsupportedOrder(7))));
        assert!(bs_price(-1.0, 0.0, 0.2, &p).is_err());
        assert!(bs_price(1.0, 0.0, 0.0, &p).is_err());
    }
}
