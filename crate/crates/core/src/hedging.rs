//! Optimal holding `y*` and the no-trade band of half-width `eps^{1/3} Y+`.
//!
//! Both sides share `dy*/dz`, so the band half-width does not depend on the
//! side. Inside the band the inner correction is `U14(Y) = A Y^4/12 + B Y^2/2`
//! in the stretched variable `Y = (y - y*) / eps^{1/3}`.

use serde::{Deserialize, Serialize};

use crate::bs_kernel::greeks;
use crate::error::{domain, Error, Result};
use crate::model::{MarketParams, OUVolModel, Side, VolFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeBand {
    pub y_star: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl HedgeBand {
    /// Builds the band with `upper - y_star == y_star - lower` holding
    /// exactly in floating point.
    ///
    /// `y_star` and `half_width` are rounded to multiples of the power of two
    /// `u = 2^(e-53)`, where `2^(e-1) <= |y_star| + half_width < 2^e`. Every
    /// sum and difference of the two is then an integer multiple of `u` below
    /// `2^53 u`, hence exact. The perturbation is at most `u/2`, half an ulp
    /// of `|y_star| + half_width`.
    pub fn centred(y_star: f64, half_width: f64) -> Self {
        let total = y_star.abs() + half_width;
        let (y_star, half_width) = if total > f64::MIN_POSITIVE && total.is_finite() {
            let e = ((total.to_bits() >> 52) & 0x7ff) as i32 - 1023 + 1;
            let u = 2f64.powi(e - 53);
            ((y_star / u).round() * u, (half_width / u).round() * u)
        } else {
            (y_star, half_width)
        };
        Self {
            y_star,
            half_width,
            lower: y_star - half_width,
            upper: y_star + half_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerProfile {
    pub a: f64,
    pub b: f64,
    /// Band edge in the stretched variable.
    pub y_plus: f64,
}

impl InnerProfile {
    pub fn value(&self, y: f64) -> f64 {
        let y2 = y * y;
        self.a * y2 * y2 / 12.0 + self.b * y2 / 2.0
    }

    pub fn dy(&self, y: f64) -> f64 {
        self.a * y * y * y / 3.0 + self.b * y
    }

    pub fn dyy(&self, y: f64) -> f64 {
        self.a * y * y + self.b
    }
}

/// Everything the hedging formulas need besides `(S, t, z)`.
#[derive(Debug, Clone)]
pub struct HedgeInputs<'a> {
    pub params: &'a MarketParams,
    pub model: &'a OUVolModel,
    pub sigma_bar: f64,
}

fn check(s: f64, t: f64, p: &MarketParams) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return domain(format!("spot must be positive, got {s}"));
    }
    if !t.is_finite() || t > p.expiry {
        return domain(format!("t = {t} lies beyond expiry {}", p.expiry));
    }
    Ok(p.expiry - t)
}

/// Merton-type term `(alpha - r) delta / (f(z)^2 S gamma)`.
fn merton(s: f64, tau: f64, f: f64, p: &MarketParams) -> f64 {
    p.excess_return() * p.discount(tau) / (f * f * s * p.gamma)
}

impl HedgeInputs<'_> {
    /// Optimal number of shares without costs.
    pub fn y_star(&self, side: Side, s: f64, t: f64, z: f64) -> Result<f64> {
        let tau = check(s, t, self.params)?;
        let base = merton(s, tau, self.model.f(z), self.params);
        Ok(match side {
            Side::Plain => base,
            Side::Writer => {
                let delta = if tau == 0.0 {
                    if s > self.params.strike { 1.0 } else { 0.0 }
                } else {
                    greeks(s, tau, self.sigma_bar, self.params.r, self.params.strike, 1).delta()
                };
                delta + base
            }
        })
    }

    /// `dy*/dz`, identical for both sides.
    pub fn y_star_z(&self, s: f64, t: f64, z: f64) -> Result<f64> {
        let tau = check(s, t, self.params)?;
        let f = self.model.f(z);
        let base = merton(s, tau, f, self.params);
        let log_slope = match &self.model.vol {
            VolFunction::Scott => 1.0,
            VolFunction::Bounded(_) => {
                let h = 1e-3 * z.abs().max(1.0);
                let g = |u: f64| self.model.f(u);
                let df = (-g(z + 2.0 * h) + 8.0 * g(z + h) - 8.0 * g(z - h) + g(z - 2.0 * h)) / (12.0 * h);
                df / f
            }
        };
        Ok(-2.0 * base * log_slope)
    }

    /// `Y+` with `(Y+)^3 = (3/2) (delta/gamma) nu^2 (y*_z)^2 / (f^2 S)`.
    pub fn scaled_half_width(&self, s: f64, t: f64, z: f64) -> Result<f64> {
        let tau = check(s, t, self.params)?;
        let yz = self.y_star_z(s, t, z)?;
        let f = self.model.f(z);
        let nu = self.model.nu;
        let p = self.params;
        Ok((1.5 / (f * f * s) * (p.discount(tau) / p.gamma) * nu * nu * yz * yz).cbrt())
    }

    pub fn band(&self, side: Side, s: f64, t: f64, z: f64, epsilon: f64) -> Result<HedgeBand> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return domain(format!("epsilon must be non-negative, got {epsilon}"));
        }
        let y_star = self.y_star(side, s, t, z)?;
        let half_width = epsilon.cbrt() * self.scaled_half_width(s, t, z)?;
        Ok(HedgeBand::centred(y_star, half_width))
    }

    /// Scott-model band written out explicitly:
    /// `(Y+)^3 = 6 (alpha - r)^2 nu^2 delta^3 / (e^{6z} S^3 gamma^3)`.
    pub fn scott_band(&self, side: Side, s: f64, t: f64, z: f64, epsilon: f64) -> Result<HedgeBand> {
        if !self.model.vol.is_scott() {
            return domain("scott_band requires f = e^z");
        }
        let tau = check(s, t, self.params)?;
        let p = self.params;
        let (ar, nu, d, g) = (p.excess_return(), self.model.nu, p.discount(tau), p.gamma);
        let y_plus = (6.0 * ar * ar * nu * nu * d * d * d / ((6.0 * z).exp() * s * s * s * g * g * g)).cbrt();
        let y_star = self.y_star(side, s, t, z)?;
        let half_width = epsilon.cbrt() * y_plus;
        Ok(HedgeBand::centred(y_star, half_width))
    }

    pub fn inner_profile(&self, s: f64, t: f64, z: f64) -> Result<InnerProfile> {
        let tau = check(s, t, self.params)?;
        let yz = self.y_star_z(s, t, z)?;
        let nu = self.model.nu;
        if nu * yz == 0.0 {
            return Err(Error::DegenerateInnerLayer);
        }
        let f = self.model.f(z);
        let p = self.params;
        let a = p.gamma / p.discount(tau) * f * f * s * s / (nu * nu * yz * yz);
        let y_plus = self.scaled_half_width(s, t, z)?;
        Ok(InnerProfile { a, b: -a * y_plus * y_plus, y_plus })
    }
}

impl crate::expansion::Pricer {
    /// Hedging formulas bound to this pricer's market and averages.
    pub fn hedge(&self) -> HedgeInputs<'_> {
        HedgeInputs {
            params: self.params(),
            model: self.model(),
            sigma_bar: self.sigma_bar(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_one_reference_point() {
        let p = MarketParams::new(0.07, 0.1, 1.0, 0.5, 0.3);
        let m = OUVolModel::scott(0.2f64.ln(), 1.0, 0.0);
        let h = HedgeInputs { params: &p, model: &m, sigma_bar: 0.2 };
        let ys = h.y_star(Side::Plain, 0.5, 0.0, 0.2f64.ln()).unwrap();
        let expect = 0.03 * (-0.021f64).exp() / (0.04 * 0.5);
        assert!((ys - expect).abs() < 1e-14);
        let b = h.band(Side::Plain, 0.5, 0.0, 0.2f64.ln(), 1.0 / 200.0).unwrap();
        assert_eq!(b.upper - b.y_star, b.y_star - b.lower);
        assert!(b.half_width > 0.0);
    }

    #[test]
    fn generic_matches_scott() {
        let p = MarketParams::new(0.04, 0.1, 2.0, 100.0, 3.0);
        let m = OUVolModel::scott(-1.9, 0.5, -0.2);
        let h = HedgeInputs { params: &p, model: &m, sigma_bar: 0.165 };
        for side in Side::BOTH {
            let a = h.band(side, 90.0, 1.0, -1.7, 0.01).unwrap();
            let b = h.scott_band(side, 90.0, 1.0, -1.7, 0.01).unwrap();
            assert!((a.half_width - b.half_width).abs() <= 1e-12 * a.half_width);
        }
    }

    #[test]
    fn zero_nu_is_degenerate() {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        let m = OUVolModel::scott(-1.8, 0.0, 0.0);
        let h = HedgeInputs { params: &p, model: &m, sigma_bar: 0.165 };
        assert_eq!(h.band(Side::Writer, 100.0, 0.0, -1.8, 0.01).unwrap().half_width, 0.0);
        assert_eq!(h.inner_profile(100.0, 0.0, -1.8), Err(Error::DegenerateInnerLayer));
    }
}
