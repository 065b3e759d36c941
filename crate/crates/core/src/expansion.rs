//! Price expansion `C = C_BS + sqrt(eps) C3 + eps (C6_z + C6_tilde) + ...`
//! of the utility-indifference price.
//!
//! Writing `D_n = S^n d^n C_BS / dS^n`, `a = <f phi'>` and
//! `b = (alpha - r) <phi'/f>`, the order-`sqrt(eps)` correction is
//!
//! ```text
//! C3 = -(T - t) (nu rho / sqrt 2) Q,    Q = a (D3 + 2 D2) - b D2.
//! ```
//!
//! The order-`eps` term splits into `C6_z = -D2 phi(z) / 2` and `C6_tilde`,
//! which solves `<L2> C6_tilde = (T-t)^2 A + (T-t) B + C` with zero terminal
//! data. `<L2>` commutes with `S d/dS`, so it annihilates every `D_n`. The
//! parts of `A`, `B`, `C` that are linear in the `D_n` are therefore handled
//! by `-(T-t)^{k+1}/(k+1)` prefactors. The parts quadratic in the `D_n`
//! (weighted by `gamma/delta`) are not annihilated. They are integrated by
//! Duhamel's formula under the averaged lognormal law, which is exact for
//! their Gaussian-times-polynomial form in `ln S`.
//!
//! The truncated polynomial `(T-t)^3/3 A + (T-t)^2/2 B + (T-t) C` is kept as
//! [`Pricer::c6_tilde_truncated`] for comparison.

use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::bs_kernel::greeks;
use crate::error::{domain, Result};
use crate::model::{MarketParams, OUVolModel, Side};
use crate::ou_calculus::{AverageSet, OuSolutions};
use crate::quadrature::{integrate, GaussHermite};

/// Source coefficients of the `C6_tilde` equation at one `(S, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceCoeffs {
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: f64,
}

impl SourceCoeffs {
    /// `tau^2 A + tau B + C`.
    pub fn source(&self, tau: f64) -> f64 {
        tau * tau * self.a_hat + tau * self.b_hat + self.c_hat
    }
}

/// Split of the source into the parts annihilated by `<L2>` and the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSplit {
    pub linear_b: f64,
    pub linear_c: f64,
    pub quadratic_a: f64,
    pub quadratic_b: f64,
    pub quadratic_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C6Parts {
    pub c6_z: f64,
    pub c6_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceExpansion {
    pub c0: f64,
    pub c3: f64,
    pub c6_z: f64,
    pub c6_tilde: f64,
    pub total: f64,
    pub epsilon: f64,
}

/// `D_n = S^n d^n C / dS^n`, indices 2..=6 used.
#[derive(Debug, Clone, Copy)]
struct Scaled([f64; 7]);

impl Scaled {
    fn at(s: f64, tau: f64, sigma: f64, p: &MarketParams, order: usize) -> Self {
        let g = greeks(s, tau, sigma, p.r, p.strike, order);
        let mut d = [0.0; 7];
        d[0] = g.price;
        let mut sn = s;
        for (n, dn) in d.iter_mut().enumerate().take(order + 1).skip(1) {
            *dn = sn * g.derivative(n).unwrap_or(0.0);
            sn *= s;
        }
        Scaled(d)
    }
}

/// The `Q` family built from the `D_n`.
#[derive(Debug, Clone, Copy)]
struct Blocks {
    /// `S Q_S`
    p1: f64,
    /// `S^2 Q_SS`
    p2: f64,
    /// `S d/dS (S^2 Q_SS)`
    p3: f64,
}

impl Blocks {
    fn new(d: &[f64; 7], a: f64, b: f64) -> Self {
        Blocks {
            p1: a * (d[4] + 5.0 * d[3] + 4.0 * d[2]) - b * (d[3] + 2.0 * d[2]),
            p2: a * (d[5] + 8.0 * d[4] + 14.0 * d[3] + 4.0 * d[2])
                - b * (d[4] + 4.0 * d[3] + 2.0 * d[2]),
            p3: a * (d[6] + 13.0 * d[5] + 46.0 * d[4] + 46.0 * d[3] + 8.0 * d[2])
                - b * (d[5] + 8.0 * d[4] + 14.0 * d[3] + 4.0 * d[2]),
        }
    }
}

fn duhamel_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(20))
}

#[derive(Debug, Clone)]
pub struct Pricer {
    params: MarketParams,
    model: OUVolModel,
    solutions: Arc<OuSolutions>,
}

impl Pricer {
    pub fn new(params: MarketParams, model: OUVolModel) -> Result<Self> {
        let solutions = Arc::new(OuSolutions::build(&model)?);
        Ok(Self { params, model, solutions })
    }

    pub fn with_solutions(params: MarketParams, model: OUVolModel, solutions: Arc<OuSolutions>) -> Self {
        Self { params, model, solutions }
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn model(&self) -> &OUVolModel {
        &self.model
    }

    pub fn solutions(&self) -> &Arc<OuSolutions> {
        &self.solutions
    }

    pub fn averages(&self) -> &AverageSet {
        &self.solutions.averages
    }

    pub fn sigma_bar(&self) -> f64 {
        self.averages().sigma_bar()
    }

    /// Same market and averages, different parameters.
    pub fn with_params(&self, params: MarketParams) -> Self {
        Self { params, ..self.clone() }
    }

    fn tau(&self, s: f64, t: f64) -> Result<f64> {
        if !(s > 0.0) || !s.is_finite() {
            return domain(format!("spot must be positive, got {s}"));
        }
        if !t.is_finite() || t > self.params.expiry {
            return domain(format!("t = {t} lies beyond expiry {}", self.params.expiry));
        }
        Ok(self.params.expiry - t)
    }

    fn nu_rho(&self) -> f64 {
        self.model.nu * self.model.rho / SQRT_2
    }

    fn ab(&self) -> (f64, f64) {
        let av = self.averages();
        (av.f_phi_prime, self.params.excess_return() * av.phi_prime_over_f)
    }

    /// Leading-order value function (without the wealth factor).
    pub fn u0(&self, side: Side, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        let p = &self.params;
        let ar = p.excess_return();
        let plain = tau * p.discount(tau) * ar * ar / (2.0 * p.gamma) * self.averages().inv_tau_sq;
        Ok(match side {
            Side::Plain => plain,
            Side::Writer => {
                let c = if tau == 0.0 {
                    (s - p.strike).max(0.0)
                } else {
                    greeks(s, tau, self.sigma_bar(), p.r, p.strike, 0).price
                };
                plain - c
            }
        })
    }

    /// Order-`sqrt(eps)` value-function term.
    pub fn u3(&self, side: Side, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let p = &self.params;
        let ar = p.excess_return();
        let plain = (p.discount(tau) / p.gamma) * ar.powi(3) * self.averages().psi_prime_over_f;
        let q = match side {
            Side::Plain => 0.0,
            Side::Writer => self.q_block(s, tau),
        };
        Ok(tau * self.nu_rho() * (q + plain))
    }

    fn q_block(&self, s: f64, tau: f64) -> f64 {
        let d = Scaled::at(s, tau, self.sigma_bar(), &self.params, 3);
        let (a, b) = self.ab();
        a * (d.0[3] + 2.0 * d.0[2]) - b * d.0[2]
    }

    /// `C3 = U3^plain - U3^writer`.
    pub fn c3(&self, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        Ok(-tau * self.nu_rho() * self.q_block(s, tau))
    }

    /// `A`, `B`, `C` exactly as printed, block by block.
    pub fn c6_source_coeffs(&self, s: f64, t: f64) -> Result<SourceCoeffs> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return domain("source coefficients are singular at t = T");
        }
        let d = Scaled::at(s, tau, self.sigma_bar(), &self.params, 6).0;
        Ok(self.printed_coeffs(&d, tau))
    }

    fn printed_coeffs(&self, d: &[f64; 7], tau: f64) -> SourceCoeffs {
        let p = &self.params;
        let av = self.averages();
        let (nu, rho) = (self.model.nu, self.model.rho);
        let g_over_d = p.gamma / p.discount(tau);
        let ar = p.excess_return();
        let fp = av.f_phi_prime;
        let pf = av.phi_prime_over_f;
        let nr2 = nu * nu * rho * rho;

        let first = fp * (d[4] + 5.0 * d[3] + 4.0 * d[2]) - ar * pf * (d[3] + 2.0 * d[2]);
        let a_hat = -0.25 * nr2 * g_over_d * av.sigma_bar_sq * first * first;

        let b1 = -nr2
            * (fp - 0.5 * ar * pf)
            * (fp * (d[5] + 8.0 * d[4] + 14.0 * d[3] + 4.0 * d[2])
                - ar * pf * (d[4] + 4.0 * d[3] + 2.0 * d[2]));
        let b2 = -0.5
            * nr2
            * fp
            * ((d[6] + 11.0 * d[5] + 30.0 * d[4] + 18.0 * d[3]) * fp
                - ar * (d[5] + 6.0 * d[4] + 6.0 * d[3]) * pf);
        let b3 = -0.5
            * nr2
            * g_over_d
            * (fp * (d[4] + 5.0 * d[3] + 4.0 * d[2]) - ar * pf * (2.0 * d[2] + d[3]))
            * (d[2] * fp - ar * ar * av.psi_prime_f / g_over_d);
        let b_hat = b1 + b2 + b3;

        let c_hat = nu * nu * g_over_d
            * (-0.25 * d[2] * d[2] * av.phi_prime_sq
                + 0.5 / g_over_d * ar * ar * d[2] * av.phi_prime_psi_prime)
            - nr2 * ar * (ar * d[2] * av.big_g_prime_over_f - (d[3] + 2.0 * d[2]) * av.big_f_prime_over_f)
            - nr2
                * ((d[4] + 5.0 * d[3] + 4.0 * d[2]) * av.big_f_prime_f
                    - ar * (d[3] + 2.0 * d[2]) * av.big_g_prime_f);
        SourceCoeffs { a_hat, b_hat, c_hat }
    }

    /// The printed coefficients regrouped into `<L2>`-null and quadratic parts.
    pub fn source_split(&self, s: f64, t: f64) -> Result<SourceSplit> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return domain("source coefficients are singular at t = T");
        }
        let d = Scaled::at(s, tau, self.sigma_bar(), &self.params, 6).0;
        let g_over_d = self.params.gamma / self.params.discount(tau);
        let q = self.quadratic_weights(&d);
        let lin = self.linear_parts(&d);
        Ok(SourceSplit {
            linear_b: lin.0,
            linear_c: lin.1,
            quadratic_a: g_over_d * q.0,
            quadratic_b: g_over_d * q.1,
            quadratic_c: g_over_d * q.2,
        })
    }

    /// Linear parts of `B` and `C`.
    fn linear_parts(&self, d: &[f64; 7]) -> (f64, f64) {
        let av = self.averages();
        let (nu, rho) = (self.model.nu, self.model.rho);
        let nr2 = nu * nu * rho * rho;
        let ar = self.params.excess_return();
        let (a, b) = self.ab();
        let k = Blocks::new(d, a, b);
        let lin_b = 0.5 * nr2 * (b * k.p2 - a * k.p3 + ar * ar * av.psi_prime_f * k.p1);
        let lin_c = 0.5 * nu * nu * ar * ar * d[2] * av.phi_prime_psi_prime
            - nr2 * ar * (ar * d[2] * av.big_g_prime_over_f - (d[3] + 2.0 * d[2]) * av.big_f_prime_over_f)
            - nr2
                * ((d[4] + 5.0 * d[3] + 4.0 * d[2]) * av.big_f_prime_f
                    - ar * (d[3] + 2.0 * d[2]) * av.big_g_prime_f);
        (lin_b, lin_c)
    }

    /// Quadratic parts of `A`, `B`, `C` with the `gamma/delta` factor removed.
    fn quadratic_weights(&self, d: &[f64; 7]) -> (f64, f64, f64) {
        let av = self.averages();
        let (nu, rho) = (self.model.nu, self.model.rho);
        let nr2 = nu * nu * rho * rho;
        let (a, b) = self.ab();
        let p1 = Blocks::new(d, a, b).p1;
        (
            -0.25 * nr2 * av.sigma_bar_sq * p1 * p1,
            -0.5 * nr2 * a * p1 * d[2],
            -0.25 * nu * nu * av.phi_prime_sq * d[2] * d[2],
        )
    }

    /// Closed-form part of `C6_tilde` from the linear source terms.
    pub fn c6_tilde_linear(&self, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let d = Scaled::at(s, tau, self.sigma_bar(), &self.params, 6).0;
        let (lb, lc) = self.linear_parts(&d);
        Ok(-0.5 * tau * tau * lb - tau * lc)
    }

    /// Duhamel integral of the quadratic source terms.
    pub fn c6_tilde_quadratic(&self, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let p = self.params;
        let sb = self.sigma_bar();
        let sb2 = sb * sb;
        let (r, k, big_t) = (p.r, p.strike, p.expiry);
        let rule = duhamel_rule();
        let ln_s = s.ln();

        // E[g(S_u)] for u = T - w^2, under dX = (r - sb^2/2) du + sb dW
        let expectation = |tau_u: f64, dt: f64| -> f64 {
            let h = |x: f64| {
                let d = Scaled::at(x.exp(), tau_u, sb, &p, 4).0;
                let q = self.quadratic_weights(&d);
                tau_u * tau_u * q.0 + tau_u * q.1 + q.2
            };
            let v_t = sb2 * dt;
            let mu_t = ln_s + (r - 0.5 * sb2) * dt;
            if !(v_t > 0.0) {
                return h(mu_t);
            }
            // every D_i D_j carries S^2 n(d1)^2, a Gaussian in x
            let s2 = sb2 * tau_u;
            let mu_g = k.ln() - (r + 0.5 * sb2) * tau_u + s2;
            let v_g = 0.5 * s2;
            let v = v_g * v_t / (v_g + v_t);
            let c = (mu_g * v_t + mu_t * v_g) / (v_g + v_t);
            let width = (2.0 * v).sqrt();
            let norm = width / (2.0 * PI * v_t).sqrt();
            let mut acc = 0.0;
            for (&y, &wt) in rule.nodes().iter().zip(rule.weights()) {
                let x = c + width * y;
                let e = y * y - (x - mu_t).powi(2) / (2.0 * v_t);
                acc += wt * h(x) * e.exp();
            }
            acc * norm
        };
        let integrand = |w: f64| {
            let tau_u = w * w;
            if tau_u == 0.0 {
                return 0.0;
            }
            let u = big_t - tau_u;
            let dt = (tau - tau_u).max(0.0);
            2.0 * w * p.gamma * (r * (big_t - 2.0 * u + t)).exp() * expectation(tau_u, dt)
        };
        Ok(-integrate(integrand, 0.0, tau.sqrt(), 0.0, 1e-11).value)
    }

    /// Solution of `<L2> C6_tilde = tau^2 A + tau B + C`, `C6_tilde(T) = 0`.
    pub fn c6_tilde(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.c6_tilde_linear(s, t)? + self.c6_tilde_quadratic(s, t)?)
    }

    /// `tau^3/3 A + tau^2/2 B + tau C`: exact only for the linear terms.
    pub fn c6_tilde_truncated(&self, s: f64, t: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let c = self.c6_source_coeffs(s, t)?;
        Ok(tau.powi(3) / 3.0 * c.a_hat + tau * tau / 2.0 * c.b_hat + tau * c.c_hat)
    }

    /// `C6_z = -S^2 C_SS phi(z) / 2`.
    pub fn c6_z(&self, s: f64, t: f64, z: f64) -> Result<f64> {
        let tau = self.tau(s, t)?;
        if tau == 0.0 {
            return Ok(0.0);
        }
        let d = Scaled::at(s, tau, self.sigma_bar(), &self.params, 2).0;
        Ok(-0.5 * d[2] * self.solutions.phi(z))
    }

    pub fn c6(&self, s: f64, t: f64, z: f64) -> Result<C6Parts> {
        Ok(C6Parts {
            c6_z: self.c6_z(s, t, z)?,
            c6_tilde: self.c6_tilde(s, t)?,
        })
    }

    /// Expansion through order `eps`; `eps = 0` returns the averaged price.
    pub fn price(&self, s: f64, t: f64, z: f64, epsilon: f64) -> Result<PriceExpansion> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return domain(format!("epsilon must be non-negative, got {epsilon}"));
        }
        let tau = self.tau(s, t)?;
        let c0 = if tau == 0.0 {
            (s - self.params.strike).max(0.0)
        } else {
            greeks(s, tau, self.sigma_bar(), self.params.r, self.params.strike, 0).price
        };
        let c3 = self.c3(s, t)?;
        let C6Parts { c6_z, c6_tilde } = self.c6(s, t, z)?;
        let total = c0 + epsilon.sqrt() * c3 + epsilon * (c6_z + c6_tilde);
        Ok(PriceExpansion { c0, c3, c6_z, c6_tilde, total, epsilon })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3(rho: f64) -> Pricer {
        Pricer::new(
            MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0),
            OUVolModel::scott_with_sigma_bar(0.165, 0.5, rho),
        )
        .unwrap()
    }

    #[test]
    fn c3_is_side_difference() {
        let p = fig3(-0.2);
        for s in [60.0, 95.0, 100.0, 130.0] {
            let c3 = p.c3(s, 0.5).unwrap();
            let diff = p.u3(Side::Plain, s, 0.5).unwrap() - p.u3(Side::Writer, s, 0.5).unwrap();
            assert!((c3 - diff).abs() < 1e-10 * c3.abs().max(1.0));
        }
    }

    #[test]
    fn zero_correlation_kills_odd_terms() {
        let p = fig3(0.0);
        let c = p.c6_source_coeffs(100.0, 0.0).unwrap();
        assert_eq!(c.a_hat, 0.0);
        assert_eq!(c.b_hat, 0.0);
        assert_eq!(p.c3(100.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn split_reassembles_printed_coefficients() {
        let p = fig3(-0.2);
        for s in [70.0, 100.0, 125.0] {
            let c = p.c6_source_coeffs(s, 1.0).unwrap();
            let sp = p.source_split(s, 1.0).unwrap();
            let tol = 1e-11;
            assert!((c.a_hat - sp.quadratic_a).abs() <= tol * c.a_hat.abs().max(1e-300));
            assert!((c.b_hat - sp.linear_b - sp.quadratic_b).abs() <= tol * c.b_hat.abs());
            assert!((c.c_hat - sp.linear_c - sp.quadratic_c).abs() <= tol * c.c_hat.abs());
        }
    }

    #[test]
    fn expiry_and_epsilon_zero() {
        let p = fig3(-0.2);
        let e = p.price(120.0, 3.0, p.model().m, 0.01).unwrap();
        assert_eq!((e.c0, e.c3, e.c6_z, e.c6_tilde), (20.0, 0.0, 0.0, 0.0));
        let e = p.price(100.0, 0.0, p.model().m, 0.0).unwrap();
        assert_eq!(e.total, e.c0);
    }
}
