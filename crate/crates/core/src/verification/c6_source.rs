//! Numerical reconstruction of the order-`eps` source of the price equation.
//!
//! Per side, `U9` is obtained by inverting `L0` on `-(L2 U3 + L1 U6z)` with a
//! pointwise Poisson solve, then every bracket of the side-differenced
//! solvability condition is averaged by quadrature. The closed-form
//! coefficients `A`, `B`, `C` (and the `F`, `G` averages inside `C`) are not
//! used anywhere on this route.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::expansion::Pricer;
use crate::model::Side;
use crate::ou_calculus::{PoissonSolver, PoissonSource, SourceId};
use crate::quadrature::GaussHermite;

use super::grid::{GridFunction1D, ResidualReport};

/// Solvability defect of a `U9` source above which the run is flagged.
pub const U9_SOLVABILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct C6SourceCheck {
    pub s: Vec<f64>,
    pub t: f64,
    pub numeric: Vec<f64>,
    pub printed: Vec<f64>,
    /// The four brackets, in the order they appear in the equation.
    pub terms: Vec<[f64; 4]>,
    /// Largest `|<L2 U3 + L1 U6z>| / <|L2 U3| + |L1 U6z|>` over all `U9` sources.
    pub solvability: f64,
    pub report: ResidualReport,
}

impl C6SourceCheck {
    pub fn numeric_grid(&self) -> Result<GridFunction1D> {
        GridFunction1D::new(self.s.clone(), self.numeric.clone())
    }

    pub fn solvability_flagged(&self) -> bool {
        self.solvability > U9_SOLVABILITY_TOL
    }
}

fn d1_5(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn d2_5(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h * h)
}

/// `U3`, `U0` data of one side at one spot, all by finite differences of
/// the value-function formulas.
#[derive(Debug, Clone, Copy)]
struct Local {
    u3: f64,
    u3_t: f64,
    u3_s: f64,
    u3_ss: f64,
    /// `S^2 U0_SS`
    k0: f64,
    k0_s: f64,
}

fn local(pr: &Pricer, side: Side, s: f64, t: f64) -> Result<Local> {
    let tau = pr.params().expiry - t;
    let u3 = |s: f64, t: f64| pr.u3(side, s, t).unwrap_or(f64::NAN);
    let u0 = |s: f64| pr.u0(side, s, t).unwrap_or(f64::NAN);
    let hs = 2e-3 * s;
    let k0 = |x: f64| x * x * d2_5(&u0, x, 2e-3 * x);
    let out = Local {
        u3: u3(s, t),
        u3_t: d1_5(&|tt| u3(s, tt), t, 1e-2 * tau.min(1.0)),
        u3_s: d1_5(&|x| u3(x, t), s, hs),
        u3_ss: d2_5(&|x| u3(x, t), s, hs),
        k0: k0(s),
        k0_s: d1_5(&k0, s, 5e-3 * s),
    };
    let all = [out.u3, out.u3_t, out.u3_s, out.u3_ss, out.k0, out.k0_s];
    if all.iter().any(|v| !v.is_finite()) {
        return domain(format!("non-finite value-function data at S = {s}"));
    }
    Ok(out)
}

struct Context<'a> {
    pr: &'a Pricer,
    t: f64,
    phi: Arc<PoissonSolver>,
    psi: Arc<PoissonSolver>,
    rule: Arc<GaussHermite>,
    /// Invariant-measure nodes and normalized weights.
    z: Vec<f64>,
    w: Vec<f64>,
}

impl Context<'_> {
    fn avg(&self, g: impl Fn(usize, f64) -> f64) -> f64 {
        self.z.iter().zip(&self.w).enumerate().map(|(i, (&z, &w))| w * g(i, z)).sum()
    }

    /// `U9_z` of one side at the quadrature nodes, and the source's
    /// relative solvability defect.
    fn u9z(&self, side: Side, s: f64) -> Result<(Vec<f64>, f64)> {
        let pr = self.pr;
        let p = *pr.params();
        let model = pr.model();
        let l = local(pr, side, s, self.t)?;
        let tau = p.expiry - self.t;
        let d_over_g = p.discount(tau) / p.gamma;
        let ar = p.excess_return();
        let k = model.nu * SQRT_2 * model.rho;
        let vol = model.vol.clone();
        let (phi, psi) = (self.phi.clone(), self.psi.clone());
        // (L2 U3, L1 U6z) at z
        let parts = move |z: f64| {
            let f = vol.eval(z);
            let (dphi, dpsi) = (phi.derivative(z), psi.derivative(z));
            let u6z = -0.5 * l.k0 * dphi - 0.5 * d_over_g * ar * ar * dpsi;
            let u6sz = -0.5 * l.k0_s * dphi;
            let l1u6 = -k * ar / f * u6z + k * f * s * u6sz;
            let l2u3 = l.u3_t + 0.5 * f * f * s * s * l.u3_ss + p.r * s * l.u3_s - p.r * l.u3;
            (l2u3, l1u6)
        };
        let split = parts.clone();
        let src = move |z: f64| {
            let (a, b) = split(z);
            -(a + b)
        };
        // the two parts cancel on average; measure the defect against them
        let mean = self.avg(|_, z| src(z));
        let size = self.avg(|_, z| {
            let (a, b) = parts(z);
            a.abs() + b.abs()
        });
        let defect = if size > 0.0 { mean.abs() / size } else { 0.0 };
        let meas = self.phi.measure();
        let solver = PoissonSolver::with_options(
            PoissonSource::general(src),
            meas,
            SourceId::Custom,
            f64::INFINITY,
            self.rule.clone(),
        )?;
        Ok((self.z.iter().map(|&z| solver.derivative(z)).collect(), defect))
    }

    /// The four brackets at one spot, and the worst solvability defect.
    fn brackets(&self, s: f64) -> Result<([f64; 4], f64)> {
        let pr = self.pr;
        let p = pr.params();
        let model = pr.model();
        let tau = p.expiry - self.t;
        let g_over_d = p.gamma / p.discount(tau);
        let ar = p.excess_return();
        let (nu, k) = (model.nu, model.nu * SQRT_2 * model.rho);
        let f = |z: f64| model.f(z);
        let h = 5e-3 * s;

        let mut l1u9 = [0.0; 2];
        let mut u3s = [0.0; 2];
        let mut f_u6z = [0.0; 2];
        let mut u6z_sq = [0.0; 2];
        let mut defect = 0.0f64;
        for (j, side) in Side::BOTH.into_iter().enumerate() {
            let mut stencil = Vec::with_capacity(5);
            for o in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                let (v, d) = self.u9z(side, s + o * h)?;
                defect = defect.max(d);
                stencil.push(v);
            }
            let centre = &stencil[2];
            let ds = |i: usize| {
                (stencil[0][i] - 8.0 * stencil[1][i] + 8.0 * stencil[3][i] - stencil[4][i]) / (12.0 * h)
            };
            l1u9[j] = -k * ar * self.avg(|i, z| centre[i] / f(z)) + k * s * self.avg(|i, z| f(z) * ds(i));

            let l = local(pr, side, s, self.t)?;
            u3s[j] = l.u3_s;
            let u6z = |z: f64| -0.5 * l.k0 * self.phi.derivative(z) - 0.5 / g_over_d * ar * ar * self.psi.derivative(z);
            f_u6z[j] = self.avg(|_, z| f(z) * u6z(z));
            u6z_sq[j] = self.avg(|_, z| u6z(z).powi(2));
        }
        let sb2 = pr.averages().sigma_bar_sq;
        let terms = [
            -(l1u9[0] - l1u9[1]),
            0.5 * s * s * sb2 * g_over_d * (u3s[0].powi(2) - u3s[1].powi(2)),
            k * s * g_over_d * (u3s[0] * f_u6z[0] - u3s[1] * f_u6z[1]),
            nu * nu * g_over_d * (u6z_sq[0] - u6z_sq[1]),
        ];
        Ok((terms, defect))
    }
}

/// Rebuilds the source of `<L2> C6_tilde` on `s_grid` at time `t` and
/// compares it with `tau^2 A + tau B + C`.
pub fn numeric_source_c6(pricer: &Pricer, s_grid: &[f64], t: f64) -> Result<C6SourceCheck> {
    let p = pricer.params();
    if !(t < p.expiry) {
        return domain("the source is singular at expiry");
    }
    if s_grid.is_empty() || s_grid.iter().any(|&s| !(s > 0.0)) {
        return domain("spot grid must be non-empty and positive");
    }
    let sol = pricer.solutions();
    let (Some(phi), Some(psi)) = (sol.solver_arc(SourceId::Phi), sol.solver_arc(SourceId::Psi)) else {
        return domain("the U9 construction needs nu > 0");
    };
    let rule = GaussHermite::standard();
    let meas = sol.measure;
    let total: f64 = rule.weights().iter().sum();
    let ctx = Context {
        pr: pricer,
        t,
        phi,
        psi,
        z: rule.nodes().iter().map(|&x| meas.node(x)).collect(),
        w: rule.weights().iter().map(|w| w / total).collect(),
        rule,
    };
    let tau = p.expiry - t;
    let rows: Vec<Result<([f64; 4], f64, f64)>> = s_grid
        .par_iter()
        .map(|&s| {
            let (terms, defect) = ctx.brackets(s)?;
            let printed = pricer.c6_source_coeffs(s, t)?.source(tau);
            Ok((terms, defect, printed))
        })
        .collect();
    let mut terms = Vec::with_capacity(s_grid.len());
    let mut numeric = Vec::with_capacity(s_grid.len());
    let mut printed = Vec::with_capacity(s_grid.len());
    let mut solvability = 0.0f64;
    for row in rows {
        let (tm, d, pv) = row?;
        numeric.push(tm.iter().sum());
        terms.push(tm);
        printed.push(pv);
        solvability = solvability.max(d);
    }
    let diff: Vec<f64> = numeric.iter().zip(&printed).map(|(a, b)| a - b).collect();
    let scale = printed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let report = ResidualReport::from_values("numeric_source_c6", &diff, scale, vec![]);
    Ok(C6SourceCheck { s: s_grid.to_vec(), t, numeric, printed, terms, solvability, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarketParams, OUVolModel};

    #[test]
    fn matches_printed_source_with_correlation() {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        let m = OUVolModel::scott_with_sigma_bar(0.165, 0.4, -0.2);
        let pr = Pricer::new(p, m).unwrap();
        let chk = numeric_source_c6(&pr, &[80.0, 100.0, 125.0], 0.0).unwrap();
        assert!(chk.solvability < U9_SOLVABILITY_TOL, "{}", chk.solvability);
        assert!(chk.report.max_rel() < 1e-2, "{} {:?} {:?}", chk.report, chk.numeric, chk.printed);
    }

    #[test]
    fn no_correlation_no_drift_leaves_the_phi_square_term() {
        let p = MarketParams::new(0.04, 0.04, 1.0, 100.0, 3.0);
        let m = OUVolModel::scott_with_sigma_bar(0.165, 0.4, 0.0);
        let pr = Pricer::new(p, m).unwrap();
        let chk = numeric_source_c6(&pr, &[90.0, 110.0], 1.0).unwrap();
        for (i, &s) in chk.s.iter().enumerate() {
            let tm = chk.terms[i];
            assert!(tm[0].abs() < 1e-12 && tm[2].abs() < 1e-12, "{tm:?}");
            let tau = 2.0;
            let gamma = crate::bs_kernel::greeks(s, tau, pr.sigma_bar(), p.r, p.strike, 2).scaled(2);
            let want = -0.25 * 0.16 / p.discount(tau) * gamma * gamma * pr.averages().phi_prime_sq;
            assert!((tm[3] - want).abs() < 1e-6 * want.abs(), "{} vs {want}", tm[3]);
        }
    }
}
