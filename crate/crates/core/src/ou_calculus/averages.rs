use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{average_with, exp_moment, InvariantMeasure, PoissonSolver, PoissonSource, SourceId};
use crate::error::Result;
use crate::model::{OUVolModel, VolFunction};
use crate::quadrature::GaussHermite;

/// Every invariant-measure average the correction terms consume.
///
/// `phi`, `psi`, `F`, `G` solve the centered Poisson problems with sources
/// `f^2`, `1/f^2`, `f phi'` and `phi'/f`. Primes are `d/dz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageSet {
    pub sigma_bar_sq: f64,
    pub inv_tau_sq: f64,
    pub f_phi_prime: f64,
    pub phi_prime_over_f: f64,
    pub psi_prime_over_f: f64,
    pub psi_prime_f: f64,
    pub big_f_prime_f: f64,
    pub big_f_prime_over_f: f64,
    pub big_g_prime_f: f64,
    pub big_g_prime_over_f: f64,
    pub phi_prime_sq: f64,
    pub phi_prime_psi_prime: f64,
}

impl AverageSet {
    pub const NAMES: [&'static str; 12] = [
        "sigma_bar_sq",
        "inv_tau_sq",
        "f_phi_prime",
        "phi_prime_over_f",
        "psi_prime_over_f",
        "psi_prime_f",
        "F_prime_f",
        "F_prime_over_f",
        "G_prime_f",
        "G_prime_over_f",
        "phi_prime_sq",
        "phi_prime_psi_prime",
    ];

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar_sq.sqrt()
    }

    pub fn values(&self) -> [f64; 12] {
        [
            self.sigma_bar_sq,
            self.inv_tau_sq,
            self.f_phi_prime,
            self.phi_prime_over_f,
            self.psi_prime_over_f,
            self.psi_prime_f,
            self.big_f_prime_f,
            self.big_f_prime_over_f,
            self.big_g_prime_f,
            self.big_g_prime_over_f,
            self.phi_prime_sq,
            self.phi_prime_psi_prime,
        ]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, f64)> {
        Self::NAMES.into_iter().zip(self.values())
    }

    /// Largest relative difference over all entries.
    pub fn max_rel_diff(&self, other: &AverageSet) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// `<e^{(a+b)z}> - <e^{az}><e^{bz}>` without cancellation.
fn exp_cov(a: f64, b: f64, m: f64, nu: f64) -> f64 {
    let nu2 = nu * nu;
    ((a + b) * m + 0.5 * (a * a + b * b) * nu2).exp() * (a * b * nu2).exp_m1()
}

/// `<e^{kz} chi'>` for the Poisson solution with source `e^{jz} - <e^{jz}>`.
///
/// Integration by parts gives `<g chi'> = -<G (s - <s>)> / nu^2` with `G' = g`.
fn exp_weighted_derivative(k: f64, j: f64, m: f64, nu: f64) -> f64 {
    if k == 0.0 {
        // G = z, and <z e^{jz}> = (m + j nu^2) <e^{jz}>
        -j * exp_moment(j, m, nu)
    } else {
        -exp_cov(k, j, m, nu) / (k * nu * nu)
    }
}

/// `sum_{n>=1} x^n / (n n!)`.
fn ein_series(x: f64) -> f64 {
    let mut term = 1.0; // x^n / n!
    let mut sum = 0.0;
    let mut comp = 0.0;
    for n in 1..2000 {
        let nf = n as f64;
        term *= x / nf;
        let add = term / nf;
        // Kahan summation: the alternating case cancels heavily
        let y = add - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if nf > x.abs() && add.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Closed forms of every average for `f = e^z`.
pub fn scott_closed_form(m: f64, nu: f64) -> AverageSet {
    let mo = |k: f64| exp_moment(k, m, nu);
    let nu2 = nu * nu;
    let phi_w = |k: f64| exp_weighted_derivative(k, 2.0, m, nu);
    let psi_w = |k: f64| exp_weighted_derivative(k, -2.0, m, nu);
    let a = phi_w(1.0);
    let b = phi_w(-1.0);
    // <e^{jz} F'> with F sourced by e^z phi' - a, likewise G by e^{-z} phi' - b
    let big_f = |j: f64| -(phi_w(j + 1.0) - mo(j) * a) / (j * nu2);
    let big_g = |j: f64| -(phi_w(j - 1.0) - mo(j) * b) / (j * nu2);
    AverageSet {
        sigma_bar_sq: mo(2.0),
        inv_tau_sq: mo(-2.0),
        f_phi_prime: a,
        phi_prime_over_f: b,
        psi_prime_over_f: psi_w(-1.0),
        psi_prime_f: psi_w(1.0),
        big_f_prime_f: big_f(1.0),
        big_f_prime_over_f: big_f(-1.0),
        big_g_prime_f: big_g(1.0),
        big_g_prime_over_f: big_g(-1.0),
        phi_prime_sq: (4.0 * m + 4.0 * nu2).exp() / nu2 * ein_series(4.0 * nu2),
        phi_prime_psi_prime: (4.0 * nu2).exp() / nu2 * ein_series(-4.0 * nu2),
    }
}

/// Poisson solutions and averages for one volatility model.
#[derive(Debug)]
pub struct OuSolutions {
    pub measure: InvariantMeasure,
    pub averages: AverageSet,
    /// Closed-form averages, Scott model only.
    pub closed_form: Option<AverageSet>,
    vol: VolFunction,
    solvers: Option<[Arc<PoissonSolver>; 4]>,
}

impl OuSolutions {
    pub fn build(model: &OUVolModel) -> Result<Self> {
        Self::build_with_rule(model, GaussHermite::standard())
    }

    pub fn build_with_rule(model: &OUVolModel, rule: Arc<GaussHermite>) -> Result<Self> {
        let meas = InvariantMeasure::of(model);
        let vol = model.vol.clone();
        if meas.nu == 0.0 {
            // point mass: the derivative averages are set to zero, every
            // consumer multiplies them by a power of nu
            let f = vol.eval(meas.m);
            let averages = AverageSet {
                sigma_bar_sq: f * f,
                inv_tau_sq: 1.0 / (f * f),
                f_phi_prime: 0.0,
                phi_prime_over_f: 0.0,
                psi_prime_over_f: 0.0,
                psi_prime_f: 0.0,
                big_f_prime_f: 0.0,
                big_f_prime_over_f: 0.0,
                big_g_prime_f: 0.0,
                big_g_prime_over_f: 0.0,
                phi_prime_sq: 0.0,
                phi_prime_psi_prime: 0.0,
            };
            return Ok(Self { measure: meas, averages, closed_form: None, vol, solvers: None });
        }
        let avg = |g: &dyn Fn(f64) -> f64| average_with(g, &meas, &rule);
        let fv = vol.clone();
        let f = move |z: f64| fv.eval(z);
        let sigma_bar_sq = avg(&|z| f(z).powi(2))?;
        let inv_tau_sq = avg(&|z| f(z).powi(-2))?;

        let (phi_src, psi_src) = if vol.is_scott() {
            (
                PoissonSource::Exponential {
                    terms: vec![(1.0, 2.0)],
                    constant: -exp_moment(2.0, meas.m, meas.nu),
                },
                PoissonSource::Exponential {
                    terms: vec![(1.0, -2.0)],
                    constant: -exp_moment(-2.0, meas.m, meas.nu),
                },
            )
        } else {
            let (f1, f2) = (f.clone(), f.clone());
            (
                PoissonSource::general(move |z| f1(z).powi(2) - sigma_bar_sq),
                PoissonSource::general(move |z| f2(z).powi(-2) - inv_tau_sq),
            )
        };
        let solve = |src, id| PoissonSolver::with_options(src, meas, id, super::SOLVABILITY_TOL, rule.clone());
        let phi = Arc::new(solve(phi_src, SourceId::Phi)?);
        let psi = Arc::new(solve(psi_src, SourceId::Psi)?);

        let f_phi_prime = avg(&|z| f(z) * phi.derivative(z))?;
        let phi_prime_over_f = avg(&|z| phi.derivative(z) / f(z))?;
        let psi_prime_over_f = avg(&|z| psi.derivative(z) / f(z))?;
        let psi_prime_f = avg(&|z| psi.derivative(z) * f(z))?;
        let phi_prime_sq = avg(&|z| phi.derivative(z).powi(2))?;
        let phi_prime_psi_prime = avg(&|z| phi.derivative(z) * psi.derivative(z))?;

        let big_f = {
            let (phi, f) = (phi.clone(), f.clone());
            Arc::new(solve(
                PoissonSource::general(move |z| f(z) * phi.derivative(z) - f_phi_prime),
                SourceId::F,
            )?)
        };
        let big_g = {
            let (phi, f) = (phi.clone(), f.clone());
            Arc::new(solve(
                PoissonSource::general(move |z| phi.derivative(z) / f(z) - phi_prime_over_f),
                SourceId::G,
            )?)
        };
        let averages = AverageSet {
            sigma_bar_sq,
            inv_tau_sq,
            f_phi_prime,
            phi_prime_over_f,
            psi_prime_over_f,
            psi_prime_f,
            big_f_prime_f: avg(&|z| big_f.derivative(z) * f(z))?,
            big_f_prime_over_f: avg(&|z| big_f.derivative(z) / f(z))?,
            big_g_prime_f: avg(&|z| big_g.derivative(z) * f(z))?,
            big_g_prime_over_f: avg(&|z| big_g.derivative(z) / f(z))?,
            phi_prime_sq,
            phi_prime_psi_prime,
        };
        let closed_form = vol.is_scott().then(|| scott_closed_form(meas.m, meas.nu));
        Ok(Self {
            measure: meas,
            averages,
            closed_form,
            vol,
            solvers: Some([phi, psi, big_f, big_g]),
        })
    }

    pub fn vol(&self) -> &VolFunction {
        &self.vol
    }

    pub fn solver(&self, id: SourceId) -> Option<&PoissonSolver> {
        let idx = match id {
            SourceId::Phi => 0,
            SourceId::Psi => 1,
            SourceId::F => 2,
            SourceId::G => 3,
            SourceId::Custom => return None,
        };
        self.solvers.as_ref().map(|s| s[idx].as_ref())
    }

    pub fn solver_arc(&self, id: SourceId) -> Option<Arc<PoissonSolver>> {
        let idx = match id {
            SourceId::Phi => 0,
            SourceId::Psi => 1,
            SourceId::F => 2,
            SourceId::G => 3,
            SourceId::Custom => return None,
        };
        self.solvers.as_ref().map(|s| s[idx].clone())
    }

    /// `phi(z)`; zero for a degenerate measure.
    pub fn phi(&self, z: f64) -> f64 {
        self.solver(SourceId::Phi).map_or(0.0, |s| s.value(z))
    }

    pub fn psi(&self, z: f64) -> f64 {
        self.solver(SourceId::Psi).map_or(0.0, |s| s.value(z))
    }

    pub fn phi_prime(&self, z: f64) -> f64 {
        self.solver(SourceId::Phi).map_or(0.0, |s| s.derivative(z))
    }

    pub fn psi_prime(&self, z: f64) -> f64 {
        self.solver(SourceId::Psi).map_or(0.0, |s| s.derivative(z))
    }

    /// Relative gap between quadrature and closed-form averages (Scott only).
    pub fn closed_form_deviation(&self) -> Option<f64> {
        self.closed_form.as_ref().map(|c| c.max_rel_diff(&self.averages))
    }
}

/// Quadrature averages for `model`.
pub fn build_average_set(model: &OUVolModel) -> Result<AverageSet> {
    Ok(OuSolutions::build(model)?.averages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_scott_value() {
        let c = scott_closed_form(0.0, 0.5);
        assert!((c.f_phi_prime + 4.847_883_565_943).abs() < 1e-11, "{}", c.f_phi_prime);
        assert!((c.sigma_bar_sq - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn series_against_direct_sum() {
        let x: f64 = 1.7;
        let mut direct = 0.0;
        let mut fact = 1.0;
        for n in 1..60 {
            fact *= n as f64;
            direct += x.powi(n) / (n as f64 * fact);
        }
        assert!((ein_series(x) - direct).abs() < 1e-14);
    }

    #[test]
    fn small_nu_limit_is_not_zero() {
        // phi' -> -2 e^{2m} as nu -> 0, so <f phi'> -> -2 e^{3m}
        let c = scott_closed_form(0.3, 1e-4);
        assert!((c.f_phi_prime + 2.0 * (0.9f64).exp()).abs() < 1e-6);
    }
}
