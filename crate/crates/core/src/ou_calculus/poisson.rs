use std::fmt;
use std::io::{self, Write};
use std::sync::{Arc, OnceLock};

use super::{average_with, exp_moment, InvariantMeasure};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, GaussHermite};
use crate::special::{cdf_over_pdf, sf_over_pdf};

/// Relative tolerance on `<s>` before re-centering.
pub const SOLVABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceId {
    /// `f^2 - <f^2>`
    Phi,
    /// `1/f^2 - <1/f^2>`
    Psi,
    /// `f phi' - <f phi'>`
    F,
    /// `phi'/f - <phi'/f>`
    G,
    Custom,
}

impl SourceId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceId::Phi => "phi",
            SourceId::Psi => "psi",
            SourceId::F => "F",
            SourceId::G => "G",
            SourceId::Custom => "custom",
        }
    }
}

#[derive(Clone)]
pub enum PoissonSource {
    /// `sum_j c_j e^{k_j z} + constant`; inner integrals in closed form.
    Exponential { terms: Vec<(f64, f64)>, constant: f64 },
    General(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl PoissonSource {
    pub fn general(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PoissonSource::General(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            PoissonSource::Exponential { terms, constant } => {
                terms.iter().map(|&(c, k)| c * (k * z).exp()).sum::<f64>() + constant
            }
            PoissonSource::General(f) => f(z),
        }
    }
}

impl fmt::Debug for PoissonSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoissonSource::Exponential { terms, constant } => f
                .debug_struct("Exponential")
                .field("terms", terms)
                .field("constant", constant)
                .finish(),
            PoissonSource::General(_) => f.write_str("General(..)"),
        }
    }
}

/// Pointwise solution of `L0 chi = s - <s>` with `<chi> = 0`.
#[derive(Debug)]
pub struct PoissonSolver {
    meas: InvariantMeasure,
    source: PoissonSource,
    id: SourceId,
    shift: f64,
    scale: f64,
    rule: Arc<GaussHermite>,
    offset: OnceLock<f64>,
}

impl PoissonSolver {
    pub fn new(source: PoissonSource, meas: InvariantMeasure, id: SourceId) -> Result<Self> {
        Self::with_options(source, meas, id, SOLVABILITY_TOL, GaussHermite::standard())
    }

    pub fn with_options(
        source: PoissonSource,
        meas: InvariantMeasure,
        id: SourceId,
        tol: f64,
        rule: Arc<GaussHermite>,
    ) -> Result<Self> {
        if !(meas.nu > 0.0) {
            return Err(Error::DegenerateMeasure);
        }
        let mean = match &source {
            PoissonSource::Exponential { terms, constant } => {
                terms
                    .iter()
                    .map(|&(c, k)| c * exp_moment(k, meas.m, meas.nu))
                    .sum::<f64>()
                    + constant
            }
            PoissonSource::General(f) => average_with(|z| f(z), &meas, &rule)?,
        };
        let scale = average_with(|z| source.eval(z).abs(), &meas, &rule)?;
        if mean.abs() > tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Solvability { mean, tol: tol * scale });
        }
        Ok(Self {
            meas,
            source,
            id,
            shift: mean,
            scale,
            rule,
            offset: OnceLock::new(),
        })
    }

    pub fn id(&self) -> SourceId {
        self.id
    }

    pub fn measure(&self) -> InvariantMeasure {
        self.meas
    }

    /// Mean removed from the source before solving.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Centered source `s(z) - shift`.
    #[inline]
    pub fn source(&self, z: f64) -> f64 {
        self.source.eval(z) - self.shift
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let InvariantMeasure { m, nu } = self.meas;
        let x = (z - m) / nu;
        match &self.source {
            PoissonSource::Exponential { terms, constant } => {
                let c0 = constant - self.shift;
                let mut acc = 0.0;
                if x <= 0.0 {
                    for &(c, k) in terms {
                        acc += c * exp_moment(k, m, nu) * cdf_over_pdf(x - k * nu, x);
                    }
                    acc += c0 * cdf_over_pdf(x, x);
                    acc / nu
                } else {
                    for &(c, k) in terms {
                        acc += c * exp_moment(k, m, nu) * sf_over_pdf(x - k * nu, x);
                    }
                    acc += c0 * sf_over_pdf(x, x);
                    -acc / nu
                }
            }
            PoissonSource::General(_) => {
                let span = nu * (12.0 + 4.0 * nu);
                let dz = z - m;
                let two_var = 2.0 * nu * nu;
                let kernel = |u: f64| {
                    let du = u - m;
                    self.source(u) * ((dz - du) * (dz + du) / two_var).exp()
                };
                let abs_tol = 1e-15 * self.scale * nu;
                if dz <= 0.0 {
                    integrate(kernel, z - span, z, abs_tol, 1e-13).value / (nu * nu)
                } else {
                    -integrate(kernel, z, z + span, abs_tol, 1e-13).value / (nu * nu)
                }
            }
        }
    }

    /// `chi'' = (s - <s> - (m - z) chi') / nu^2`, read off the equation itself.
    pub fn second_derivative(&self, z: f64) -> f64 {
        let nu2 = self.meas.nu * self.meas.nu;
        (self.source(z) - (self.meas.m - z) * self.derivative(z)) / nu2
    }

    fn primitive(&self, z: f64) -> f64 {
        let abs_tol = 1e-15 * self.scale.max(f64::MIN_POSITIVE);
        integrate(|u| self.derivative(u), self.meas.m, z, abs_tol, 1e-13).value
    }

    /// `chi(z)` in the gauge `<chi> = 0`.
    pub fn value(&self, z: f64) -> f64 {
        let offset = *self.offset.get_or_init(|| {
            average_with(|u| self.primitive(u), &self.meas, &self.rule).unwrap_or(f64::NAN)
        });
        self.primitive(z) - offset
    }

    /// Tabulates on `m +- 8 nu` with `n` nodes; `chi` by the trapezoid rule.
    pub fn tabulate(&self, n: usize) -> Result<PoissonSolution> {
        if n < 5 {
            return Err(Error::Shape(format!("need at least 5 nodes, got {n}")));
        }
        let InvariantMeasure { m, nu } = self.meas;
        let lo = m - 8.0 * nu;
        let h = 16.0 * nu / (n - 1) as f64;
        let z: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let chi_prime: Vec<f64> = z.iter().map(|&u| self.derivative(u)).collect();
        let source: Vec<f64> = z.iter().map(|&u| self.source(u)).collect();
        let mut chi = vec![0.0; n];
        for i in 1..n {
            chi[i] = chi[i - 1] + 0.5 * h * (chi_prime[i - 1] + chi_prime[i]);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let p = self.meas.density(z[i]);
            num += w * p * chi[i];
            den += w * p;
        }
        let mean = num / den;
        chi.iter_mut().for_each(|c| *c -= mean);
        Ok(PoissonSolution {
            id: self.id,
            meas: self.meas,
            shift: self.shift,
            z,
            chi,
            chi_prime,
            source,
        })
    }
}

/// Grid tabulation of a Poisson solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub id: SourceId,
    pub meas: InvariantMeasure,
    pub shift: f64,
    pub z: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_prime: Vec<f64>,
    /// Centered source at the nodes.
    pub source: Vec<f64>,
}

impl PoissonSolution {
    pub fn spacing(&self) -> f64 {
        self.z[1] - self.z[0]
    }

    /// `L0 chi - source` by central differences on interior nodes.
    pub fn discrete_residual(&self) -> Vec<f64> {
        let h = self.spacing();
        let nu2 = self.meas.nu * self.meas.nu;
        (1..self.z.len() - 1)
            .map(|i| {
                let d1 = (self.chi[i + 1] - self.chi[i - 1]) / (2.0 * h);
                let d2 = (self.chi[i + 1] - 2.0 * self.chi[i] + self.chi[i - 1]) / (h * h);
                (self.meas.m - self.z[i]) * d1 + nu2 * d2 - self.source[i]
            })
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.discrete_residual().iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Columns `z,chi,chi_prime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z,chi,chi_prime")?;
        for i in 0..self.z.len() {
            writeln!(
                w,
                "{},{},{}",
                crate::table::fmt_num(self.z[i]),
                crate::table::fmt_num(self.chi[i]),
                crate::table::fmt_num(self.chi_prime[i])
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi_exp(meas: InvariantMeasure) -> PoissonSolver {
        let c = -exp_moment(2.0, meas.m, meas.nu);
        PoissonSolver::new(
            PoissonSource::Exponential { terms: vec![(1.0, 2.0)], constant: c },
            meas,
            SourceId::Phi,
        )
        .unwrap()
    }

    #[test]
    fn linear_source_has_linear_solution() {
        // L0 (m - z) = z - m
        let meas = InvariantMeasure::new(0.4, 0.8);
        let s = PoissonSolver::new(PoissonSource::general(|z| z - 0.4), meas, SourceId::Custom).unwrap();
        for z in [-3.0, -0.5, 0.4, 1.0, 4.0] {
            assert!((s.derivative(z) + 1.0).abs() < 1e-11, "{z}: {}", s.derivative(z));
            assert!((s.value(z) - (0.4 - z)).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_source() {
        // L0 (z - m)^2 = -2 (z - m)^2 + 2 nu^2, so chi = -(z - m)^2 / 2 + nu^2 / 2
        let meas = InvariantMeasure::new(-1.0, 0.5);
        let s = PoissonSolver::new(
            PoissonSource::general(|z| (z + 1.0).powi(2) - 0.25),
            meas,
            SourceId::Custom,
        )
        .unwrap();
        for z in [-4.0, -1.3, -1.0, 0.2, 1.5] {
            assert!((s.derivative(z) + (z + 1.0)).abs() < 1e-11);
            let exact = -0.5 * (z + 1.0).powi(2) + 0.125;
            assert!((s.value(z) - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn erf_route_matches_general_route() {
        let meas = InvariantMeasure::new(0.0, 0.5);
        let fast = phi_exp(meas);
        let c = fast.shift();
        let slow = PoissonSolver::new(
            PoissonSource::general(|z| (2.0 * z).exp() - exp_moment(2.0, 0.0, 0.5)),
            meas,
            SourceId::Phi,
        )
        .unwrap();
        assert!(c.abs() < 1e-15);
        for z in [-6.0, -2.0, -0.3, 0.0, 0.3, 2.0, 5.0] {
            let (a, b) = (fast.derivative(z), slow.derivative(z));
            assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0), "{z}: {a} vs {b}");
        }
    }

    #[test]
    fn solvability_is_enforced() {
        let meas = InvariantMeasure::new(0.0, 0.5);
        let err = PoissonSolver::new(PoissonSource::general(|z| z + 0.1), meas, SourceId::Custom)
            .unwrap_err();
        assert!(matches!(err, Error::Solvability { .. }));
        assert!(matches!(
            PoissonSolver::new(PoissonSource::general(|z| z), InvariantMeasure::new(0.0, 0.0), SourceId::Custom),
            Err(Error::DegenerateMeasure)
        ));
    }

    #[test]
    fn tabulated_residual_is_second_order() {
        let s = phi_exp(InvariantMeasure::new(0.0, 0.5));
        let coarse = s.tabulate(401).unwrap().max_residual();
        let fine = s.tabulate(801).unwrap().max_residual();
        let ratio = coarse / fine;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        let tab = s.tabulate(401).unwrap();
        let mean: f64 = tab.z.iter().zip(&tab.chi).map(|(&z, &c)| s.measure().density(z) * c).sum::<f64>()
            * tab.spacing();
        assert!(mean.abs() < 1e-8);
    }
}
