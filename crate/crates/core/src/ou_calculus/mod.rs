//! Averages against the invariant law of the volatility driver and the
//! centered Poisson problems `L0 chi = s - <s>` built on it.
//!
//! `L0 u = (m - z) u_z + nu^2 u_zz` is the generator of the unit-speed OU
//! process with invariant density `N(m, nu^2)`. For a centered source the
//! solution with at most polynomial growth has
//!
//! ```text
//! chi'(z) = 1 / (nu^2 p(z)) * int_{-inf}^{z} s(u) p(u) du
//!         = -1 / (nu^2 p(z)) * int_{z}^{inf} s(u) p(u) du
//! ```
//!
//! and is fixed by the gauge `<chi> = 0`. The left form is used below the
//! mean and the right form above it, so neither tail suffers cancellation.

mod averages;
mod poisson;

pub use averages::{build_average_set, scott_closed_form, AverageSet, OuSolutions};
pub use poisson::{PoissonSolution, PoissonSolver, PoissonSource, SourceId, SOLVABILITY_TOL};

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::OUVolModel;
use crate::quadrature::GaussHermite;
use crate::special::INV_SQRT_2PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantMeasure {
    pub m: f64,
    pub nu: f64,
}

impl InvariantMeasure {
    pub fn new(m: f64, nu: f64) -> Self {
        Self { m, nu }
    }

    pub fn of(model: &OUVolModel) -> Self {
        Self::new(model.m, model.nu)
    }

    pub fn density(&self, z: f64) -> f64 {
        let x = (z - self.m) / self.nu;
        INV_SQRT_2PI * (-0.5 * x * x).exp() / self.nu
    }

    /// Image of a Gauss-Hermite node.
    #[inline]
    pub fn node(&self, x: f64) -> f64 {
        self.m + SQRT_2 * self.nu * x
    }
}

/// `<g>` with the shared 96-node rule.
pub fn average(g: impl FnMut(f64) -> f64, meas: &InvariantMeasure) -> Result<f64> {
    average_with(g, meas, &GaussHermite::standard())
}

/// `<g>` with a caller-supplied rule. A point mass at `m` when `nu = 0`.
pub fn average_with(
    mut g: impl FnMut(f64) -> f64,
    meas: &InvariantMeasure,
    rule: &GaussHermite,
) -> Result<f64> {
    if meas.nu == 0.0 {
        let v = g(meas.m);
        return finite(v, meas.m);
    }
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let z = meas.node(x);
        let v = g(z);
        finite(v, z)?;
        acc += w * v;
    }
    Ok(acc / PI.sqrt())
}

fn finite(v: f64, z: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { node: z, value: v })
    }
}

/// Gaussian exponential moment `<e^{kz}> = exp(k m + k^2 nu^2 / 2)`.
#[inline]
pub fn exp_moment(k: f64, m: f64, nu: f64) -> f64 {
    (k * m + 0.5 * k * k * nu * nu).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_basics() {
        let meas = InvariantMeasure::new(0.3, 0.7);
        assert!((average(|_| 1.0, &meas).unwrap() - 1.0).abs() < 1e-14);
        assert!((average(|z| z, &meas).unwrap() - 0.3).abs() < 1e-14);
        let var = average(|z| (z - 0.3).powi(2), &meas).unwrap();
        assert!((var - 0.49).abs() < 1e-14);
        let e2 = average(|z| (2.0 * z).exp(), &meas).unwrap();
        assert!((e2 / exp_moment(2.0, 0.3, 0.7) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_measure_is_point_mass() {
        let meas = InvariantMeasure::new(-1.0, 0.0);
        assert_eq!(average(|z| z * z, &meas).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_is_reported() {
        let meas = InvariantMeasure::new(0.0, 1.0);
        let err = average(|z| if z > 3.0 { f64::NAN } else { 0.0 }, &meas).unwrap_err();
        assert!(matches!(err, Error::NonFinite { node, .. } if node > 3.0));
    }
}
