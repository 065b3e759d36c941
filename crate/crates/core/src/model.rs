//! Market data, the OU-driven volatility model and the small-parameter scalings.
//!
//! The asset follows `dS = alpha S dt + f(Z) S dW`, with the volatility
//! driver `dZ = (m - Z)/eps dt + sqrt(2) nu / sqrt(eps) dW'`. Proportional
//! transaction costs are `eps^2`. The invariant law of `Z` is `N(m, nu^2)`
//! for every `eps`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, FieldError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(alias = "K")]
    pub strike: f64,
    #[serde(alias = "T")]
    pub expiry: f64,
}

impl MarketParams {
    pub fn new(r: f64, alpha: f64, gamma: f64, strike: f64, expiry: f64) -> Self {
        Self {
            r,
            alpha,
            gamma,
            strike,
            expiry,
        }
    }

    /// `alpha - r`.
    pub fn excess_return(&self) -> f64 {
        self.alpha - self.r
    }

    pub(crate) fn discount(&self, tau: f64) -> f64 {
        (-self.r * tau).exp()
    }

    fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("r", self.r),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("strike", self.strike),
            ("expiry", self.expiry),
        ] {
            if !v.is_finite() {
                errs.push(FieldError::new(name, "must be finite"));
            }
        }
        if !(self.gamma > 0.0) {
            errs.push(FieldError::new("gamma", "gamma must be positive"));
        }
        if !(self.strike > 0.0) {
            errs.push(FieldError::new("strike", "strike must be positive"));
        }
        if !(self.expiry > 0.0) {
            errs.push(FieldError::new("expiry", "expiry must be positive"));
        }
        errs
    }
}

/// `delta(t) = exp(-r (T - t))`.
pub fn discount_factor(t: f64, params: &MarketParams) -> Result<f64> {
    if !t.is_finite() || t > params.expiry {
        return domain(format!("t = {t} lies beyond expiry {}", params.expiry));
    }
    Ok(params.discount(params.expiry - t))
}

/// Bounded volatility function supplied by the caller.
#[derive(Clone)]
pub struct BoundedVol {
    name: String,
    lower: f64,
    upper: f64,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl BoundedVol {
    pub fn new(
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        func: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            func: Arc::new(func),
        }
    }

    /// `f(z) = m1 + (m2 - m1) (1 + tanh z) / 2`.
    pub fn tanh(m1: f64, m2: f64) -> Self {
        Self::new("tanh", m1, m2, move |z: f64| {
            m1 + (m2 - m1) * 0.5 * (1.0 + z.tanh())
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

impl fmt::Debug for BoundedVol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedVol")
            .field("name", &self.name)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum VolFunction {
    /// `f(z) = e^z`.
    Scott,
    Bounded(BoundedVol),
}

impl VolFunction {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            VolFunction::Scott => z.exp(),
            VolFunction::Bounded(b) => (b.func)(z),
        }
    }

    pub fn is_scott(&self) -> bool {
        matches!(self, VolFunction::Scott)
    }
}

/// Serializable description of a volatility function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolSpec {
    #[default]
    Scott,
    Tanh { m1: f64, m2: f64 },
}

impl VolSpec {
    pub fn build(&self) -> VolFunction {
        match *self {
            VolSpec::Scott => VolFunction::Scott,
            VolSpec::Tanh { m1, m2 } => VolFunction::Bounded(BoundedVol::tanh(m1, m2)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OUVolModel {
    pub m: f64,
    pub nu: f64,
    pub rho: f64,
    pub vol: VolFunction,
}

impl OUVolModel {
    pub fn new(m: f64, nu: f64, rho: f64, vol: VolFunction) -> Self {
        Self { m, nu, rho, vol }
    }

    pub fn scott(m: f64, nu: f64, rho: f64) -> Self {
        Self::new(m, nu, rho, VolFunction::Scott)
    }

    /// Scott model whose effective volatility `sqrt(<e^{2z}>)` equals `sigma_bar`.
    pub fn scott_with_sigma_bar(sigma_bar: f64, nu: f64, rho: f64) -> Self {
        Self::scott(sigma_bar.ln() - nu * nu, nu, rho)
    }

    #[inline]
    pub fn f(&self, z: f64) -> f64 {
        self.vol.eval(z)
    }

    fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if !self.m.is_finite() {
            errs.push(FieldError::new("m", "must be finite"));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            errs.push(FieldError::new("nu", "nu must be finite and non-negative"));
        }
        if !(self.rho.abs() <= 1.0) {
            errs.push(FieldError::new("rho", "rho out of range [-1, 1]"));
        }
        if let VolFunction::Bounded(b) = &self.vol {
            if !(b.lower > 0.0) || !(b.lower <= b.upper) || !b.upper.is_finite() {
                errs.push(FieldError::new(
                    "vol",
                    "bounds must satisfy 0 < lower <= upper < inf",
                ));
            } else if errs.is_empty() {
                let span = 8.0 * self.nu.max(1.0);
                for i in 0..=400 {
                    let z = self.m - span + 2.0 * span * i as f64 / 400.0;
                    let v = self.f(z);
                    let slack = 1e-12 * b.upper;
                    if !(v >= b.lower - slack && v <= b.upper + slack) {
                        errs.push(FieldError::new(
                            "vol",
                            format!("f({z}) = {v} outside declared bounds [{}, {}]", b.lower, b.upper),
                        ));
                        break;
                    }
                }
            }
        }
        errs
    }
}

/// Scalings tied to the single small parameter `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotics {
    pub epsilon: f64,
}

impl Asymptotics {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(vec![FieldError::new(
                "epsilon",
                "epsilon must be positive",
            )]));
        }
        Ok(Self { epsilon })
    }

    /// Proportional cost rate `lambda = eps^2`.
    pub fn cost_rate(&self) -> f64 {
        self.epsilon * self.epsilon
    }

    /// Mean-reversion speed `1/eps`.
    pub fn mean_reversion_rate(&self) -> f64 {
        1.0 / self.epsilon
    }

    /// Diffusion coefficient of `Z`: `sqrt(2) nu / sqrt(eps)`.
    pub fn z_diffusion(&self, nu: f64) -> f64 {
        std::f64::consts::SQRT_2 * nu / self.epsilon.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub market: MarketParams,
    pub model: OUVolModel,
    pub asym: Asymptotics,
    pub warnings: Vec<String>,
}

/// Checks every invariant and reports all violations at once.
pub fn validate(
    market: &MarketParams,
    model: &OUVolModel,
    epsilon: f64,
) -> Result<ValidatedConfig> {
    let mut errs = market.field_errors();
    errs.extend(model.field_errors());
    // eps = 0 is the collapse to Black-Scholes and stays admissible here
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        errs.push(FieldError::new("epsilon", "epsilon must be finite and non-negative"));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs));
    }
    let mut warnings = Vec::new();
    if model.vol.is_scott() {
        warnings.push(
            "Scott volatility e^z is unbounded; the expansion is formal for this model".to_string(),
        );
    }
    Ok(ValidatedConfig {
        market: *market,
        model: model.clone(),
        asym: Asymptotics { epsilon },
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// No option position.
    Plain,
    /// Short one call.
    Writer,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plain, Side::Writer];

    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Plain => "plain",
            Side::Writer => "writer",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> MarketParams {
        MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0)
    }

    #[test]
    fn discount_values() {
        assert!((discount_factor(0.0, &fig3()).unwrap() - 0.886920436717).abs() < 1e-11);
        let p = MarketParams::new(0.07, 0.1, 1.0, 0.5, 0.3);
        assert!((discount_factor(0.0, &p).unwrap() - 0.979218964569).abs() < 1e-11);
        assert_eq!(discount_factor(3.0, &fig3()).unwrap(), 1.0);
        assert!(discount_factor(3.5, &fig3()).is_err());
    }

    #[test]
    fn validation_reports_every_field() {
        let mut p = fig3();
        p.gamma = -1.0;
        let model = OUVolModel::scott(0.0, 0.5, 1.5);
        let err = validate(&p, &model, 0.01).unwrap_err();
        match err {
            Error::InvalidConfig(v) => {
                assert!(v.iter().any(|e| e.field == "gamma" && e.message.contains("positive")));
                assert!(v.iter().any(|e| e.field == "rho" && e.message.contains("out of range")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scott_warns() {
        let cfg = validate(&fig3(), &OUVolModel::scott(0.0, 0.5, 0.0), 0.01).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        let bounded = OUVolModel::new(0.0, 0.5, 0.0, VolSpec::Tanh { m1: 0.1, m2: 0.4 }.build());
        assert!(validate(&fig3(), &bounded, 0.01).unwrap().warnings.is_empty());
    }

    #[test]
    fn bounds_are_checked() {
        let liar = BoundedVol::new("liar", 0.1, 0.2, |z: f64| 0.15 + z);
        let model = OUVolModel::new(0.0, 0.5, 0.0, VolFunction::Bounded(liar));
        assert!(validate(&fig3(), &model, 0.01).is_err());
    }

    #[test]
    fn scalings() {
        let a = Asymptotics::new(0.01).unwrap();
        assert!((a.cost_rate() - 1e-4).abs() < 1e-18);
        assert!((a.mean_reversion_rate() - 100.0).abs() < 1e-12);
        assert!((a.z_diffusion(0.5) - 0.5 * 2f64.sqrt() * 10.0).abs() < 1e-12);
        assert!(Asymptotics::new(0.0).is_err());
    }

    #[test]
    fn sigma_bar_parametrisation() {
        let m = OUVolModel::scott_with_sigma_bar(0.2, 0.5, 0.0);
        let sb2 = (2.0 * m.m + 2.0 * m.nu * m.nu).exp();
        assert!((sb2.sqrt() - 0.2).abs() < 1e-15);
    }
}
