//! Asymptotic option pricing and utility-indifference hedging under fast
//! mean-reverting Ornstein-Uhlenbeck stochastic volatility with small
//! proportional transaction costs.

// `!(x > 0.0)` is how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bs_kernel;
pub mod error;
pub mod expansion;
pub mod figures;
pub mod hedging;
pub mod model;
pub mod ou_calculus;
pub mod quadrature;
pub mod simulator;
pub mod special;
pub mod table;
pub mod verification;

pub use error::{Error, FieldError, Result};
pub use model::{
    discount_factor, validate, Asymptotics, BoundedVol, MarketParams, OUVolModel, Side,
    ValidatedConfig, VolFunction, VolSpec,
};
pub use expansion::{C6Parts, PriceExpansion, Pricer, SourceCoeffs};
pub use hedging::{HedgeBand, HedgeInputs, InnerProfile};
pub use ou_calculus::{build_average_set, AverageSet, OuSolutions};
