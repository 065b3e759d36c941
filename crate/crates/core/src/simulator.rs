//! Monte Carlo of the wealth process `(B, y, S, z)` under a hedging policy
//! with proportional costs `lambda = eps^2`.
//!
//! Trading happens at discrete rebalance dates, moving `y` to the nearest
//! edge of the policy's target interval. Every path draws from its own
//! ChaCha stream `(seed, path index)`, all policies and both sides share the
//! same `(S, z)` path, and statistics are reduced in path order, so results
//! do not depend on the thread count.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs_kernel::greeks;
use crate::error::{Error, FieldError, Result};
use crate::expansion::Pricer;
use crate::model::{Asymptotics, MarketParams, OUVolModel, Side};
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub t: f64,
    /// Bond account, currency.
    pub b: f64,
    /// Shares held.
    pub y: f64,
    pub s: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZScheme {
    /// Exact Gaussian transition of the OU process.
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Keep `y` inside `y* -/+ eps^{1/3} Y+`.
    Band,
    /// Trade back to the Black-Scholes hedge every rebalance date: the
    /// option delta for the writer, no shares for the plain investor.
    BsDelta,
    /// Never trade.
    None,
    /// The band with its half-width multiplied by `kappa`.
    ScaledBand { kappa: f64 },
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Band => write!(f, "band"),
            Policy::BsDelta => write!(f, "bs_delta"),
            Policy::None => write!(f, "none"),
            Policy::ScaledBand { kappa } => write!(f, "scaled_band({kappa})"),
        }
    }
}

/// One step of length `dt`; `y` is left unchanged.
///
/// `S` moves by the exact log-normal step with volatility `f(z)` frozen over
/// the step. `z` takes the same first shock `xi.0`.
pub fn step(
    state: &PathState,
    dt: f64,
    xi: (f64, f64),
    model: &OUVolModel,
    params: &MarketParams,
    asym: &Asymptotics,
    scheme: ZScheme,
) -> PathState {
    let f = model.f(state.z);
    let sq = dt.sqrt();
    let s = state.s * ((params.alpha - 0.5 * f * f) * dt + f * sq * xi.0).exp();
    let shock = model.rho * xi.0 + (1.0 - model.rho * model.rho).max(0.0).sqrt() * xi.1;
    let kappa = asym.mean_reversion_rate();
    let z = match scheme {
        ZScheme::Euler => state.z + kappa * (model.m - state.z) * dt + asym.z_diffusion(model.nu) * sq * shock,
        ZScheme::Exact => {
            let decay = (-kappa * dt).exp();
            let sd = model.nu * (-(-2.0 * kappa * dt).exp_m1()).sqrt();
            model.m + (state.z - model.m) * decay + sd * shock
        }
    };
    PathState {
        t: state.t + dt,
        b: state.b * (params.r * dt).exp(),
        y: state.y,
        s,
        z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    /// Signed number of shares bought.
    pub shares: f64,
    /// Signed cash flow into the bond account.
    pub cash: f64,
}

/// Moves `y` to the nearest of `[lower, upper]`, paying `(1 + lambda) S` per
/// share bought and receiving `(1 - lambda) S` per share sold.
pub fn rebalance(state: &PathState, lower: f64, upper: f64, cost_rate: f64) -> (PathState, Option<Trade>) {
    let (target, price) = if state.y < lower {
        (lower, (1.0 + cost_rate) * state.s)
    } else if state.y > upper {
        (upper, (1.0 - cost_rate) * state.s)
    } else {
        return (*state, None);
    };
    let shares = target - state.y;
    let cash = -shares * price;
    let next = PathState { b: state.b + cash, y: target, ..*state };
    (next, Some(Trade { shares, cash }))
}

/// Liquidation value of `y` shares: sold at `(1 - lambda) S`, a short bought
/// back at `(1 + lambda) S`.
pub fn liquidation(y: f64, s: f64, cost_rate: f64) -> f64 {
    if y >= 0.0 {
        (1.0 - cost_rate) * y * s
    } else {
        (1.0 + cost_rate) * y * s
    }
}

/// Terminal wealth. The writer delivers one share against `K` when
/// `S > K`; `S = K` falls in the unexercised branch.
pub fn terminal_value(side: Side, state: &PathState, params: &MarketParams, cost_rate: f64) -> f64 {
    match side {
        Side::Plain => state.b + liquidation(state.y, state.s, cost_rate),
        Side::Writer => {
            if state.s > params.strike {
                state.b + liquidation(state.y - 1.0, state.s, cost_rate) + params.strike
            } else {
                state.b + liquidation(state.y, state.s, cost_rate)
            }
        }
    }
}

/// Exponential utility `1 - e^{-gamma x}`.
pub fn utility(x: f64, gamma: f64) -> f64 {
    -(-gamma * x).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Rebalance every this many steps.
    pub rebalance_every: usize,
    pub policies: Vec<Policy>,
    pub epsilon: f64,
    pub s0: f64,
    /// Start of `z`; the stationary mean `m` when absent.
    pub z0: Option<f64>,
    pub initial_cash: f64,
    /// Credit the writer with the asymptotic price at `(s0, 0, z0)` on top
    /// of `initial_cash`.
    pub writer_premium: bool,
    pub z_scheme: ZScheme,
    /// Accept `dt > eps/10` under the Euler scheme (with a warning).
    pub allow_coarse_dt: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 600,
            seed: 7,
            rebalance_every: 1,
            policies: vec![Policy::Band, Policy::None],
            epsilon: 1.0 / 200.0,
            s0: 100.0,
            z0: None,
            initial_cash: 0.0,
            writer_premium: true,
            z_scheme: ZScheme::Exact,
            allow_coarse_dt: false,
        }
    }
}

impl SimConfig {
    /// Field checks plus the under-resolution warning.
    pub fn validate(&self, params: &MarketParams) -> Result<Vec<String>> {
        let mut errs = Vec::new();
        if self.n_paths == 0 {
            errs.push(FieldError::new("n_paths", "must be at least 1"));
        }
        if self.n_steps == 0 {
            errs.push(FieldError::new("n_steps", "must be at least 1"));
        }
        if self.rebalance_every == 0 {
            errs.push(FieldError::new("rebalance_every", "must be at least 1"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            errs.push(FieldError::new("epsilon", "must be positive"));
        }
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            errs.push(FieldError::new("s0", "must be positive"));
        }
        for p in &self.policies {
            if let Policy::ScaledBand { kappa } = p {
                if !(*kappa > 0.0) || !kappa.is_finite() {
                    errs.push(FieldError::new("policies", format!("kappa must be positive, got {kappa}")));
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::InvalidConfig(errs));
        }
        let mut warnings = Vec::new();
        let dt = params.expiry / self.n_steps as f64;
        if self.z_scheme == ZScheme::Euler && dt > self.epsilon / 10.0 {
            let msg = format!("dt = {dt:.3e} exceeds eps/10 = {:.3e}: the fast OU is under-resolved", self.epsilon / 10.0);
            if !self.allow_coarse_dt {
                return Err(Error::InvalidConfig(vec![FieldError::new("n_steps", msg)]));
            }
            warnings.push(msg);
        }
        if self.z_scheme == ZScheme::Exact && dt >= self.epsilon / 2.0 {
            warnings.push(format!(
                "dt = {dt:.3e} is not small against eps = {:.3e}; z is exact but f(z) is frozen over each step",
                self.epsilon
            ));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
    pub std_error: f64,
}

impl Stat {
    /// Two-pass statistics in slice order.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let stddev = var.sqrt();
        Self { mean, stddev, std_error: stddev / n.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub policy: Policy,
    pub side: Side,
    pub wealth: Stat,
    pub utility: Stat,
    pub trades: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n_paths: usize,
    pub rows: Vec<SimRow>,
    /// `e^{-rT} S_T`.
    pub discounted_spot: Stat,
    pub terminal_z: Stat,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn row(&self, policy: Policy, side: Side) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.policy == policy && r.side == side)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "policy",
            "side",
            "n_paths",
            "wealth_mean",
            "wealth_stddev",
            "wealth_se",
            "utility_mean",
            "utility_se",
            "trades_mean",
            "trades_se",
        ]);
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.policy.to_string()),
                Cell::from(r.side.as_str()),
                Cell::from(self.n_paths.to_string()),
                r.wealth.mean.into(),
                r.wealth.stddev.into(),
                r.wealth.std_error.into(),
                r.utility.mean.into(),
                r.utility.std_error.into(),
                r.trades.mean.into(),
                r.trades.std_error.into(),
            ]);
        }
        t
    }
}

struct PathOutcome {
    wealth: Vec<f64>,
    trades: Vec<u32>,
    discounted_spot: f64,
    z: f64,
}

/// Simulates `config.n_paths` paths from `t = 0` to `T`.
pub fn run(config: &SimConfig, pricer: &Pricer) -> Result<SimResult> {
    let params = *pricer.params();
    let warnings = config.validate(&params)?;
    let model = pricer.model().clone();
    let asym = Asymptotics::new(config.epsilon)?;
    let lambda = asym.cost_rate();
    let hedge = pricer.hedge();
    let sb = pricer.sigma_bar();
    let dt = params.expiry / config.n_steps as f64;
    let z0 = config.z0.unwrap_or(model.m);
    let premium = if config.writer_premium {
        pricer.price(config.s0, 0.0, z0, config.epsilon)?.total
    } else {
        0.0
    };
    let combos: Vec<(Policy, Side)> = config
        .policies
        .iter()
        .flat_map(|&p| Side::BOTH.into_iter().map(move |s| (p, s)))
        .collect();

    let one_path = |idx: usize| -> Result<PathOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64);
        let start = PathState { t: 0.0, b: config.initial_cash, y: 0.0, s: config.s0, z: z0 };
        let mut states: Vec<PathState> = combos
            .iter()
            .map(|&(_, side)| match side {
                Side::Plain => start,
                Side::Writer => PathState { b: start.b + premium, ..start },
            })
            .collect();
        let mut trades = vec![0u32; combos.len()];
        let mut market = start;
        for k in 0..config.n_steps {
            if k % config.rebalance_every == 0 {
                let t = k as f64 * dt;
                let tau = params.expiry - t;
                for (c, &(policy, side)) in combos.iter().enumerate() {
                    let st = PathState { t, s: market.s, z: market.z, ..states[c] };
                    let (lo, hi) = match policy {
                        Policy::None => (f64::NEG_INFINITY, f64::INFINITY),
                        Policy::BsDelta => {
                            let target = match side {
                                Side::Plain => 0.0,
                                Side::Writer => greeks(market.s, tau, sb, params.r, params.strike, 1).delta(),
                            };
                            (target, target)
                        }
                        Policy::Band => {
                            let b = hedge.band(side, market.s, t, market.z, config.epsilon)?;
                            (b.lower, b.upper)
                        }
                        Policy::ScaledBand { kappa } => {
                            let b = hedge.band(side, market.s, t, market.z, config.epsilon)?;
                            (b.y_star - kappa * b.half_width, b.y_star + kappa * b.half_width)
                        }
                    };
                    let (next, trade) = rebalance(&st, lo, hi, lambda);
                    trades[c] += trade.is_some() as u32;
                    states[c] = next;
                }
            }
            let xi: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let next = step(&market, dt, xi, &model, &params, &asym, config.z_scheme);
            let growth = (params.r * dt).exp();
            for st in states.iter_mut() {
                st.b *= growth;
            }
            market = next;
        }
        for st in states.iter_mut() {
            st.t = params.expiry;
            st.s = market.s;
            st.z = market.z;
        }
        if !market.s.is_finite() || !market.z.is_finite() {
            return Err(Error::Simulation(format!("path {idx} left the finite range")));
        }
        Ok(PathOutcome {
            wealth: combos
                .iter()
                .zip(&states)
                .map(|(&(_, side), st)| terminal_value(side, st, &params, lambda))
                .collect(),
            trades,
            discounted_spot: (-params.r * params.expiry).exp() * market.s,
            z: market.z,
        })
    };

    let outcomes: Vec<PathOutcome> = (0..config.n_paths).into_par_iter().map(one_path).collect::<Result<_>>()?;

    let gamma = params.gamma;
    let rows = combos
        .iter()
        .enumerate()
        .map(|(c, &(policy, side))| {
            let w: Vec<f64> = outcomes.iter().map(|o| o.wealth[c]).collect();
            let u: Vec<f64> = w.iter().map(|&x| utility(x, gamma)).collect();
            let n: Vec<f64> = outcomes.iter().map(|o| o.trades[c] as f64).collect();
            SimRow { policy, side, wealth: Stat::of(&w), utility: Stat::of(&u), trades: Stat::of(&n) }
        })
        .collect();
    let ds: Vec<f64> = outcomes.iter().map(|o| o.discounted_spot).collect();
    let zs: Vec<f64> = outcomes.iter().map(|o| o.z).collect();
    Ok(SimResult {
        n_paths: config.n_paths,
        rows,
        discounted_spot: Stat::of(&ds),
        terminal_z: Stat::of(&zs),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3(rho: f64) -> Pricer {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        Pricer::new(p, OUVolModel::scott_with_sigma_bar(0.165, 0.4, rho)).unwrap()
    }

    #[test]
    fn rebalance_accounting() {
        let st = PathState { t: 0.0, b: 10.0, y: 0.5, s: 100.0, z: 0.0 };
        assert_eq!(rebalance(&st, 0.2, 0.8, 0.01).0, st);
        let (up, tr) = rebalance(&PathState { y: 0.8 + 0.1, ..st }, 0.2, 0.8, 0.01);
        assert_eq!(up.y, 0.8);
        assert!((up.b - (10.0 + 0.99 * 100.0 * 0.1)).abs() < 1e-12);
        assert!(tr.unwrap().shares < 0.0);
        let (dn, _) = rebalance(&PathState { y: 0.0, ..st }, 0.2, 0.8, 0.01);
        assert!((dn.b - (10.0 - 1.01 * 100.0 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn terminal_conventions() {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        let st = PathState { t: 3.0, b: 5.0, y: 1.0, s: 100.0, z: 0.0 };
        // S = K falls in the unexercised branch
        assert_eq!(terminal_value(Side::Writer, &st, &p, 0.0), 105.0);
        let itm = PathState { s: 120.0, ..st };
        assert_eq!(terminal_value(Side::Writer, &itm, &p, 0.01), 105.0);
        assert!((liquidation(-1.0, 100.0, 0.01) + 101.0).abs() < 1e-12);
        assert_eq!(utility(0.0, 2.0), 0.0);
        assert!((utility(50.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_correlation_moves_together() {
        let p = MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0);
        let asym = Asymptotics::new(0.005).unwrap();
        for rho in [1.0, -1.0] {
            let m = OUVolModel::scott(-1.8, 0.5, rho);
            let st = PathState { t: 0.0, b: 0.0, y: 0.0, s: 100.0, z: -1.8 };
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let n = 20_000;
            for _ in 0..n {
                let xi = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let nx = step(&st, 1e-4, xi, &m, &p, &asym, ZScheme::Exact);
                let (a, b) = ((nx.s / st.s).ln(), nx.z - st.z);
                sx += a;
                sy += b;
                sxx += a * a;
                syy += b * b;
                sxy += a * b;
            }
            let nf = n as f64;
            let cov = sxy / nf - sx * sy / (nf * nf);
            let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
            assert!((corr - rho).abs() < 1e-6, "{corr}");
        }
    }

    #[test]
    fn stationary_variance_of_z() {
        // long run at m = 0, nu = 0.5, eps = 1/200
        let p = MarketParams::new(0.04, 0.04, 1.0, 100.0, 1.0);
        let m = OUVolModel::scott(0.0, 0.5, 0.0);
        let pr = Pricer::new(p, m).unwrap();
        let cfg = SimConfig { n_paths: 4000, n_steps: 200, policies: vec![], ..Default::default() };
        let res = run(&cfg, &pr).unwrap();
        let var = res.terminal_z.stddev.powi(2);
        // standard error of a sample variance of Gaussians: var sqrt(2/(n-1))
        let se = 0.25 * (2.0 / 3999.0f64).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn determinism_and_band_membership() {
        let pr = fig3(-0.2);
        let cfg = SimConfig { n_paths: 200, n_steps: 60, ..Default::default() };
        let a = run(&cfg, &pr).unwrap();
        let b = run(&cfg, &pr).unwrap();
        assert_eq!(a, b);
        assert!(a.warnings.iter().any(|w| w.contains("frozen")));
        let none = a.row(Policy::None, Side::Writer).unwrap();
        assert_eq!(none.trades.mean, 0.0);
    }

    #[test]
    fn post_rebalance_inside_band() {
        let pr = fig3(0.0);
        let h = pr.hedge();
        let st = PathState { t: 0.0, b: 0.0, y: 3.0, s: 90.0, z: pr.model().m };
        let band = h.band(Side::Writer, 90.0, 0.0, st.z, 0.005).unwrap();
        let (next, _) = rebalance(&st, band.lower, band.upper, 2.5e-5);
        assert!(next.y >= band.lower && next.y <= band.upper);
    }

    #[test]
    fn bad_config_reports_fields() {
        let pr = fig3(0.0);
        let cfg = SimConfig { n_paths: 0, policies: vec![Policy::ScaledBand { kappa: -1.0 }], ..Default::default() };
        match run(&cfg, &pr) {
            Err(Error::InvalidConfig(f)) => assert_eq!(f.len(), 2),
            other => panic!("{other:?}"),
        }
        let euler = SimConfig { z_scheme: ZScheme::Euler, n_steps: 100, ..Default::default() };
        assert!(run(&euler, &pr).is_err());
    }

    #[test]
    fn discounted_spot_is_a_martingale() {
        let p = MarketParams::new(0.04, 0.04, 1.0, 100.0, 1.0);
        let pr = Pricer::new(p, OUVolModel::scott_with_sigma_bar(0.2, 0.0, 0.0)).unwrap();
        let cfg = SimConfig { n_paths: 100_000, n_steps: 4, policies: vec![], ..Default::default() };
        let res = run(&cfg, &pr).unwrap();
        let d = res.discounted_spot;
        assert!((d.mean - 100.0).abs() <= 3.0 * d.std_error, "{d:?}");
    }

    #[test]
    fn standard_error_halves_with_four_times_the_paths() {
        let pr = fig3(0.0);
        let base = SimConfig { n_steps: 20, policies: vec![Policy::None], ..Default::default() };
        let a = run(&SimConfig { n_paths: 2000, ..base.clone() }, &pr).unwrap();
        let b = run(&SimConfig { n_paths: 8000, ..base }, &pr).unwrap();
        let ratio = a.discounted_spot.std_error / b.discounted_spot.std_error;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }
}
