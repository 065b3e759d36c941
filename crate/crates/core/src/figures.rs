//! Plot data for the band and price figures, plus the qualitative gates the
//! curves must pass.
//!
//! Axis ranges and the volatility levels are choices made here; the
//! published figures do not carry readable axes.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::expansion::Pricer;
use crate::model::{MarketParams, OUVolModel, Side};
use crate::table::Table;
use crate::verification::grid::uniform_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureSet {
    /// No-transaction band of the plain investor.
    Fig1,
    /// No-transaction band of the option writer.
    Fig2,
    /// Price with the first corrections, at `rho = 0` and `rho = -0.2`.
    Fig3,
}

impl FigureSet {
    pub const ALL: [FigureSet; 3] = [FigureSet::Fig1, FigureSet::Fig2, FigureSet::Fig3];

    pub fn name(&self) -> &'static str {
        match self {
            FigureSet::Fig1 => "fig1",
            FigureSet::Fig2 => "fig2",
            FigureSet::Fig3 => "fig3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Market of the band figures: `K = 0.5`, `r = 0.07`, `alpha = 0.1`,
/// `gamma = 1`, three months and a bit to expiry.
pub fn band_market() -> MarketParams {
    MarketParams::new(0.07, 0.1, 1.0, 0.5, 0.3)
}

pub const BAND_SIGMA_BAR: f64 = 0.2;

/// Market of the price figure.
pub fn price_market() -> MarketParams {
    MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0)
}

pub const PRICE_SIGMA_BAR: f64 = 0.165;
pub const PRICE_RHOS: [f64; 2] = [0.0, -0.2];
pub const FIGURE_EPSILON: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureConfig {
    /// Vol-of-vol; not fixed by the published parameter sets.
    pub nu: f64,
    /// OU mean; `ln sigma_bar - nu^2` when absent.
    pub m: Option<f64>,
    pub epsilon: f64,
    pub band_s_range: (f64, f64),
    pub price_s_range: (f64, f64),
    pub n_s: usize,
    /// `e^z` levels for the band figures.
    pub vol_levels: Vec<f64>,
    /// `z` at which `C6_z` is evaluated in the price figure; `m` when absent.
    pub z: Option<f64>,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            nu: 0.4,
            m: None,
            epsilon: FIGURE_EPSILON,
            band_s_range: (0.01, 1.5),
            price_s_range: (50.0, 150.0),
            n_s: 101,
            vol_levels: (1..=12).map(|k| 0.05 * k as f64).collect(),
            z: None,
        }
    }
}

impl FigureConfig {
    fn model(&self, sigma_bar: f64, rho: f64) -> OUVolModel {
        match self.m {
            Some(m) => OUVolModel::scott(m, self.nu, rho),
            None => OUVolModel::scott_with_sigma_bar(sigma_bar, self.nu, rho),
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_s < 2 {
            return domain("n_s must be at least 2");
        }
        if self.vol_levels.iter().any(|v| !(*v > 0.0)) {
            return domain("volatility levels must be positive");
        }
        Ok(())
    }
}

/// One CSV worth of plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    /// File stem, e.g. `fig3_rho_-0.2`.
    pub name: String,
    pub table: Table,
}

/// Band curves in long format: `S, vol, y_star, lower, upper`.
pub fn band_figure(side: Side, cfg: &FigureConfig) -> Result<Figure> {
    cfg.check()?;
    let pricer = Pricer::new(band_market(), cfg.model(BAND_SIGMA_BAR, 0.0))?;
    let hedge = pricer.hedge();
    let s_axis = uniform_grid(cfg.band_s_range.0, cfg.band_s_range.1, cfg.n_s);
    let mut table = Table::new(&["S", "vol", "y_star", "lower", "upper"]);
    for &vol in &cfg.vol_levels {
        let z = vol.ln();
        for &s in &s_axis {
            let b = hedge.band(side, s, 0.0, z, cfg.epsilon)?;
            table.push(vec![s.into(), vol.into(), b.y_star.into(), b.lower.into(), b.upper.into()]);
        }
    }
    let name = match side {
        Side::Plain => "fig1",
        Side::Writer => "fig2",
    };
    Ok(Figure { name: name.into(), table })
}

/// `S, C_BS, C_with_C3, C_with_C3_and_C6` at `t = 0`.
pub fn price_figure(rho: f64, cfg: &FigureConfig) -> Result<Figure> {
    cfg.check()?;
    let pricer = Pricer::new(price_market(), cfg.model(PRICE_SIGMA_BAR, rho))?;
    let z = cfg.z.unwrap_or(pricer.model().m);
    let s_axis = uniform_grid(cfg.price_s_range.0, cfg.price_s_range.1, cfg.n_s);
    let mut table = Table::new(&["S", "C_BS", "C_with_C3", "C_with_C3_and_C6"]);
    let se = cfg.epsilon.sqrt();
    for &s in &s_axis {
        let p = pricer.price(s, 0.0, z, cfg.epsilon)?;
        let with_c3 = p.c0 + se * p.c3;
        table.push(vec![s.into(), p.c0.into(), with_c3.into(), p.total.into()]);
    }
    Ok(Figure { name: format!("fig3_rho_{rho}"), table })
}

pub fn generate(set: FigureSet, cfg: &FigureConfig) -> Result<Vec<Figure>> {
    match set {
        FigureSet::Fig1 => Ok(vec![band_figure(Side::Plain, cfg)?]),
        FigureSet::Fig2 => Ok(vec![band_figure(Side::Writer, cfg)?]),
        FigureSet::Fig3 => PRICE_RHOS.iter().map(|&rho| price_figure(rho, cfg)).collect(),
    }
}

/// Outcome of a qualitative check on a figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub figure: String,
    pub passed: bool,
    pub detail: String,
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name)
        .map(|c| c.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .unwrap_or_default()
}

/// Positive width at every node, and `y_star`, `lower`, `upper` strictly
/// decreasing in `S` at every volatility level.
pub fn band_gate(fig: &Figure) -> Gate {
    let (s, vol, ys, lo, hi) = (
        col(&fig.table, "S"),
        col(&fig.table, "vol"),
        col(&fig.table, "y_star"),
        col(&fig.table, "lower"),
        col(&fig.table, "upper"),
    );
    let mut bad_width = 0;
    let mut bad_mono = 0;
    for i in 0..s.len() {
        if !(hi[i] > lo[i]) {
            bad_width += 1;
        }
        if i > 0 && vol[i] == vol[i - 1] {
            for c in [&ys, &lo, &hi] {
                if !(c[i] < c[i - 1]) {
                    bad_mono += 1;
                }
            }
        }
    }
    let min_width = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    Gate {
        figure: fig.name.clone(),
        passed: bad_width == 0 && bad_mono == 0 && !s.is_empty(),
        detail: format!(
            "{} nodes, min width {min_width:.3e}, {bad_width} non-positive widths, {bad_mono} non-decreasing steps",
            s.len()
        ),
    }
}

/// Sizes of the corrections in a price figure, in units of `sqrt(eps)` and
/// `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSizes {
    /// `max |C_with_C3 - C_BS|`.
    pub c3_part: f64,
    /// `max |C_with_C3_and_C6 - C_with_C3|`.
    pub c6_part: f64,
    /// Signed values at the node closest to the strike.
    pub c3_part_atm: f64,
    pub c6_part_atm: f64,
}

pub fn correction_sizes(fig: &Figure, strike: f64) -> CorrectionSizes {
    let (s, bs, c3, c6) = (
        col(&fig.table, "S"),
        col(&fig.table, "C_BS"),
        col(&fig.table, "C_with_C3"),
        col(&fig.table, "C_with_C3_and_C6"),
    );
    let atm = (0..s.len())
        .min_by(|&a, &b| (s[a] - strike).abs().total_cmp(&(s[b] - strike).abs()))
        .unwrap_or(0);
    let max = |v: Vec<f64>| v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()));
    CorrectionSizes {
        c3_part: max(c3.iter().zip(&bs).map(|(a, b)| a - b).collect()),
        c6_part: max(c6.iter().zip(&c3).map(|(a, b)| a - b).collect()),
        c3_part_atm: c3.get(atm).zip(bs.get(atm)).map_or(f64::NAN, |(a, b)| a - b),
        c6_part_atm: c6.get(atm).zip(c3.get(atm)).map_or(f64::NAN, |(a, b)| a - b),
    }
}

/// At `rho = 0` the `sqrt(eps)` part vanishes identically and the total
/// moves by an `eps`-scale amount; at `rho != 0` the `sqrt(eps)` part is
/// present.
///
/// "Scale" means the coefficient of `eps` (or `sqrt(eps)`) is nonzero and
/// at most `strike`; signs and sizes are reported, not matched to a curve.
pub fn price_gate(fig: &Figure, rho: f64, epsilon: f64, strike: f64) -> Gate {
    let c = correction_sizes(fig, strike);
    let c6_coeff = c.c6_part / epsilon;
    let c3_coeff = c.c3_part / epsilon.sqrt();
    let eps_scale = c6_coeff > 0.0 && c6_coeff <= strike;
    let passed = if rho == 0.0 {
        c.c3_part == 0.0 && eps_scale
    } else {
        eps_scale && c3_coeff > 0.0 && c3_coeff <= strike
    };
    Gate {
        figure: fig.name.clone(),
        passed,
        detail: format!(
            "rho={rho}: max|sqrt(eps) C3| = {:.4e} (ATM {:+.4e}), max|eps C6| = {:.4e} (ATM {:+.4e})",
            c.c3_part, c.c3_part_atm, c.c6_part, c.c6_part_atm
        ),
    }
}

/// Runs every gate on a full figure bundle.
pub fn gates(figs: &[Figure], cfg: &FigureConfig) -> Vec<Gate> {
    let strike = price_market().strike;
    figs.iter()
        .filter_map(|f| {
            if f.name == "fig1" {
                Some(band_gate(f))
            } else if let Some(rho) = f.name.strip_prefix("fig3_rho_") {
                rho.parse().ok().map(|rho| price_gate(f, rho, cfg.epsilon, strike))
            } else {
                // the writer band oscillates at small S; no gate
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FigureConfig {
        FigureConfig { n_s: 21, vol_levels: vec![0.1, 0.3], ..Default::default() }
    }

    #[test]
    fn plain_band_gate_passes() {
        let f = band_figure(Side::Plain, &small()).unwrap();
        assert_eq!(f.table.rows.len(), 42);
        let g = band_gate(&f);
        assert!(g.passed, "{}", g.detail);
    }

    #[test]
    fn price_figure_gates() {
        let cfg = FigureConfig { n_s: 11, ..Default::default() };
        for rho in PRICE_RHOS {
            let f = price_figure(rho, &cfg).unwrap();
            let g = price_gate(&f, rho, cfg.epsilon, 100.0);
            assert!(g.passed, "{}", g.detail);
        }
    }

    #[test]
    fn set_names_round_trip() {
        for s in FigureSet::ALL {
            assert_eq!(FigureSet::parse(s.name()), Some(s));
        }
    }
}
