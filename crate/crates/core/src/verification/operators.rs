//! Three-point finite-difference versions of the operators of the expansion,
//! valid on non-uniform axes.

use crate::error::{Error, Result};
use crate::model::{MarketParams, OUVolModel};

use super::grid::{GridFunction1D, GridFunction2D, ResidualReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    /// `(m - z) u_z + nu^2 u_zz` on a `z` grid.
    L0,
    /// `-nu sqrt2 rho ((alpha - r)/f) u_z + nu sqrt2 rho f S u_Sz` on an `(S, z)` grid.
    L1,
    /// `u_t + f(z)^2 S^2 u_SS / 2 + r S u_S - r u` on an `(S, t)` grid.
    L2 { z: f64 },
    /// `L2` with `f^2` replaced by `sigma_bar^2`.
    L2Averaged { sigma_bar: f64 },
    /// `-nu^2 (gamma/delta(t)) u_z^2` on a `z` grid.
    NL { t: f64 },
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::L0 => "L0",
            Operator::L1 => "L1",
            Operator::L2 { .. } => "L2",
            Operator::L2Averaged { .. } => "L2_averaged",
            Operator::NL { .. } => "NL",
        }
    }

    fn is_1d(&self) -> bool {
        matches!(self, Operator::L0 | Operator::NL { .. })
    }
}

/// Weights of `u'` and `u''` at `x0` from values at `x0 - hm`, `x0`, `x0 + hp`.
fn stencils(hm: f64, hp: f64) -> ([f64; 3], [f64; 3]) {
    let s = hm + hp;
    let d1 = [-hp / (hm * s), (hp - hm) / (hm * hp), hm / (hp * s)];
    let d2 = [2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s)];
    (d1, d2)
}

fn dot(w: &[f64; 3], a: f64, b: f64, c: f64) -> f64 {
    w[0] * a + w[1] * b + w[2] * c
}

fn shape_err<T>(op: Operator, dims: &str) -> Result<T> {
    Err(Error::Shape(format!("{} cannot act on a {dims} grid", op.name())))
}

/// Applies a `z`-only operator; the result lives on the interior nodes.
pub fn apply_1d(u: &GridFunction1D, op: Operator, model: &OUVolModel, params: &MarketParams) -> Result<GridFunction1D> {
    if !op.is_1d() {
        return shape_err(op, "one-dimensional");
    }
    if u.len() < 3 {
        return Err(Error::Shape("need at least three nodes".into()));
    }
    let (m, nu) = (model.m, model.nu);
    let n = u.len();
    let mut axis = Vec::with_capacity(n - 2);
    let mut values = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let z = u.axis[i];
        let (d1, d2) = stencils(z - u.axis[i - 1], u.axis[i + 1] - z);
        let (a, b, c) = (u.values[i - 1], u.values[i], u.values[i + 1]);
        let uz = dot(&d1, a, b, c);
        let v = match op {
            Operator::L0 => (m - z) * uz + nu * nu * dot(&d2, a, b, c),
            Operator::NL { t } => {
                let delta = params.discount(params.expiry - t);
                -nu * nu * params.gamma / delta * uz * uz
            }
            _ => unreachable!(),
        };
        axis.push(z);
        values.push(v);
    }
    GridFunction1D::new(axis, values)
}

/// Applies an `(S, z)` or `(S, t)` operator; the result lives on interior nodes.
pub fn apply_2d(u: &GridFunction2D, op: Operator, model: &OUVolModel, params: &MarketParams) -> Result<GridFunction2D> {
    if op.is_1d() {
        return shape_err(op, "two-dimensional");
    }
    let (nx, ny) = u.shape();
    if nx < 3 || ny < 3 {
        return Err(Error::Shape("need at least three nodes per axis".into()));
    }
    let (r, ar) = (params.r, params.excess_return());
    let k = model.nu * std::f64::consts::SQRT_2 * model.rho;
    let mut values = Vec::with_capacity((nx - 2) * (ny - 2));
    for i in 1..nx - 1 {
        let s = u.x[i];
        let (sx1, sx2) = stencils(s - u.x[i - 1], u.x[i + 1] - s);
        for j in 1..ny - 1 {
            let y = u.y[j];
            let (sy1, _) = stencils(y - u.y[j - 1], u.y[j + 1] - y);
            let row = |jj: usize| (u.get(i - 1, jj), u.get(i, jj), u.get(i + 1, jj));
            let (a, b, c) = row(j);
            let us = dot(&sx1, a, b, c);
            let uss = dot(&sx2, a, b, c);
            let uy = dot(&sy1, u.get(i, j - 1), b, u.get(i, j + 1));
            let v = match op {
                Operator::L1 => {
                    let f = model.f(y);
                    let (lo, hi) = (row(j - 1), row(j + 1));
                    let us_lo = dot(&sx1, lo.0, lo.1, lo.2);
                    let us_hi = dot(&sx1, hi.0, hi.1, hi.2);
                    let usz = dot(&sy1, us_lo, us, us_hi);
                    -k * ar / f * uy + k * f * s * usz
                }
                Operator::L2 { z } => {
                    let f = model.f(z);
                    uy + 0.5 * f * f * s * s * uss + r * s * us - r * b
                }
                Operator::L2Averaged { sigma_bar } => {
                    uy + 0.5 * sigma_bar * sigma_bar * s * s * uss + r * s * us - r * b
                }
                _ => unreachable!(),
            };
            values.push(v);
        }
    }
    GridFunction2D::new(u.x[1..nx - 1].to_vec(), u.y[1..ny - 1].to_vec(), values)
}

fn max_step(axis: &[f64]) -> f64 {
    axis.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// `op(u) - source` on the interior nodes, measured against the larger of
/// `max |source|` and `max |op(u)|`.
pub fn residual_1d(
    u: &GridFunction1D,
    op: Operator,
    source: impl Fn(f64) -> f64,
    model: &OUVolModel,
    params: &MarketParams,
) -> Result<ResidualReport> {
    let lu = apply_1d(u, op, model, params)?;
    let src: Vec<f64> = lu.axis.iter().map(|&z| source(z)).collect();
    let res: Vec<f64> = lu.values.iter().zip(&src).map(|(a, b)| a - b).collect();
    let scale = src.iter().chain(&lu.values).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ResidualReport::from_values(op.name(), &res, scale, vec![max_step(&u.axis)]))
}

pub fn residual_2d(
    u: &GridFunction2D,
    op: Operator,
    source: impl Fn(f64, f64) -> f64,
    model: &OUVolModel,
    params: &MarketParams,
) -> Result<ResidualReport> {
    let lu = apply_2d(u, op, model, params)?;
    let ny = lu.y.len();
    let mut res = Vec::with_capacity(lu.values.len());
    let mut scale = 0.0f64;
    for (idx, &v) in lu.values.iter().enumerate() {
        let g = source(lu.x[idx / ny], lu.y[idx % ny]);
        scale = scale.max(g.abs()).max(v.abs());
        res.push(v - g);
    }
    Ok(ResidualReport::from_values(op.name(), &res, scale, vec![max_step(&u.x), max_step(&u.y)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs_kernel::bs_price;
    use crate::verification::grid::{log_grid, uniform_grid};

    fn setup() -> (OUVolModel, MarketParams) {
        (OUVolModel::scott(-1.8, 0.5, -0.3), MarketParams::new(0.04, 0.1, 1.0, 100.0, 3.0))
    }

    #[test]
    fn l0_on_constant_and_linear() {
        let (m, p) = setup();
        let z = uniform_grid(-4.0, 1.0, 41);
        let c = GridFunction1D::from_fn(z.clone(), |_| 3.0).unwrap();
        assert!(apply_1d(&c, Operator::L0, &m, &p).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        // chi = -z solves L0 chi = z - m exactly, and the stencil is exact on it
        let lin = GridFunction1D::from_fn(z, |z| -z).unwrap();
        let rep = residual_1d(&lin, Operator::L0, |z| z - m.m, &m, &p).unwrap();
        assert!(rep.max_abs < 1e-12);
    }

    #[test]
    fn l0_second_order_on_gaussian_bump() {
        let (m, p) = setup();
        let run = |n| {
            let u = GridFunction1D::from_fn(uniform_grid(-3.0, 3.0, n), |z| (-z * z).exp()).unwrap();
            let exact = |z: f64| {
                let e = (-z * z).exp();
                (m.m - z) * (-2.0 * z * e) + m.nu * m.nu * (4.0 * z * z - 2.0) * e
            };
            residual_1d(&u, Operator::L0, exact, &m, &p).unwrap()
        };
        let rep = run(61).with_refinement(&run(121));
        assert!(!rep.flagged, "{rep}");
    }

    #[test]
    fn averaged_l2_annihilates_black_scholes() {
        let (m, p) = setup();
        let run = |n: usize| {
            let s = log_grid(40.0, 250.0, n);
            let t = uniform_grid(0.0, 2.0, n);
            let u = GridFunction2D::from_fn(s, t, |s, t| bs_price(s, t, 0.165, &p).unwrap().price).unwrap();
            residual_2d(&u, Operator::L2Averaged { sigma_bar: 0.165 }, |_, _| 0.0, &m, &p).unwrap()
        };
        // the source is zero, so only absolute size and order are meaningful
        let rep = run(41).with_refinement(&run(81));
        assert!(rep.max_abs < 0.05, "{rep}");
        assert!(!rep.flagged, "{rep}");
    }

    #[test]
    fn manufactured_l2_and_l1() {
        let (m, p) = setup();
        // u = S^2 (T - t): u_t = -S^2, exact on the stencil up to S^2 terms
        let s = log_grid(50.0, 150.0, 31);
        let t = uniform_grid(0.0, 2.0, 11);
        let u = GridFunction2D::from_fn(s, t, |s, t| s * s * (3.0 - t)).unwrap();
        let z = -1.5;
        let f2 = m.f(z).powi(2);
        let rep = residual_2d(
            &u,
            Operator::L2 { z },
            |s, t| -s * s + (f2 + 2.0 * p.r - p.r) * s * s * (3.0 - t),
            &m,
            &p,
        )
        .unwrap();
        assert!(rep.max_rel() < 1e-10, "{rep}");
        // u = S e^z: L1 u = -k (alpha - r) S + k f S e^z
        let k = m.nu * std::f64::consts::SQRT_2 * m.rho;
        let run = |n: usize| {
            let u = GridFunction2D::from_fn(log_grid(50.0, 150.0, n), uniform_grid(-3.0, 0.0, n), |s, z| s * z.exp())
                .unwrap();
            residual_2d(&u, Operator::L1, |s, z| -k * p.excess_return() * s + k * s * (2.0 * z).exp(), &m, &p).unwrap()
        };
        let rep = run(31).with_refinement(&run(61));
        assert!(rep.max_rel() < 1e-2 && !rep.flagged, "{rep}");
    }

    #[test]
    fn wrong_dimension_is_shape_error() {
        let (m, p) = setup();
        let u = GridFunction1D::from_fn(uniform_grid(0.0, 1.0, 5), |z| z).unwrap();
        assert!(matches!(apply_1d(&u, Operator::L1, &m, &p), Err(Error::Shape(_))));
    }
}
