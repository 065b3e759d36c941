use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::fmt_num;

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::Shape(format!("axis {name} needs at least two nodes")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Shape(format!("axis {name} must be strictly increasing")));
    }
    Ok(())
}

fn check_values(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { node: i as f64, value: values[i] }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction1D {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction1D {
    pub fn new(axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_axis("x", &axis)?;
        if axis.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} nodes but {} values",
                axis.len(),
                values.len()
            )));
        }
        check_values(&values)?;
        Ok(Self { axis, values })
    }

    pub fn from_fn(axis: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = axis.iter().map(|&x| f(x)).collect();
        Self::new(axis, values)
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    /// Piecewise-linear interpolation; `None` outside the axis.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let (a, b) = (self.axis[0], *self.axis.last()?);
        if !(x >= a && x <= b) {
            return None;
        }
        let i = self.axis.partition_point(|&v| v <= x).clamp(1, self.len() - 1);
        let (x0, x1) = (self.axis[i - 1], self.axis[i]);
        let w = (x - x0) / (x1 - x0);
        Some((1.0 - w) * self.values[i - 1] + w * self.values[i])
    }
}

/// Values on `x × y`, stored row-major: `values[i * y.len() + j] = u(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction2D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction2D {
    pub fn new(x: Vec<f64>, y: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_axis("x", &x)?;
        check_axis("y", &y)?;
        if x.len() * y.len() != values.len() {
            return Err(Error::Shape(format!(
                "{}x{} grid but {} values",
                x.len(),
                y.len(),
                values.len()
            )));
        }
        check_values(&values)?;
        Ok(Self { x, y, values })
    }

    pub fn from_fn(x: Vec<f64>, y: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = x.iter().flat_map(|&a| y.iter().map(move |&b| (a, b))).map(|(a, b)| f(a, b)).collect();
        Self::new(x, y, values)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    /// Slice at fixed `y_j`.
    pub fn column(&self, j: usize) -> GridFunction1D {
        GridFunction1D {
            axis: self.x.clone(),
            values: (0..self.x.len()).map(|i| self.get(i, j)).collect(),
        }
    }
}

/// Sorted ascending, log-uniform nodes.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| (a + h * i as f64).exp()).collect()
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Size of a residual or error field, with an optional refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub label: String,
    pub max_abs: f64,
    pub l2: f64,
    /// Scale the errors are measured against, for relative figures.
    pub scale: f64,
    pub spacing: Vec<f64>,
    /// Error ratio coarse/fine after one halving of every spacing.
    pub ratio: Option<f64>,
    pub order: Option<f64>,
    /// Set when the refinement ratio falls outside `[3, 5]`.
    pub flagged: bool,
}

impl ResidualReport {
    /// `scale` defaults to 1 when zero (absolute report).
    pub fn from_values(label: impl Into<String>, residual: &[f64], scale: f64, spacing: Vec<f64>) -> Self {
        let max_abs = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let l2 = if residual.is_empty() {
            0.0
        } else {
            (residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64).sqrt()
        };
        Self {
            label: label.into(),
            max_abs,
            l2,
            scale: if scale > 0.0 { scale } else { 1.0 },
            spacing,
            ratio: None,
            order: None,
            flagged: false,
        }
    }

    pub fn max_rel(&self) -> f64 {
        self.max_abs / self.scale
    }

    /// Attaches the refinement ratio against a run on the halved grid.
    pub fn with_refinement(mut self, fine: &ResidualReport) -> Self {
        let ratio = self.max_abs / fine.max_abs;
        self.ratio = Some(ratio);
        self.order = Some(ratio.log2());
        self.flagged = !(3.0..=5.0).contains(&ratio);
        self
    }

    pub const CSV_HEADER: &'static str = "label,max_abs,l2,scale,max_rel,spacing,ratio,order,flagged";

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let spacing: Vec<String> = self.spacing.iter().map(|&h| fmt_num(h)).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            self.label,
            fmt_num(self.max_abs),
            fmt_num(self.l2),
            fmt_num(self.scale),
            fmt_num(self.max_rel()),
            spacing.join(";"),
            opt(self.ratio),
            opt(self.order),
            self.flagged
        )
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: max {:.3e} (rel {:.3e}), l2 {:.3e}", self.label, self.max_abs, self.max_rel(), self.l2)?;
        if let (Some(r), Some(p)) = (self.ratio, self.order) {
            write!(f, ", refinement ratio {r:.3} (order {p:.2})")?;
            if self.flagged {
                write!(f, " FLAGGED")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_errors() {
        assert!(matches!(GridFunction1D::new(vec![0.0, 1.0], vec![1.0]), Err(Error::Shape(_))));
        assert!(matches!(GridFunction1D::new(vec![1.0, 0.0], vec![1.0, 2.0]), Err(Error::Shape(_))));
        assert!(GridFunction2D::new(vec![0.0, 1.0], vec![0.0, 1.0, 2.0], vec![0.0; 5]).is_err());
        assert!(matches!(
            GridFunction1D::new(vec![0.0, 1.0], vec![1.0, f64::NAN]),
            Err(Error::NonFinite { node, .. }) if node == 1.0
        ));
    }

    #[test]
    fn layout_and_interpolation() {
        let g = GridFunction2D::from_fn(vec![0.0, 1.0, 2.0], vec![10.0, 20.0], |x, y| x * 100.0 + y).unwrap();
        assert_eq!(g.get(2, 1), 220.0);
        assert_eq!(g.column(0).values, vec![10.0, 110.0, 210.0]);
        let l = GridFunction1D::from_fn(vec![0.0, 1.0, 3.0], |x| 2.0 * x).unwrap();
        assert_eq!(l.interpolate(2.0), Some(4.0));
        assert_eq!(l.interpolate(3.5), None);
    }

    #[test]
    fn refinement_flags() {
        let c = ResidualReport::from_values("c", &[4.0, -1.0], 0.0, vec![0.1]);
        let f = ResidualReport::from_values("f", &[1.0], 0.0, vec![0.05]);
        let r = c.clone().with_refinement(&f);
        assert_eq!(r.ratio, Some(4.0));
        assert!(!r.flagged);
        assert!(c.with_refinement(&ResidualReport::from_values("f", &[2.0], 0.0, vec![])).flagged);
    }
}
