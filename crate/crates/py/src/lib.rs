//! Python bindings, imported as `fmrvol`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fmrvol::figures::{self as figs, FigureConfig, FigureSet};
use fmrvol::ou_calculus::scott_closed_form;
use fmrvol::simulator::{self, Policy, SimConfig};
use fmrvol::verification::acceptance::{self, AcceptanceConfig};
use fmrvol::{AverageSet, MarketParams, OUVolModel, Side};

fn err(e: fmrvol::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn side(name: &str) -> PyResult<Side> {
    match name {
        "plain" => Ok(Side::Plain),
        "writer" => Ok(Side::Writer),
        other => Err(PyValueError::new_err(format!("side must be 'plain' or 'writer', got '{other}'"))),
    }
}

fn averages_dict<'py>(py: Python<'py>, a: &AverageSet) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in a.entries() {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Black-Scholes call price.
#[pyfunction]
#[pyo3(signature = (s, t, sigma_bar, r, strike, expiry))]
fn bs_price(s: f64, t: f64, sigma_bar: f64, r: f64, strike: f64, expiry: f64) -> PyResult<f64> {
    let p = MarketParams::new(r, r, 1.0, strike, expiry);
    fmrvol::bs_kernel::bs_price(s, t, sigma_bar, &p).map(|g| g.price).map_err(err)
}

/// Closed-form Scott averages for OU mean `m` and vol-of-vol `nu`.
#[pyfunction]
fn scott_averages(py: Python<'_>, m: f64, nu: f64) -> PyResult<Bound<'_, PyDict>> {
    averages_dict(py, &scott_closed_form(m, nu))
}

/// Pricer for the Scott model `f = e^z`.
///
/// Pass either `sigma_bar` (then `m = ln sigma_bar - nu^2`) or `m`.
#[pyclass(name = "Pricer", frozen)]
struct PyPricer {
    inner: fmrvol::Pricer,
}

#[pymethods]
impl PyPricer {
    #[new]
    #[pyo3(signature = (*, nu, rho = 0.0, sigma_bar = 0.165, m = None, r = 0.04, alpha = 0.1, gamma = 1.0, strike = 100.0, expiry = 3.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        nu: f64,
        rho: f64,
        sigma_bar: f64,
        m: Option<f64>,
        r: f64,
        alpha: f64,
        gamma: f64,
        strike: f64,
        expiry: f64,
    ) -> PyResult<Self> {
        let market = MarketParams::new(r, alpha, gamma, strike, expiry);
        let model = match m {
            Some(m) => OUVolModel::scott(m, nu, rho),
            None => OUVolModel::scott_with_sigma_bar(sigma_bar, nu, rho),
        };
        fmrvol::validate(&market, &model, 0.0).map_err(err)?;
        Ok(Self { inner: fmrvol::Pricer::new(market, model).map_err(err)? })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.model().m
    }

    #[getter]
    fn sigma_bar(&self) -> f64 {
        self.inner.sigma_bar()
    }

    /// Price expansion at `(s, t, z)`; `z` defaults to `m`.
    #[pyo3(signature = (s, t = 0.0, z = None, epsilon = 0.005))]
    fn price<'py>(&self, py: Python<'py>, s: f64, t: f64, z: Option<f64>, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
        let p = self.inner.price(s, t, z.unwrap_or(self.inner.model().m), epsilon).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("C_BS", p.c0)?;
        d.set_item("C3", p.c3)?;
        d.set_item("C6_z", p.c6_z)?;
        d.set_item("C6_tilde", p.c6_tilde)?;
        d.set_item("total", p.total)?;
        Ok(d)
    }

    #[pyo3(signature = (s, t = 0.0))]
    fn c3(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.c3(s, t).map_err(err)
    }

    #[pyo3(signature = (s, t = 0.0))]
    fn c6_tilde(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.c6_tilde(s, t).map_err(err)
    }

    /// No-trade band; `side` is `"plain"` or `"writer"`.
    #[pyo3(signature = (side, s, t = 0.0, z = None, epsilon = 0.005))]
    fn band<'py>(
        &self,
        py: Python<'py>,
        side: &str,
        s: f64,
        t: f64,
        z: Option<f64>,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let z = z.unwrap_or(self.inner.model().m);
        let b = self.inner.hedge().band(self::side(side)?, s, t, z, epsilon).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("y_star", b.y_star)?;
        d.set_item("half_width", b.half_width)?;
        d.set_item("lower", b.lower)?;
        d.set_item("upper", b.upper)?;
        Ok(d)
    }

    fn averages<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        averages_dict(py, self.inner.averages())
    }

    /// Monte Carlo of terminal wealth; returns the result table as CSV.
    #[pyo3(signature = (n_paths = 10_000, n_steps = 600, seed = 7, policies = vec!["band".to_string(), "none".to_string()], epsilon = 0.005))]
    fn simulate(&self, n_paths: usize, n_steps: usize, seed: u64, policies: Vec<String>, epsilon: f64) -> PyResult<String> {
        let policies = policies
            .iter()
            .map(|p| match p.as_str() {
                "band" => Ok(Policy::Band),
                "none" => Ok(Policy::None),
                "bs_delta" => Ok(Policy::BsDelta),
                other => other
                    .strip_prefix("scaled_band:")
                    .and_then(|k| k.parse().ok())
                    .map(|kappa| Policy::ScaledBand { kappa })
                    .ok_or_else(|| PyValueError::new_err(format!("unknown policy '{other}'"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        let cfg = SimConfig { n_paths, n_steps, seed, policies, epsilon, ..Default::default() };
        let out = simulator::run(&cfg, &self.inner).map_err(err)?;
        Ok(out.table().to_csv_string())
    }
}

/// Figure data as `{name: csv}`; `which` is `fig1`, `fig2`, `fig3` or `all`.
#[pyfunction]
#[pyo3(signature = (nu, which = "all", n_s = 101))]
fn figures<'py>(py: Python<'py>, nu: f64, which: &str, n_s: usize) -> PyResult<Bound<'py, PyDict>> {
    let sets: Vec<FigureSet> = if which == "all" {
        FigureSet::ALL.to_vec()
    } else {
        vec![FigureSet::parse(which).ok_or_else(|| PyValueError::new_err(format!("unknown figure set '{which}'")))?]
    };
    let cfg = FigureConfig { nu, n_s, ..Default::default() };
    let d = PyDict::new(py);
    for s in sets {
        for f in figs::generate(s, &cfg).map_err(err)? {
            d.set_item(f.name, f.table.to_csv_string())?;
        }
    }
    Ok(d)
}

/// Runs acceptance criteria by number; returns `(id, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (ids = vec![1, 2, 3, 4, 5, 8]))]
fn verify(py: Python<'_>, ids: Vec<u8>) -> Vec<(u8, bool, String)> {
    let cfg = AcceptanceConfig::default();
    py.detach(|| {
        ids.into_iter()
            .map(|id| {
                let o = acceptance::run_criterion(id, &cfg);
                (o.id, o.passed, o.detail)
            })
            .collect()
    })
}

#[pymodule]
#[pyo3(name = "fmrvol")]
fn fmrvol_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bs_price, m)?)?;
    m.add_function(wrap_pyfunction!(scott_averages, m)?)?;
    m.add_function(wrap_pyfunction!(figures, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_class::<PyPricer>()?;
    Ok(())
}
