//! Python module `nested_risk`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nested_risk::american::{self, AmerParams};
use nested_risk::closedform::{self, OptionKind};
use nested_risk::lattice::{self, ConvergenceSetup};
use nested_risk::merton::{self, MertonParams, NuVariant};
use nested_risk::pdesolve::{self, Grid, Payoff};
use nested_risk::riskcore::{self, DiscreteDistribution, RiskSpec, Side};
use nested_risk::{selftest, Error};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_kind(s: &str) -> PyResult<OptionKind> {
    s.parse().map_err(py_err)
}

fn parse_side(s: &str) -> PyResult<Side> {
    s.parse().map_err(py_err)
}

/// European contract and market: spot, strike, rate, sigma, expiry, s_rho.
#[pyclass(name = "EuroParams", module = "nested_risk", frozen)]
struct PyEuroParams {
    inner: closedform::EuroParams,
}

#[pymethods]
impl PyEuroParams {
    #[new]
    #[pyo3(signature = (spot, strike, rate, sigma, expiry, s_rho = 0.0))]
    fn new(spot: f64, strike: f64, rate: f64, sigma: f64, expiry: f64, s_rho: f64) -> PyResult<Self> {
        closedform::EuroParams::new(spot, strike, rate, sigma, expiry, s_rho)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn spot(&self) -> f64 {
        self.inner.spot
    }
    #[getter]
    fn strike(&self) -> f64 {
        self.inner.strike
    }
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn expiry(&self) -> f64 {
        self.inner.expiry
    }
    #[getter]
    fn s_rho(&self) -> f64 {
        self.inner.s_rho
    }

    fn with_s_rho(&self, s_rho: f64) -> PyResult<Self> {
        let inner = self.inner.with_s_rho(s_rho);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Closed-form value; `kind` is "call" or "put", `side` is "bid" or "ask".
    fn value(&self, kind: &str, side: &str) -> PyResult<f64> {
        closedform::value(&self.inner, parse_kind(kind)?, parse_side(side)?).map_err(py_err)
    }

    fn bid_ask(&self, kind: &str) -> PyResult<(f64, f64)> {
        let k = parse_kind(kind)?;
        Ok((
            closedform::value(&self.inner, k, Side::Bid).map_err(py_err)?,
            closedform::value(&self.inner, k, Side::Ask).map_err(py_err)?,
        ))
    }

    /// Dividend yield that turns the side into a Black-Scholes value.
    fn dividend_yield(&self, kind: &str, side: &str) -> PyResult<f64> {
        Ok(self.inner.spread(parse_kind(kind)?, parse_side(side)?))
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "EuroParams(spot={}, strike={}, rate={}, sigma={}, expiry={}, s_rho={})",
            p.spot, p.strike, p.rate, p.sigma, p.expiry, p.s_rho
        )
    }
}

/// A coherent risk measure on finite distributions.
#[pyclass(name = "RiskMeasure", module = "nested_risk", frozen)]
struct PyRiskMeasure {
    inner: RiskSpec,
}

#[pymethods]
impl PyRiskMeasure {
    #[staticmethod]
    fn expectation() -> Self {
        Self {
            inner: RiskSpec::expectation(),
        }
    }

    #[staticmethod]
    fn semi_deviation(order: f64, level: f64) -> PyResult<Self> {
        RiskSpec::semi_deviation(order, level)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn avar(level: f64) -> PyResult<Self> {
        RiskSpec::avar(level).map(|inner| Self { inner }).map_err(py_err)
    }

    /// `rho(Y)` for outcomes `Y` with the given probabilities.
    fn evaluate(&self, outcomes: Vec<f64>, probabilities: Vec<f64>) -> PyResult<f64> {
        let d = DiscreteDistribution::new(outcomes, probabilities).map_err(py_err)?;
        Ok(riskcore::evaluate(&self.inner, &d))
    }

    /// Bid (`-rho(-Y)`) or ask (`rho(Y)`) value.
    fn side_value(&self, outcomes: Vec<f64>, probabilities: Vec<f64>, side: &str) -> PyResult<f64> {
        let d = DiscreteDistribution::new(outcomes, probabilities).map_err(py_err)?;
        Ok(riskcore::side_value(&self.inner, &d, parse_side(side)?))
    }

    fn __repr__(&self) -> String {
        format!("RiskMeasure({})", self.inner.label())
    }
}

/// Result of an American solve.
#[pyclass(name = "AmericanResult", module = "nested_risk", frozen, get_all)]
struct PyAmericanResult {
    value: f64,
    boundary_times: Vec<f64>,
    /// `None` where the exercise region is empty.
    boundary_levels: Vec<Option<f64>>,
    has_exercise_region: bool,
    x: Vec<f64>,
    values_t0: Vec<f64>,
}

#[pyfunction]
fn s_rho(order: f64, beta: f64) -> PyResult<f64> {
    riskcore::s_rho(order, beta).map_err(py_err)
}

/// Nested risk value of a vanilla payoff on an `n`-step CRR lattice.
#[pyfunction]
#[pyo3(signature = (s0, strike, rate, sigma, horizon, n, measure, kind, side))]
#[allow(clippy::too_many_arguments)]
fn lattice_price(
    s0: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    horizon: f64,
    n: usize,
    measure: &PyRiskMeasure,
    kind: &str,
    side: &str,
) -> PyResult<f64> {
    let tree = lattice::build_tree(s0, rate, sigma, horizon, n).map_err(py_err)?;
    let k = parse_kind(kind)?;
    let scaled = measure.inner.with_scaling(riskcore::LevelScaling::SqrtDt);
    lattice::price_nested(&tree, &scaled, |s| k.payoff(s, strike), parse_side(side)?)
        .map(|r| r.value)
        .map_err(py_err)
}

/// Lattice bid/ask against the dividend-yield limit for each step count.
#[pyfunction]
#[pyo3(signature = (beta = 0.5, n_list = vec![100, 400, 1600]))]
fn convergence_study(beta: f64, n_list: Vec<usize>) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
    let rows = lattice::convergence_study(&ConvergenceSetup::reference(beta), &n_list).map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            BTreeMap::from([
                ("n", r.n as f64),
                ("dt", r.dt),
                ("bid", r.bid),
                ("ask", r.ask),
                ("reference", r.reference),
                ("abs_error", r.abs_error),
            ])
        })
        .collect())
}

/// Finite-difference European value at the spot.
#[pyfunction]
#[pyo3(signature = (params, kind, side, nx = 401, nt = 400))]
fn pde_european(py: Python<'_>, params: &PyEuroParams, kind: &str, side: &str, nx: usize, nt: usize) -> PyResult<f64> {
    let p = params.inner;
    let (k, s) = (parse_kind(kind)?, parse_side(side)?);
    py.detach(|| {
        let grid = Grid::for_strike(p.strike, nx, nt)?;
        let sol = pdesolve::solve_european(
            &p,
            &Payoff::Vanilla {
                kind: k,
                strike: p.strike,
            },
            s,
            &grid,
        )?;
        Ok(sol.value_at(0, p.spot))
    })
    .map_err(py_err)
}

/// American value and exercise boundary.
#[pyfunction]
#[pyo3(signature = (params, kind, side, nx = 401, nt = 400))]
fn american_price(
    py: Python<'_>,
    params: &PyEuroParams,
    kind: &str,
    side: &str,
    nx: usize,
    nt: usize,
) -> PyResult<PyAmericanResult> {
    let ap = AmerParams {
        euro: params.inner,
        kind: parse_kind(kind)?,
    };
    let s = parse_side(side)?;
    let sol = py
        .detach(|| {
            let grid = Grid::for_strike(ap.euro.strike, nx, nt)?;
            american::solve_american(&ap, s, &grid)
        })
        .map_err(py_err)?;
    Ok(PyAmericanResult {
        value: sol.value(),
        has_exercise_region: !sol.boundary.is_empty(),
        boundary_times: sol.boundary.times.clone(),
        boundary_levels: sol.boundary.levels.clone(),
        values_t0: sol.pde.initial().to_vec(),
        x: sol.pde.x,
    })
}

fn merton_params(gamma: f64, r: f64, mu: f64, sigma: f64, epsilon: f64, horizon: f64, w0: f64) -> MertonParams {
    MertonParams {
        r,
        mu,
        sigma,
        gamma,
        epsilon,
        s_rho: 0.0,
        horizon,
        w0,
    }
}

/// Initial consumption, investment fraction and `nu` along an `s_rho` grid.
#[pyfunction]
#[pyo3(signature = (s_rho_grid, variant = "printed", gamma = 0.4, r = 0.01, mu = 0.1, sigma = 0.3, epsilon = 0.1, horizon = 4.0, w0 = 1.0))]
#[allow(clippy::too_many_arguments)]
fn merton_consumption(
    s_rho_grid: Vec<f64>,
    variant: &str,
    gamma: f64,
    r: f64,
    mu: f64,
    sigma: f64,
    epsilon: f64,
    horizon: f64,
    w0: f64,
) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
    let v: NuVariant = variant.parse().map_err(py_err)?;
    let p = merton_params(gamma, r, mu, sigma, epsilon, horizon, w0);
    let rows = merton::consumption_curve(&p, &s_rho_grid, v).map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            BTreeMap::from([
                ("s_rho", r.s_rho),
                ("consumption", r.consumption),
                ("pi_star", r.pi_star),
                ("nu", r.nu),
            ])
        })
        .collect())
}

/// JSON report comparing the `nu` variants against both equation forms.
#[pyfunction]
#[pyo3(signature = (s_rho = 0.15))]
fn merton_adjudicate(s_rho: f64) -> PyResult<String> {
    merton::adjudicate(&MertonParams::reference(s_rho))
        .map(|r| r.to_json())
        .map_err(py_err)
}

/// Runs the oracle agreement suite; returns `(all_passed, text_report)`.
#[pyfunction]
#[pyo3(signature = (seed = 42))]
fn run_selftest(py: Python<'_>, seed: u64) -> PyResult<(bool, String)> {
    let rep = py.detach(|| selftest::run(seed)).map_err(py_err)?;
    Ok((rep.all_passed(), rep.to_text()))
}

#[pymodule(name = "nested_risk")]
fn nested_risk_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEuroParams>()?;
    m.add_class::<PyRiskMeasure>()?;
    m.add_class::<PyAmericanResult>()?;
    m.add_function(wrap_pyfunction!(s_rho, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_price, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(pde_european, m)?)?;
    m.add_function(wrap_pyfunction!(american_price, m)?)?;
    m.add_function(wrap_pyfunction!(merton_consumption, m)?)?;
    m.add_function(wrap_pyfunction!(merton_adjudicate, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
