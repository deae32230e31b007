//! Python bindings. Money crosses the boundary as strings (`"-13/2"`), which
//! `fractions.Fraction` parses directly. Inputs may be ints, strings,
//! `Fraction`s or floats; anything whose `str()` is an exact number works.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sbbmarket_core::engine::{expected_gft as pool_gft, optimal_gft};
use sbbmarket_core::market::validate_market;
use sbbmarket_core::sim::{run_experiment_with_workers, write_csv, GftScale};
use sbbmarket_core::verify::threshold_probe;
use sbbmarket_core::{build_table, Error, ExperimentSpec, Market, Mechanism, Money};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn money(obj: &Bound<'_, PyAny>) -> PyResult<Money> {
    obj.str()?.to_str()?.parse().map_err(py_err)
}

fn mechanism(name: &str) -> PyResult<Mechanism> {
    name.parse().map_err(py_err)
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

#[pyclass(name = "Market", module = "sbbmarket", frozen)]
struct PyMarket {
    inner: Market,
}

#[pymethods]
impl PyMarket {
    /// Parses and validates a market document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = Market::from_json_str(text).map_err(py_err)?;
        inner.check().map_err(py_err)?;
        Ok(PyMarket { inner })
    }

    /// One list of values per category. Ids come out as `<category>_<i>`.
    #[staticmethod]
    #[pyo3(signature = (categories, recipe, values, category_order = None))]
    fn from_values(
        categories: Vec<String>,
        recipe: Vec<usize>,
        values: Vec<Vec<Bound<'_, PyAny>>>,
        category_order: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let values = values
            .iter()
            .map(|vs| vs.iter().map(money).collect::<PyResult<Vec<_>>>())
            .collect::<PyResult<Vec<_>>>()?;
        let names: Vec<&str> = categories.iter().map(String::as_str).collect();
        let mut inner = Market::from_values(&names, &recipe, &values).map_err(py_err)?;
        if let Some(order) = category_order {
            inner = inner.with_category_order(order).map_err(py_err)?;
        }
        Ok(PyMarket { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_json()).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Problems found in the market, warnings included, as readable strings.
    fn validate(&self) -> Vec<String> {
        validate_market(&self.inner).iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn categories(&self) -> Vec<String> {
        self.inner.categories.clone()
    }

    #[getter]
    fn recipe(&self) -> Vec<usize> {
        self.inner.recipe.counts().to_vec()
    }

    #[getter]
    fn category_order(&self) -> Vec<usize> {
        self.inner.category_order.clone()
    }

    /// `(id, category, value)` triples.
    #[getter]
    fn agents(&self) -> Vec<(String, usize, String)> {
        self.inner
            .agents
            .iter()
            .map(|a| (a.id.clone(), a.category, a.value.to_string()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.agents.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Market(categories={:?}, recipe={:?}, agents={})",
            self.inner.categories,
            self.inner.recipe.counts(),
            self.inner.agents.len()
        )
    }
}

/// Runs a mechanism end to end, lottery included, and returns the outcome
/// document.
#[pyfunction]
#[pyo3(signature = (market, mechanism = "extcomp", seed = 0))]
fn run<'py>(py: Python<'py>, market: &PyMarket, mechanism: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let mech = self::mechanism(mechanism)?;
    let out = mech
        .run(&market.inner, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(py_err)?;
    json_to_py(py, &out.to_json(&market.inner))
}

/// Prices and trader pools before the lottery, plus the expected GFT.
#[pyfunction]
#[pyo3(signature = (market, mechanism = "extcomp"))]
fn allocate<'py>(py: Python<'py>, market: &PyMarket, mechanism: &str) -> PyResult<Bound<'py, PyAny>> {
    let m = &market.inner;
    let pools = self::mechanism(mechanism)?.allocate(m).map_err(py_err)?;
    let named = |xs: Vec<serde_json::Value>| {
        serde_json::Value::Object(m.categories.iter().cloned().zip(xs).collect())
    };
    let doc = serde_json::json!({
        "deal_count": pools.deal_count,
        "prices": named(pools.prices.iter().map(|p| p.to_string().into()).collect()),
        "pools": named(
            pools
                .pools
                .iter()
                .map(|p| p.iter().map(|a| a.id.clone()).collect::<Vec<_>>().into())
                .collect()
        ),
        "expected_gft": pool_gft(&pools).to_string(),
    });
    json_to_py(py, &doc)
}

/// The block table: complete sets in ascending GFT order.
#[pyfunction]
#[pyo3(name = "build_table")]
fn build_table_py<'py>(py: Python<'py>, market: &PyMarket) -> PyResult<Bound<'py, PyAny>> {
    let t = build_table(&market.inner);
    let sets: Vec<serde_json::Value> = t
        .sets
        .iter()
        .map(|s| serde_json::json!({ "ids": s.ids(), "gft": s.gft.to_string() }))
        .collect();
    let doc = serde_json::json!({
        "w": t.w,
        "k": t.k,
        "optimal_gft": optimal_gft(&t).to_string(),
        "sets": sets,
        "remaining": t.remaining.iter().map(|a| a.id.clone()).collect::<Vec<_>>(),
    });
    json_to_py(py, &doc)
}

/// Sweeps one agent's report and returns the truthfulness report.
#[pyfunction]
#[pyo3(signature = (market, agent, mechanism = "extcomp", grid = None))]
fn probe<'py>(
    py: Python<'py>,
    market: &PyMarket,
    agent: &str,
    mechanism: &str,
    grid: Option<Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mech = self::mechanism(mechanism)?;
    mech.allocate(&market.inner).map_err(py_err)?;
    let grid = grid.as_ref().map(money).transpose()?;
    let report = threshold_probe(&market.inner, |m| mech.allocate(m), agent, grid).map_err(py_err)?;
    let mut doc = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    doc["truthful"] = report.truthful().into();
    json_to_py(py, &doc)
}

/// McAfee's double auction on raw buyer values and (negative) seller values.
#[pyfunction]
fn mcafee<'py>(
    py: Python<'py>,
    buyers: Vec<Bound<'py, PyAny>>,
    sellers: Vec<Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let b = buyers.iter().map(money).collect::<PyResult<Vec<_>>>()?;
    let s = sellers.iter().map(money).collect::<PyResult<Vec<_>>>()?;
    to_py(py, &sbbmarket_core::run_mcafee(&b, &s))
}

/// Runs an experiment spec (a JSON document) and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (spec, workers = None, absolute = false))]
fn simulate(py: Python<'_>, spec: &str, workers: Option<usize>, absolute: bool) -> PyResult<String> {
    let spec: ExperimentSpec = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    spec.validate().map_err(py_err)?;
    let table = py
        .detach(|| run_experiment_with_workers(&spec, workers))
        .map_err(py_err)?;
    let scale = if absolute { GftScale::Absolute } else { GftScale::Ratio };
    let mut buf = Vec::new();
    write_csv(&table, &mut buf, scale).map_err(|e| py_err(Error::io(PathBuf::from("<memory>"), e)))?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn sbbmarket(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarket>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(build_table_py, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    m.add_function(wrap_pyfunction!(mcafee, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
