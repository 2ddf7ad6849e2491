//! Python bindings. Fields cross the boundary as lists of complex numbers
//! sampled at the grid nodes; structured results come back as dicts.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use specmult::cli::{run_check as run_named_check, Config};
use specmult::kato::{in_kato_closure, Potential as CorePotential};
use specmult::multiplier::{stone_multiplier, StoneMultiplier, StoneQuadrature};
use specmult::nls::{fixed_point_solve, InitialData, NlsOptions};
use specmult::oracle::{discretize_h, oracle_multiplier as core_oracle};
use specmult::radial::{self, GridScheme, LorentzParams, RadialField, RadialGrid};
use specmult::resolvent::{find_n1, resonance_indicator};
use specmult::symbol::SymbolSpec;
use specmult::verify::dispersive_fit;
use specmult::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn symbol(spec: &str) -> PyResult<SymbolSpec> {
    spec.parse().map_err(err)
}

/// Radial grid on `[0, r_max]` with `n` cells.
#[pyclass(frozen)]
struct Grid {
    inner: Arc<RadialGrid>,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (r_max, n, graded = None))]
    fn new(r_max: f64, n: usize, graded: Option<f64>) -> PyResult<Self> {
        let scheme = match graded {
            Some(gamma) => GridScheme::Graded { gamma },
            None => GridScheme::Uniform,
        };
        Ok(Grid {
            inner: radial::build_grid(r_max, n, scheme).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn r_max(&self) -> f64 {
        self.inner.r_max()
    }

    fn lp_norm(&self, values: Vec<Complex64>, p: f64) -> PyResult<f64> {
        radial::lp_norm(&self.field(values)?, p).map_err(err)
    }

    fn lorentz_norm(&self, values: Vec<Complex64>, p: f64, q: f64) -> PyResult<f64> {
        let params = LorentzParams::new(p, q).map_err(err)?;
        radial::lorentz_norm(&self.field(values)?, params).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Grid(r_max={}, n={}, scheme={})", self.inner.r_max(), self.inner.len(), self.inner.scheme().name())
    }
}

impl Grid {
    fn field(&self, values: Vec<Complex64>) -> PyResult<RadialField> {
        RadialField::new(self.inner.clone(), values).map_err(err)
    }
}

/// Radial potential sampled on a grid, from a family string such as
/// `"well:depth=3,radius=1"` or from explicit values.
#[pyclass(frozen)]
struct Potential {
    inner: CorePotential,
}

#[pymethods]
impl Potential {
    #[new]
    fn new(grid: &Grid, spec: &str) -> PyResult<Self> {
        Ok(Potential {
            inner: CorePotential::parse(&grid.inner, spec).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_values(grid: &Grid, values: Vec<f64>) -> PyResult<Self> {
        Ok(Potential {
            inner: CorePotential::new(grid.inner.clone(), values).map_err(err)?,
        })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn kato_norm(&self) -> f64 {
        self.inner.kato_norm()
    }

    fn weak32_norm(&self) -> f64 {
        self.inner.weak32_norm()
    }

    fn in_kato_closure(&self) -> bool {
        in_kato_closure(&self.inner)
    }

    fn resonance_indicator(&self) -> f64 {
        resonance_indicator(&self.inner)
    }

    /// `(N1, [(lambda, norm), ...])` for the fourth-power threshold.
    fn find_n1(&self) -> PyResult<(f64, Vec<(f64, f64)>)> {
        let rep = find_n1(&self.inner).map_err(err)?;
        Ok((rep.n1, rep.verified))
    }

    fn dispersive_fit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &dispersive_fit(&self.inner).map_err(err)?)
    }
}

/// `m(H) P_c` assembled from the Stone formula.
#[pyclass(frozen)]
struct Multiplier {
    inner: StoneMultiplier,
    grid: Arc<RadialGrid>,
}

#[pymethods]
impl Multiplier {
    #[new]
    fn new(potential: &Potential, symbol_spec: &str) -> PyResult<Self> {
        let v = &potential.inner;
        let quad = StoneQuadrature::for_grid(v.grid());
        Ok(Multiplier {
            inner: stone_multiplier(&symbol(symbol_spec)?, v, &quad).map_err(err)?,
            grid: v.grid().clone(),
        })
    }

    fn apply(&self, values: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        let f = RadialField::new(self.grid.clone(), values).map_err(err)?;
        Ok(self.inner.apply(&f).into_values())
    }

    /// Kernel `K(r, r')` as a row-major nested list.
    fn kernel(&self) -> Vec<Vec<Complex64>> {
        let k = self.inner.operator();
        let m = k.kernel();
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }
}

/// Applies `m(H)` through the eigendecomposition of the discretized operator.
#[pyfunction]
#[pyo3(signature = (potential, symbol_spec, values, include_point = false))]
fn oracle_multiplier(
    potential: &Potential,
    symbol_spec: &str,
    values: Vec<Complex64>,
    include_point: bool,
) -> PyResult<Vec<Complex64>> {
    let m = symbol(symbol_spec)?;
    let v = &potential.inner;
    let f = RadialField::new(v.grid().clone(), values).map_err(err)?;
    let spec = discretize_h(v);
    Ok(core_oracle(|l| m.eval(l), &spec, &f, include_point)
        .map_err(err)?
        .into_values())
}

/// Solves `i u_t = H u + sign |u|^4 u` on `[0, t_end]` by Picard iteration.
#[pyfunction]
#[pyo3(signature = (potential, data = "gaussian:width=1,grad=0.1", t_end = 1.0, tol = 1e-12, sign = 1.0))]
fn nls_solve<'py>(
    py: Python<'py>,
    potential: &Potential,
    data: &str,
    t_end: f64,
    tol: f64,
    sign: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let data: InitialData = data.parse().map_err(err)?;
    let spec = discretize_h(&potential.inner);
    let u0 = data.sample(&spec).map_err(err)?;
    let opts = NlsOptions {
        sign,
        ..NlsOptions::default()
    };
    let sol = fixed_point_solve(&u0, t_end, tol, &spec, &opts).map_err(err)?;
    let out = to_py(py, &sol.record)?;
    out.set_item("norms", to_py(py, &sol.norms)?)?;
    Ok(out)
}

/// Runs a named check (`kato`, `oracle`, `dispersive`, ...) and returns its
/// record. `config` uses the same format as the command line's config files.
#[pyfunction]
#[pyo3(signature = (name, config = "", overrides = Vec::new()))]
fn run_check<'py>(py: Python<'py>, name: &str, config: &str, overrides: Vec<(String, String)>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = Config::parse(config).map_err(err)?;
    for (k, v) in &overrides {
        cfg.set(k, v).map_err(err)?;
    }
    let record = py.detach(|| run_named_check(&cfg, name)).map_err(err)?;
    to_py(py, &record)
}

#[pymodule]
fn pyspecmult(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Potential>()?;
    m.add_class::<Multiplier>()?;
    m.add_function(wrap_pyfunction!(oracle_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(nls_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    Ok(())
}
