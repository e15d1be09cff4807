//! Python bindings: `import coulomb_gas`.

use coulomb_core::concentration::{equilibrium_measure, theorem1_bound as bound1, wilson_interval as wilson};
use coulomb_core::experiment::{rate_rows, run_in_memory, violations, ExperimentConfig, ExperimentSetup};
use coulomb_core::gas::{hamiltonian, run_chain, GibbsParams, ParticleConfiguration, Potential};
use coulomb_core::regularize::regularization_grid;
use coulomb_core::transport::{energy_distance as energy_dist, w1_entropic as entropic, w1_exact, EnergyMethod};
use coulomb_core::verify::{run_suites, Suite};
use coulomb_core::{DiscreteMeasure, Error, ManifoldId, ManifoldPoint, RngState};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn manifold(name: &str) -> PyResult<ManifoldId> {
    name.parse().map_err(to_py)
}

fn point(m: ManifoldId, coords: &[f64]) -> PyResult<ManifoldPoint> {
    m.point(coords).map_err(to_py)
}

fn points(m: ManifoldId, coords: &[Vec<f64>]) -> PyResult<Vec<ManifoldPoint>> {
    coords.iter().map(|c| point(m, c)).collect()
}

fn potential(m: ManifoldId, json: Option<&str>) -> PyResult<Option<Potential>> {
    let Some(json) = json else { return Ok(None) };
    let pot: Potential = serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("potential: {e}")))?;
    pot.check(m).map_err(to_py)?;
    Ok(Some(pot))
}

fn coords_of(m: ManifoldId, pts: &[ManifoldPoint]) -> Vec<Vec<f64>> {
    pts.iter().map(|p| p.as_slice(m).to_vec()).collect()
}

/// Heat kernel and Green function of one manifold ("torus2", "torus3" or
/// "sphere2"). Torus points are given as coordinates in [0, 1), sphere
/// points as 3-vectors (normalized on input).
#[pyclass(name = "SpectralModel", frozen)]
struct Model {
    inner: coulomb_core::SpectralModel,
}

#[pymethods]
impl Model {
    #[new]
    fn new(manifold_name: &str) -> PyResult<Self> {
        Ok(Model {
            inner: coulomb_core::SpectralModel::new(manifold(manifold_name)?),
        })
    }

    #[getter]
    fn manifold(&self) -> String {
        self.inner.manifold().to_string()
    }

    #[getter]
    fn spectral_gap(&self) -> f64 {
        self.inner.spectral_gap()
    }

    /// `(p_t(x, y), truncation bound)`.
    fn heat_kernel(&self, t: f64, x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
        let m = self.inner.manifold();
        let v = self.inner.heat_kernel(t, &point(m, &x)?, &point(m, &y)?).map_err(to_py)?;
        Ok((v.value, v.truncation_bound))
    }

    /// `G(x, y)`; infinite on the diagonal.
    fn green(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let m = self.inner.manifold();
        Ok(self.inner.green_value(&point(m, &x)?, &point(m, &y)?))
    }

    fn regularized_green(&self, t: f64, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let m = self.inner.manifold();
        Ok(self.inner.regularized_green(t, &point(m, &x)?, &point(m, &y)?).map_err(to_py)?.value)
    }

    /// `H_n` of a configuration, with an optional potential given as JSON.
    #[pyo3(signature = (coords, potential_json=None))]
    fn hamiltonian(&self, coords: Vec<Vec<f64>>, potential_json: Option<&str>) -> PyResult<f64> {
        let m = self.inner.manifold();
        let cfg = ParticleConfiguration::new(m, points(m, &coords)?).map_err(to_py)?;
        let pot = potential(m, potential_json)?;
        Ok(hamiltonian(&self.inner, &cfg, pot.as_ref()))
    }

    /// Run one Metropolis chain from uniform positions; returns a dict with
    /// the final `coords`, `acceptance`, tuned `step` and `energy_trace`.
    #[pyo3(signature = (n, beta, sweeps=1000, burn_in=500, seed=1, step=0.25, potential_json=None))]
    #[allow(clippy::too_many_arguments)]
    fn sample<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        beta: f64,
        sweeps: usize,
        burn_in: usize,
        seed: u64,
        step: f64,
        potential_json: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.manifold();
        let params = GibbsParams { beta, n, step, potential: potential(m, potential_json)? };
        let run = py
            .detach(|| {
                let mut rng = RngState::from_seed(seed);
                let init = ParticleConfiguration::sample_uniform(m, n, &mut rng)?;
                run_chain(&self.inner, &params, &init, burn_in, sweeps, &mut rng)
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("coords", coords_of(m, &run.configuration.points))?;
        d.set_item("acceptance", run.stats.acceptance_rate)?;
        d.set_item("step", run.step)?;
        d.set_item("energy_trace", run.stats.energy_trace)?;
        Ok(d)
    }

    /// `√E(μ - ν)` by the double sum of `G` over the atoms.
    #[pyo3(signature = (mu, nu, exclude_diagonal=false))]
    fn energy_distance(&self, mu: &Measure, nu: &Measure, exclude_diagonal: bool) -> PyResult<f64> {
        energy_dist(&self.inner, &mu.inner, &nu.inner, EnergyMethod::DoubleSum { exclude_diagonal }).map_err(to_py)
    }
}

/// A finitely supported probability measure. Without weights the measure is
/// the empirical measure of the atoms.
#[pyclass(name = "Measure", frozen)]
struct Measure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl Measure {
    #[new]
    #[pyo3(signature = (manifold_name, coords, weights=None))]
    fn new(manifold_name: &str, coords: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let m = manifold(manifold_name)?;
        let atoms = points(m, &coords)?;
        let inner = match weights {
            Some(w) => DiscreteMeasure::new(m, atoms, w),
            None => DiscreteMeasure::empirical(m, &atoms),
        }
        .map_err(to_py)?;
        Ok(Measure { inner })
    }

    #[getter]
    fn manifold(&self) -> String {
        self.inner.manifold.to_string()
    }

    #[getter]
    fn coords(&self) -> Vec<Vec<f64>> {
        coords_of(self.inner.manifold, &self.inner.atoms)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Exact `W₁(μ, ν)` and the optimal plan as `(source, sink, mass)` triples.
#[pyfunction]
fn w1(py: Python<'_>, mu: &Measure, nu: &Measure) -> PyResult<(f64, Vec<(usize, usize, f64)>)> {
    let (w, plan) = py.detach(|| w1_exact(&mu.inner, &nu.inner)).map_err(to_py)?;
    Ok((w, plan.flows))
}

/// Certified `(lower, upper)` bracket on `W₁` from entropic transport.
#[pyfunction]
fn w1_entropic(py: Python<'_>, mu: &Measure, nu: &Measure, epsilon: f64) -> PyResult<(f64, f64)> {
    let b = py.detach(|| entropic(&mu.inner, &nu.inner, epsilon)).map_err(to_py)?;
    Ok((b.lower, b.upper))
}

/// Equilibrium density on the regularization grid:
/// `(entropy, node coords, density)`.
#[pyfunction]
#[pyo3(signature = (manifold_name, potential_json=None, resolution=64))]
fn equilibrium(
    manifold_name: &str,
    potential_json: Option<&str>,
    resolution: usize,
) -> PyResult<(f64, Vec<Vec<f64>>, Vec<f64>)> {
    let m = manifold(manifold_name)?;
    let pot = potential(m, potential_json)?;
    let grid = regularization_grid(m, resolution).map_err(to_py)?;
    let eq = equilibrium_measure(m, pot.as_ref(), &grid).map_err(to_py)?;
    Ok((eq.entropy, coords_of(m, &grid.nodes), eq.density))
}

#[pyfunction]
fn theorem1_bound(n: usize, beta: f64, r: f64, dimension: usize, log_term_constant: f64, fitted_c: f64) -> f64 {
    bound1(n, beta, r, dimension, log_term_constant, fitted_c)
}

/// 95% Wilson score interval for `k` successes in `n` trials.
#[pyfunction]
fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    wilson(k, n)
}

/// Run invariant suites; returns `(suite, name, value, passed)` tuples.
#[pyfunction]
#[pyo3(signature = (suite="all", manifold_name=None, seed=1))]
fn verify(py: Python<'_>, suite: &str, manifold_name: Option<&str>, seed: u64) -> PyResult<Vec<(String, String, f64, bool)>> {
    let suites = Suite::parse(suite).ok_or_else(|| PyValueError::new_err(format!("unknown suite '{suite}'")))?;
    let ids = match manifold_name {
        Some(name) => vec![manifold(name)?],
        None => vec![ManifoldId::Torus2, ManifoldId::Torus3, ManifoldId::Sphere2],
    };
    let checks = py
        .detach(|| {
            let models: Vec<_> = ids.into_iter().map(coulomb_core::SpectralModel::new).collect();
            run_suites(&suites, &models, &mut RngState::from_seed(seed))
        })
        .map_err(to_py)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.suite.to_string(), c.name.clone(), c.value, c.passed()))
        .collect())
}

/// Run a concentration experiment from a JSON config held in memory.
/// Returns a dict with `rows`, `rates` and `violations`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::from_json(config_json).map_err(PyValueError::new_err)?;
    let (rows, rates) = py
        .detach(|| -> coulomb_core::Result<_> {
            let setup = ExperimentSetup::new(config)?;
            let results = run_in_memory(&setup)?;
            let rows: Vec<_> = results.iter().flat_map(|(c, t)| setup.rows(c, t)).collect();
            Ok((rows, rate_rows(&setup, &results)))
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    let mut py_rows = Vec::with_capacity(rows.len());
    for r in &rows {
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("beta", r.beta)?;
        d.set_item("r", r.r)?;
        d.set_item("bound_fitted", r.bound_fitted)?;
        d.set_item("bound_c1", r.bound_c1)?;
        d.set_item("p_hat", r.p_hat)?;
        d.set_item("ci_lo", r.ci_lo)?;
        d.set_item("ci_hi", r.ci_hi)?;
        d.set_item("flags", &r.flags)?;
        py_rows.push(d);
    }
    let mut py_rates = Vec::with_capacity(rates.len());
    for r in &rates {
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("beta", r.beta)?;
        d.set_item("r", r.r)?;
        d.set_item("rate", r.rate)?;
        d.set_item("rate_lo", r.rate_lo)?;
        d.set_item("rate_hi", r.rate_hi)?;
        d.set_item("quarter_r2", r.quarter_r2)?;
        d.set_item("slack", r.slack)?;
        py_rates.push(d);
    }
    out.set_item("violations", violations(&rows))?;
    out.set_item("rows", py_rows)?;
    out.set_item("rates", py_rates)?;
    Ok(out)
}

#[pymodule]
fn coulomb_gas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Measure>()?;
    m.add_function(wrap_pyfunction!(w1, m)?)?;
    m.add_function(wrap_pyfunction!(w1_entropic, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
