//! Python bindings: grids, wave functions, Hamiltonians, evolution,
//! velocity moments, the quantum potential, two-particle correlations and
//! the scenario runner.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use stochpath::bell::{self, Observable, TwoParticleState};
use stochpath::evolution::{self, Integrator};
use stochpath::grid::Grid1D;
use stochpath::hamiltonian::HamiltonianSpec;
use stochpath::moments::{self, MomentOrdering};
use stochpath::state::{self, families};
use stochpath::{harness, hj};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn integrator(name: &str) -> PyResult<Integrator> {
    match name {
        "split-step" => Ok(Integrator::SplitStep),
        "crank-nicolson" => Ok(Integrator::CrankNicolson),
        _ => Err(PyValueError::new_err(format!("unknown integrator {name:?}"))),
    }
}

fn ordering(name: &str) -> PyResult<MomentOrdering> {
    match name {
        "operator" => Ok(MomentOrdering::Operator),
        "symmetric" => Ok(MomentOrdering::Symmetric),
        _ => Err(PyValueError::new_err(format!("unknown ordering {name:?}"))),
    }
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid1D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize, x_min: f64, x_max: f64) -> PyResult<Self> {
        Grid1D::new(n, x_min, x_max).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    fn xs(&self) -> Vec<f64> {
        self.0.xs()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, x_min={}, x_max={})", self.0.len(), self.0.x_min(), self.0.x_max())
    }
}

#[pyclass(name = "Hamiltonian", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHamiltonian(HamiltonianSpec);

#[pymethods]
impl PyHamiltonian {
    #[staticmethod]
    #[pyo3(signature = (m=1.0, hbar=1.0))]
    fn free(m: f64, hbar: f64) -> PyResult<Self> {
        HamiltonianSpec::free(m, hbar).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (omega, m=1.0, hbar=1.0))]
    fn harmonic(omega: f64, m: f64, hbar: f64) -> PyResult<Self> {
        HamiltonianSpec::harmonic(m, hbar, omega).map(Self).map_err(err)
    }

    #[getter]
    fn m(&self) -> f64 {
        self.0.m
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }
}

#[pyclass(name = "WaveFunction", frozen, from_py_object)]
#[derive(Clone)]
struct PyWaveFunction(state::WaveFunction);

#[pymethods]
impl PyWaveFunction {
    #[staticmethod]
    #[pyo3(signature = (grid, sigma, x0=0.0, k0=0.0, m=1.0, hbar=1.0))]
    fn gaussian(grid: &PyGrid, sigma: f64, x0: f64, k0: f64, m: f64, hbar: f64) -> PyResult<Self> {
        families::gaussian(grid.0, m, hbar, x0, sigma, k0).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, omega, n, m=1.0, hbar=1.0))]
    fn harmonic_eigenstate(grid: &PyGrid, omega: f64, n: usize, m: f64, hbar: f64) -> PyResult<Self> {
        families::harmonic_eigenstate(grid.0, m, hbar, omega, n).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, omega, x0, p0, m=1.0, hbar=1.0))]
    fn coherent(grid: &PyGrid, omega: f64, x0: f64, p0: f64, m: f64, hbar: f64) -> PyResult<Self> {
        families::coherent(grid.0, m, hbar, omega, x0, p0).map(Self).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid())
    }

    #[getter]
    fn time(&self) -> f64 {
        self.0.time()
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density().values
    }

    fn norm(&self) -> f64 {
        self.0.norm_sqr()
    }
}

#[pyclass(name = "DensityMatrix", frozen)]
struct PyDensityMatrix(state::DensityMatrix);

#[pymethods]
impl PyDensityMatrix {
    #[staticmethod]
    fn from_pure(psi: &PyWaveFunction) -> PyResult<Self> {
        state::density_from_pure(&psi.0).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_mixture(components: Vec<(f64, PyWaveFunction)>) -> PyResult<Self> {
        let c: Vec<_> = components.into_iter().map(|(w, p)| (w, p.0)).collect();
        state::density_from_mixture(&c).map(Self).map_err(err)
    }

    fn trace(&self) -> f64 {
        self.0.trace()
    }

    fn hermiticity_deviation(&self) -> f64 {
        self.0.hermiticity_deviation()
    }

    /// Eigenvalues of `ρ·dx`, descending.
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues()
    }

    #[pyo3(signature = (ham, dt, n_steps, integrator="split-step"))]
    fn evolve(&self, ham: &PyHamiltonian, dt: f64, n_steps: usize, integrator: &str) -> PyResult<Self> {
        evolution::evolve_density(&self.0, &ham.0, dt, n_steps, self::integrator(integrator)?).map(Self).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (psi, ham, dt, n_steps, integrator="split-step"))]
fn evolve(psi: &PyWaveFunction, ham: &PyHamiltonian, dt: f64, n_steps: usize, integrator: &str) -> PyResult<PyWaveFunction> {
    evolution::evolve(&psi.0, &ham.0, dt, n_steps, self::integrator(integrator)?).map(PyWaveFunction).map_err(err)
}

/// Local moment densities `μ₀ … μ_{n_max}` on the grid.
#[pyfunction]
#[pyo3(signature = (psi, ham, n_max, ordering="operator"))]
fn local_moments(psi: &PyWaveFunction, ham: &PyHamiltonian, n_max: usize, ordering: &str) -> PyResult<Vec<Vec<f64>>> {
    let mf = moments::local_moments(&psi.0, &ham.0, n_max, self::ordering(ordering)?).map_err(err)?;
    Ok((0..=n_max).map(|n| mf.mu(n).to_vec()).collect())
}

/// `⟨⟨vⁿ⟩⟩` for `n = 0 … n_max` from the trace formula.
#[pyfunction]
fn full_moments(psi: &PyWaveFunction, ham: &PyHamiltonian, n_max: usize) -> PyResult<Vec<f64>> {
    moments::full_moments_trace(&psi.0, &ham.0, n_max).map_err(err)
}

/// `(amplitude route, fluctuation route, relative disagreement)`.
#[pyfunction]
fn quantum_potential(psi: &PyWaveFunction, ham: &PyHamiltonian) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let qp = hj::quantum_potential(&psi.0, &ham.0).map_err(err)?;
    let d = qp.relative_disagreement();
    Ok((qp.amplitude, qp.fluctuation, d))
}

#[pyfunction]
fn drift_velocity(psi: &PyWaveFunction, ham: &PyHamiltonian) -> Vec<f64> {
    hj::drift_velocity(&psi.0, &ham.0)
}

#[pyclass(name = "TwoParticleState", frozen)]
struct PyTwoParticle(TwoParticleState);

fn observable(grid: &Grid1D, name: &str) -> PyResult<Observable> {
    match name {
        "x" => Observable::position("x", grid, |x| x),
        "v" => Observable::velocity_power("v", grid, 1),
        "v^2" => Observable::velocity_power("v^2", grid, 2),
        _ => return Err(PyValueError::new_err(format!("unknown observable {name:?}; use x, v or v^2"))),
    }
    .map_err(err)
}

#[pymethods]
impl PyTwoParticle {
    #[staticmethod]
    #[pyo3(signature = (grid, s, big_s, m=1.0, hbar=1.0))]
    fn epr(grid: &PyGrid, s: f64, big_s: f64, m: f64, hbar: f64) -> PyResult<Self> {
        TwoParticleState::epr_gaussian(grid.0, m, hbar, s, big_s).map(Self).map_err(err)
    }

    #[staticmethod]
    fn product(a: &PyWaveFunction, b: &PyWaveFunction) -> PyResult<Self> {
        TwoParticleState::product(&a.0, &b.0).map(Self).map_err(err)
    }

    /// `(quantum, naive)` correlations of named observables `x`, `v`, `v^2`.
    fn correlation(&self, a: &str, b: &str) -> PyResult<(f64, f64)> {
        let (oa, ob) = (observable(&self.0.grid_a, a)?, observable(&self.0.grid_b, b)?);
        Ok((
            bell::quantum_correlation(&self.0, &oa, &ob).map_err(err)?,
            bell::bell_naive_correlation(&self.0, &oa, &ob).map_err(err)?,
        ))
    }
}

#[pyfunction]
#[pyo3(signature = (m, hbar, s, big_s))]
fn epr_velocity_covariance(m: f64, hbar: f64, s: f64, big_s: f64) -> f64 {
    bell::epr_velocity_covariance(m, hbar, s, big_s)
}

/// Runs a scenario file; returns `(exit code, report JSON or error text)`.
#[pyfunction]
fn run_scenario(path: PathBuf) -> (i32, String) {
    let (report, code, text) = harness::run_scenario(&path);
    match report {
        Some(r) => (code, report_json(&r)),
        None => (code, text),
    }
}

fn report_json(r: &harness::Report) -> String {
    std::fs::read_to_string(r.output_dir.join("report.json")).unwrap_or_else(|_| r.to_text())
}

#[pyfunction]
#[pyo3(signature = (module=None))]
fn list_checks(module: Option<&str>) -> Vec<(String, String, String)> {
    harness::list_checks(module).into_iter().map(|(a, b, c)| (a.into(), b.into(), c.into())).collect()
}

#[pymodule]
pub fn stochpath_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_class::<PyWaveFunction>()?;
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyTwoParticle>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(local_moments, m)?)?;
    m.add_function(wrap_pyfunction!(full_moments, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_potential, m)?)?;
    m.add_function(wrap_pyfunction!(drift_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(epr_velocity_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(list_checks, m)?)?;
    Ok(())
}
