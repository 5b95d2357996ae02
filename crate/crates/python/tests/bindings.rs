use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_round_trip() {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(stochpath_py::stochpath_py)(py);
        let locals = PyDict::new(py);
        locals.set_item("sp", m).unwrap();
        py.run(
            cr#"
g = sp.Grid(256, -16.0, 16.0)
psi = sp.WaveFunction.gaussian(g, 1.0)
h = sp.Hamiltonian.free()
out = sp.evolve(psi, h, 1e-3, 50)
assert abs(out.norm() - 1.0) < 1e-10
amp, fluct, d = sp.quantum_potential(psi, h)
assert d < 1e-7
assert abs(amp[128] - 0.25) < 1e-6
assert abs(sp.full_moments(psi, h, 2)[2] - 0.25) < 1e-10
rho = sp.DensityMatrix.from_mixture([(0.5, psi), (0.5, out)])
assert abs(rho.trace() - 1.0) < 1e-9
"#,
            None,
            Some(&locals),
        )
        .unwrap();
    });
}
