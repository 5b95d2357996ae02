//! Closed-form values for the stationary Gaussian with σ = m = ħ = 1.
//! μ₂(x) = P(x)(½ − x²/4) with P(x) = e^{−x²/2}/√(2π).

use std::f64::consts::PI;

use stochpath::grid::Grid1D;
use stochpath::hamiltonian::HamiltonianSpec;
use stochpath::moments::{local_moments, MomentOrdering};
use stochpath::state::families::gaussian;

fn p(x: f64) -> f64 {
    (-x * x / 2.0).exp() / (2.0 * PI).sqrt()
}

#[test]
fn local_kinetic_density_minimum() {
    // d/dx[e^{−x²/2}(½ − x²/4)] = 0 at x² = 4
    let g = Grid1D::symmetric(512, 16.0).unwrap();
    let psi = gaussian(g, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
    let mu2 = local_moments(&psi, &h, 2, MomentOrdering::Operator).unwrap().mu(2).to_vec();
    let (j, min) = mu2.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (j, v)| if v < a.1 { (j, v) } else { a });
    assert!((g.x(j).abs() - 2.0).abs() <= g.dx());
    assert!((min + 0.5 * p(2.0)).abs() < 1e-6, "{min}");
    assert!(min < -0.01);
}

#[test]
fn lagrangian_density_at_origin() {
    let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
    let c = h.coefficients();
    let l = c.lagrangian_density(0.0, 0.0, p(0.0), 0.0, 0.5 * p(0.0));
    assert!((l - 0.0997356).abs() < 1e-6, "{l}");
}
