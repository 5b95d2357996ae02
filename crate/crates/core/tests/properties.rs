use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use stochpath::bell::{bell_naive_correlation, quantum_correlation, Observable, TwoParticleState};
use stochpath::evolution::{evolve, evolve_density, Integrator};
use stochpath::grid::{spectral_derivative, ComplexField, Grid1D};
use stochpath::hamiltonian::HamiltonianSpec;
use stochpath::hj::{drift_velocity, quantum_potential, support_mask};
use stochpath::moments::{full_moments_trace, generating_function, local_moments, MomentOrdering};
use stochpath::state::families::{gaussian, harmonic_eigenstate};
use stochpath::state::{density_from_mixture, density_from_pure, gauge_transform, Gauge, WaveFunction};

fn grid() -> Grid1D {
    Grid1D::symmetric(256, 24.0).unwrap()
}

fn packet() -> impl Strategy<Value = (f64, f64, f64)> {
    (-3.0..3.0f64, 0.6..1.8f64, -2.0..2.0f64)
}

fn integrator() -> impl Strategy<Value = Integrator> {
    prop_oneof![Just(Integrator::SplitStep), Just(Integrator::CrankNicolson)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pure_density_satisfies_axioms((x0, s, k0) in packet()) {
        let psi = gaussian(grid(), 1.0, 1.0, x0, s, k0).unwrap();
        let ax = density_from_pure(&psi).unwrap().check_axioms();
        prop_assert!(ax.hermiticity < 1e-12);
        prop_assert!((ax.trace - 1.0).abs() < 1e-10);
        prop_assert!(ax.min_eigenvalue > -1e-10);
    }

    #[test]
    fn evolution_preserves_norm((x0, s, k0) in packet(), omega in 0.0..1.0f64, integ in integrator()) {
        let psi = gaussian(grid(), 1.0, 1.0, x0, s, k0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, omega).unwrap();
        let out = evolve(&psi, &h, 2e-3, 25, integ).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evolution_is_linear(a in packet(), b in packet(), c in -1.0..1.0f64, integ in integrator()) {
        let g = grid();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 0.5).unwrap();
        let pa = gaussian(g, 1.0, 1.0, a.0, a.1, a.2).unwrap();
        let pb = gaussian(g, 1.0, 1.0, b.0, b.1, b.2).unwrap();
        let w = Complex64::new(c, 0.7);
        let sum = ComplexField::new(g, pa.values().iter().zip(pb.values()).map(|(x, y)| x + w * y).collect(), 0.0).unwrap();
        let norm = sum.norm_sqr().values.iter().sum::<f64>() * g.dx();
        prop_assume!(norm > 1e-3);
        let mixed = WaveFunction::normalized(sum, 1.0, 1.0).unwrap();
        let (ua, ub, um) = (
            evolve(&pa, &h, 2e-3, 10, integ).unwrap(),
            evolve(&pb, &h, 2e-3, 10, integ).unwrap(),
            evolve(&mixed, &h, 2e-3, 10, integ).unwrap(),
        );
        let scale = norm.sqrt();
        for j in 0..g.len() {
            let lin = (ua.values()[j] + w * ub.values()[j]) / scale;
            prop_assert!((um.values()[j] - lin).norm() < 1e-9);
        }
    }

    #[test]
    fn density_and_drift_are_gauge_invariant((x0, s, k0) in packet(), j in -3i32..=3) {
        let g = grid();
        let psi = gaussian(g, 1.0, 1.0, x0, s, k0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let (psi2, h2) = gauge_transform(&psi, &h, &Gauge::linear(2.0 * PI * j as f64 / g.length())).unwrap();
        let mask = support_mask(&psi.density().values, 1e-8);
        let (v1, v2) = (drift_velocity(&psi, &h), drift_velocity(&psi2, &h2));
        for k in 0..g.len() {
            prop_assert!((psi.density().values[k] - psi2.density().values[k]).abs() < 1e-14);
            if mask[k] {
                prop_assert!((v1[k] - v2[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn moment_routes_agree((x0, s, k0) in packet()) {
        let psi = gaussian(grid(), 1.0, 1.0, x0, s, k0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let local = local_moments(&psi, &h, 4, MomentOrdering::Operator).unwrap().full;
        let trace = full_moments_trace(&psi, &h, 4).unwrap();
        let gf = generating_function(&psi, &h, 0.4, 17).unwrap().moments(4);
        for n in 0..=4 {
            let scale = local[n].abs().max(1.0);
            prop_assert!((local[n] - trace[n]).abs() < 1e-8 * scale, "n={} {} {}", n, local[n], trace[n]);
            prop_assert!((local[n] - gf[n]).abs() < 1e-8 * scale, "n={} {} {}", n, local[n], gf[n]);
        }
    }

    #[test]
    fn quantum_potential_routes_agree((x0, s, k0) in packet(), omega in 0.0..1.0f64) {
        let psi = gaussian(grid(), 1.0, 1.0, x0, s, k0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, omega).unwrap();
        let out = evolve(&psi, &h, 1e-2, 20, Integrator::SplitStep).unwrap();
        prop_assert!(quantum_potential(&out, &h).unwrap().relative_disagreement() < 1e-7);
    }

    #[test]
    fn mixture_spectrum_is_conserved(w in 0.05..0.95f64, integ in integrator()) {
        let g = Grid1D::symmetric(64, 10.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let rho = density_from_mixture(&[
            (w, harmonic_eigenstate(g, 1.0, 1.0, 1.0, 0).unwrap()),
            (1.0 - w, gaussian(g, 1.0, 1.0, 1.0, 1.2, 0.5).unwrap()),
        ]).unwrap();
        let out = evolve_density(&rho, &h, 5e-3, 20, integ).unwrap();
        let (e0, e1) = (rho.eigenvalues(), out.eigenvalues());
        for (a, b) in e0.iter().zip(&e1).take(4) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn product_states_factorize_for_low_velocity_degree(a in packet(), b in packet()) {
        let g = Grid1D::symmetric(64, 12.0).unwrap();
        let pa = gaussian(g, 1.0, 1.0, a.0 * 0.5, a.1, a.2).unwrap();
        let pb = gaussian(g, 1.0, 1.0, b.0 * 0.5, b.1, b.2).unwrap();
        let st = TwoParticleState::product(&pa, &pb).unwrap();
        let x = Observable::position("x", &g, |x| x).unwrap();
        let x2 = Observable::position("x^2", &g, |x| x * x).unwrap();
        let v = Observable::velocity_power("v", &g, 1).unwrap();
        for (oa, ob) in [(&x, &x), (&x2, &x), (&v, &v), (&x, &v)] {
            let q = quantum_correlation(&st, oa, ob).unwrap();
            let n = bell_naive_correlation(&st, oa, ob).unwrap();
            prop_assert!((q - n).abs() < 1e-8, "{} {}: {} vs {}", oa.name, ob.name, q, n);
        }
    }

    #[test]
    fn spectral_derivative_is_exact_on_resolved_modes(k in 1usize..20, phase in 0.0..6.28f64) {
        let g = grid();
        let kk = 2.0 * PI * k as f64 / g.length();
        let f = ComplexField::from_fn(g, 0.0, |x| Complex64::new((kk * x + phase).sin(), 0.0)).unwrap();
        let d = spectral_derivative(&f, 1);
        for j in 0..g.len() {
            prop_assert!((d.values[j].re - kk * (kk * g.x(j) + phase).cos()).abs() < 1e-11);
        }
    }
}
