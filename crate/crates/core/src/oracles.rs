//! Closed-form solutions used as independent ground truth in checks.
//! Nothing here is used to produce headline results.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::grid::{ComplexField, Grid1D};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Freely spreading Gaussian packet started as
/// `(2πσ²)^{-1/4} exp(−(x−x₀)²/4σ² + ik₀x)` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadingGaussian {
    pub m: f64,
    pub hbar: f64,
    pub x0: f64,
    pub sigma: f64,
    pub k0: f64,
}

impl SpreadingGaussian {
    pub fn tau(&self, t: f64) -> f64 {
        self.hbar * t / (2.0 * self.m * self.sigma * self.sigma)
    }

    pub fn velocity(&self) -> f64 {
        self.hbar * self.k0 / self.m
    }

    pub fn center(&self, t: f64) -> f64 {
        self.x0 + self.velocity() * t
    }

    /// Position standard deviation `σ(t) = σ√(1 + τ²)`.
    pub fn width(&self, t: f64) -> f64 {
        self.sigma * (1.0 + self.tau(t).powi(2)).sqrt()
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let tau = self.tau(t);
        let q = Complex64::new(1.0, tau);
        let d = x - self.center(t);
        let pre = (TAU * self.sigma * self.sigma).powf(-0.25) / q.sqrt();
        pre * (-(d * d) / (4.0 * self.sigma * self.sigma * q) + I * (self.k0 * x - self.hbar * self.k0 * self.k0 * t / (2.0 * self.m))).exp()
    }

    pub fn field(&self, grid: Grid1D, t: f64) -> ComplexField {
        ComplexField { grid, values: grid.sample_complex(|x| self.psi(x, t)), time: t }
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        let s = self.width(t);
        (-(x - self.center(t)).powi(2) / (2.0 * s * s)).exp() / (TAU * s * s).sqrt()
    }

    /// Analytic `∂ₜP`.
    pub fn density_dt(&self, x: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let dtau = self.hbar / (2.0 * self.m * self.sigma * self.sigma);
        let s = self.width(t);
        let ds = self.sigma * tau * dtau / (1.0 + tau * tau).sqrt();
        let d = x - self.center(t);
        let v = self.velocity();
        self.density(x, t) * (-ds / s + d * v / (s * s) + d * d * ds / (s * s * s))
    }

    /// Unwrapped phase of `ψ` (so `S = ħ·phase`).
    pub fn phase(&self, x: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let d = x - self.center(t);
        self.k0 * x - self.hbar * self.k0 * self.k0 * t / (2.0 * self.m) - 0.5 * tau.atan()
            + d * d * tau / (4.0 * self.sigma * self.sigma * (1.0 + tau * tau))
    }

    /// Analytic `∂ₓS`.
    pub fn phase_gradient(&self, x: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let d = x - self.center(t);
        self.hbar * (self.k0 + d * tau / (2.0 * self.sigma * self.sigma * (1.0 + tau * tau)))
    }

    /// Drift-characteristic map from `t = 0`.
    pub fn transport(&self, x_initial: f64, t: f64) -> f64 {
        self.center(t) + (x_initial - self.x0) * self.width(t) / self.sigma
    }
}

/// Harmonic-oscillator coherent state whose initial wave function is the
/// ground state displaced to `x₀` with momentum `p₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentState {
    pub m: f64,
    pub hbar: f64,
    pub omega: f64,
    pub x0: f64,
    pub p0: f64,
}

impl CoherentState {
    pub fn center(&self, t: f64) -> f64 {
        let w = self.omega;
        self.x0 * (w * t).cos() + self.p0 / (self.m * w) * (w * t).sin()
    }

    pub fn momentum(&self, t: f64) -> f64 {
        let w = self.omega;
        self.p0 * (w * t).cos() - self.m * w * self.x0 * (w * t).sin()
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let (m, hb, w) = (self.m, self.hbar, self.omega);
        let (xc, pc) = (self.center(t), self.momentum(t));
        let n = (m * w / (PI * hb)).powf(0.25);
        let re = -m * w * (x - xc).powi(2) / (2.0 * hb);
        let im = pc * (x - xc) / hb + (pc * xc + self.p0 * self.x0) / (2.0 * hb) - 0.5 * w * t;
        n * Complex64::new(re, im).exp()
    }

    pub fn field(&self, grid: Grid1D, t: f64) -> ComplexField {
        ComplexField { grid, values: grid.sample_complex(|x| self.psi(x, t)), time: t }
    }

    /// Phase of `ψ` times ħ, unwrapped.
    pub fn action(&self, x: f64, t: f64) -> f64 {
        let (xc, pc) = (self.center(t), self.momentum(t));
        pc * (x - xc) + 0.5 * (pc * xc + self.p0 * self.x0) - 0.5 * self.hbar * self.omega * t
    }
}

/// Harmonic propagator `K(x, y; t)` (Mehler form), valid for
/// `sin ωt ≠ 0`.
pub fn mehler_kernel(m: f64, hbar: f64, omega: f64, t: f64, x: f64, y: f64) -> Complex64 {
    let s = (omega * t).sin();
    let c = (omega * t).cos();
    let pre = (Complex64::new(m * omega / (TAU * hbar * s), 0.0) / I).sqrt();
    pre * Complex64::from_polar(1.0, m * omega / (2.0 * hbar * s) * ((x * x + y * y) * c - 2.0 * x * y))
}

/// Energy `(n + ½)ħω` of the `n`-th oscillator eigenstate.
pub fn harmonic_energy(hbar: f64, omega: f64, n: usize) -> f64 {
    (n as f64 + 0.5) * hbar * omega
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve_split_step, free_propagator};
    use crate::hamiltonian::HamiltonianSpec;
    use crate::state::families;
    use crate::state::WaveFunction;

    #[test]
    fn spreading_gaussian_matches_free_evolution() {
        let g = Grid1D::symmetric(1024, 25.0).unwrap();
        let o = SpreadingGaussian { m: 1.0, hbar: 1.0, x0: -1.0, sigma: 1.0, k0: 1.5 };
        let psi = families::gaussian(g, 1.0, 1.0, -1.0, 1.0, 1.5).unwrap();
        let u = free_propagator(g, 1.0, 1.0, 1.0).unwrap().apply(&psi.field).unwrap();
        let exact = o.field(g, 1.0);
        let dev = u.values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "{dev}");
    }

    #[test]
    fn width_law() {
        let o = SpreadingGaussian { m: 2.0, hbar: 0.5, x0: 0.0, sigma: 0.7, k0: 0.0 };
        for t in [0.0, 0.5, 2.0] {
            let direct = o.sigma.powi(2) + (o.hbar * t / (2.0 * o.m * o.sigma)).powi(2);
            assert!((o.width(t).powi(2) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn density_dt_matches_difference_quotient() {
        let o = SpreadingGaussian { m: 1.0, hbar: 1.0, x0: 0.3, sigma: 1.0, k0: 0.8 };
        let h = 1e-5;
        for x in [-2.0, 0.0, 0.7, 3.0] {
            let fd = (o.density(x, 1.0 + h) - o.density(x, 1.0 - h)) / (2.0 * h);
            assert!((fd - o.density_dt(x, 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn coherent_state_matches_split_step() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let c = CoherentState { m: 1.0, hbar: 1.0, omega: 1.0, x0: 1.5, p0: -0.5 };
        let psi = WaveFunction::new(c.field(g, 0.0), 1.0, 1.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let out = evolve_split_step(&psi, &h, 1e-3, 2000).unwrap();
        let exact = c.field(g, 2.0);
        let dev = out.values().iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn mehler_kernel_propagates_a_gaussian() {
        let g = Grid1D::symmetric(1024, 16.0).unwrap();
        let (m, hb, w) = (1.0, 1.0, 1.0);
        let c = CoherentState { m, hbar: hb, omega: w, x0: 1.0, p0: 0.0 };
        let t = PI / 4.0;
        let psi0 = c.field(g, 0.0);
        for x in [-1.0, 0.0, 0.5, 1.5] {
            let v: Complex64 = (0..g.len()).map(|j| mehler_kernel(m, hb, w, t, x, g.x(j)) * psi0.values[j]).sum::<Complex64>() * g.dx();
            assert!((v - c.psi(x, t)).norm() < 1e-10, "x={x}");
        }
    }
}
