//! Time evolution under the minimally coupled Schrödinger equation
//! `iħ∂ₜψ = [(−iħ∂ₓ − eA)²/2m + eφ + V]ψ`.
//!
//! Two independent integrators are provided: Strang split-step Fourier
//! (uniform `A` only) and Crank–Nicolson with a spectral covariant kinetic
//! operator (any quadratic Hamiltonian). Potentials are sampled at step
//! midpoints.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fft_in_place, ifft_in_place, ComplexField, Grid1D};
use crate::hamiltonian::HamiltonianSpec;
use crate::state::{DensityMatrix, WaveFunction};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    SplitStep,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorMethod {
    ClosedFormFree,
    ClosedFormHarmonic,
    SplitStep,
    CrankNicolson,
}

/// Materialized `U(x'; x)` for one time interval; rows indexed by `x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorKernel {
    pub grid: Grid1D,
    pub values: DMatrix<Complex64>,
    pub dt: f64,
    pub method: PropagatorMethod,
}

impl PropagatorKernel {
    /// `ψ'(x') = Σₓ U(x'; x) ψ(x) dx`.
    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        crate::grid::ensure_same_grid(&self.grid, &f.grid)?;
        let v = nalgebra::DVector::from_column_slice(&f.values);
        let out = &self.values * v * Complex64::new(self.grid.dx(), 0.0);
        Ok(ComplexField { grid: self.grid, values: out.iter().copied().collect(), time: f.time + self.dt })
    }
}

fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::BadTimeStep(dt))
    }
}

/// Continuum free kernel `√(m/2πiħΔt)·exp(imδx²/2ħΔt)`.
pub fn free_kernel_closed_form(m: f64, hbar: f64, dt: f64, dx_offset: f64) -> Complex64 {
    let pref = (Complex64::new(m / (std::f64::consts::TAU * hbar * dt), 0.0) / I).sqrt();
    pref * Complex64::from_polar(1.0, m * dx_offset * dx_offset / (2.0 * hbar * dt))
}

/// Free propagator on the periodic grid: the band-limited sum of the
/// continuum kernel over all periodic images,
/// `(1/L) Σₖ e^{ik(x'−x)} e^{−iħk²Δt/2m}`.
pub fn free_propagator(grid: Grid1D, m: f64, hbar: f64, dt: f64) -> Result<PropagatorKernel> {
    check_step(dt)?;
    let n = grid.len();
    let mut col: Vec<Complex64> =
        (0..n).map(|j| Complex64::from_polar(1.0, -hbar * grid.k(j).powi(2) * dt / (2.0 * m))).collect();
    ifft_in_place(&mut col);
    let s = n as f64 / grid.length();
    let values = DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n] * s);
    Ok(PropagatorKernel { grid, values, dt, method: PropagatorMethod::ClosedFormFree })
}

/// `max |M†M − I|` with `M = U·dx`.
pub fn unitarity_check(u: &PropagatorKernel) -> f64 {
    let m = &u.values * Complex64::new(u.grid.dx(), 0.0);
    let p = m.adjoint() * &m;
    let n = p.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            dev = dev.max((p[(i, j)] - target).norm());
        }
    }
    dev
}

struct StepData {
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

fn split_step_data(g: &Grid1D, ham: &HamiltonianSpec, t_mid: f64, dt: f64) -> StepData {
    let (m, hbar) = (ham.m, ham.hbar);
    let half_potential = g.sample(|x| ham.potential_energy(x, t_mid)).into_iter().map(|u| Complex64::from_polar(1.0, -u * dt / (2.0 * hbar))).collect();
    let ea = if ham.has_vector_potential() { ham.ea(0.0, t_mid) } else { 0.0 };
    let kinetic = (0..g.len())
        .map(|j| {
            let p = hbar * g.k(j) - ea;
            Complex64::from_polar(1.0, -p * p * dt / (2.0 * m * hbar))
        })
        .collect();
    StepData { half_potential, kinetic }
}

fn split_step_raw(buf: &mut [Complex64], g: &Grid1D, ham: &HamiltonianSpec, t0: f64, dt: f64, n_steps: usize) {
    let fixed = if ham.is_static() { Some(split_step_data(g, ham, 0.0, dt)) } else { None };
    for s in 0..n_steps {
        let owned;
        let d = match &fixed {
            Some(d) => d,
            None => {
                owned = split_step_data(g, ham, t0 + (s as f64 + 0.5) * dt, dt);
                &owned
            }
        };
        buf.iter_mut().zip(&d.half_potential).for_each(|(v, p)| *v *= p);
        fft_in_place(buf);
        buf.iter_mut().zip(&d.kinetic).for_each(|(v, p)| *v *= p);
        ifft_in_place(buf);
        buf.iter_mut().zip(&d.half_potential).for_each(|(v, p)| *v *= p);
    }
}

fn ensure_split_step(ham: &HamiltonianSpec) -> Result<()> {
    ham.ensure_quadratic()?;
    if ham.has_vector_potential() && !ham.a.is_uniform() {
        return Err(Error::UnsupportedProcess(
            "split-step evolution needs a spatially uniform vector potential; use Crank-Nicolson".into(),
        ));
    }
    Ok(())
}

/// Strang-split Fourier evolution over `n_steps` steps of `dt`.
pub fn evolve_split_step(psi: &WaveFunction, ham: &HamiltonianSpec, dt: f64, n_steps: usize) -> Result<WaveFunction> {
    check_step(dt)?;
    evolve_signed(psi, ham, dt, n_steps, Integrator::SplitStep)
}

struct CnOperator {
    g: Grid1D,
    m: f64,
    hbar: f64,
    u: Vec<f64>,
    ea: Vec<f64>,
    uniform_ea: Option<f64>,
    coef: f64,
    precond: Vec<Complex64>,
}

impl CnOperator {
    fn new(g: Grid1D, ham: &HamiltonianSpec, t_mid: f64, dt: f64) -> Self {
        let u = ham.sample_potential_energy(&g, t_mid);
        let ea = ham.sample_ea(&g, t_mid);
        let uniform_ea = if !ham.has_vector_potential() || ham.a.is_uniform() { Some(ea[0]) } else { None };
        let mean_ea = ea.iter().sum::<f64>() / ea.len() as f64;
        let coef = dt / (2.0 * ham.hbar);
        let precond = (0..g.len())
            .map(|j| {
                let p = ham.hbar * g.k(j) - mean_ea;
                1.0 / (1.0 + I * coef * p * p / (2.0 * ham.m))
            })
            .collect();
        Self { g, m: ham.m, hbar: ham.hbar, u, ea, uniform_ea, coef, precond }
    }

    fn kinetic(&self, x: &[Complex64]) -> Vec<Complex64> {
        let g = &self.g;
        let mut buf = x.to_vec();
        fft_in_place(&mut buf);
        if let Some(ea) = self.uniform_ea {
            buf.iter_mut().enumerate().for_each(|(j, v)| {
                let p = self.hbar * g.k(j) - ea;
                *v *= p * p / (2.0 * self.m);
            });
            ifft_in_place(&mut buf);
            return buf;
        }
        // D = −iħ∂ₓ − eA applied twice
        let d = |spec: &mut Vec<Complex64>, phys: &[Complex64]| -> Vec<Complex64> {
            spec.iter_mut().enumerate().for_each(|(j, v)| *v *= self.hbar * g.derivative_multiplier(j, 1) * -I);
            ifft_in_place(spec);
            spec.iter().zip(phys).zip(&self.ea).map(|((a, b), ea)| a - b * ea).collect()
        };
        let dx = d(&mut buf, x);
        let mut buf2 = dx.clone();
        fft_in_place(&mut buf2);
        d(&mut buf2, &dx).into_iter().map(|v| v / (2.0 * self.m)).collect()
    }

    fn h(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut k = self.kinetic(x);
        k.iter_mut().zip(x).zip(&self.u).for_each(|((k, x), u)| *k += x * u);
        k
    }

    /// `(1 + s·iH·dt/2ħ) x`.
    fn cayley(&self, x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let h = self.h(x);
        x.iter().zip(h).map(|(x, h)| x + I * (sign * self.coef) * h).collect()
    }

    fn apply_precond(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        fft_in_place(&mut buf);
        buf.iter_mut().zip(&self.precond).for_each(|(v, p)| *v *= p);
        ifft_in_place(&mut buf);
        buf
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(a, b)| a.conj() * b).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

const CN_TOL: f64 = 1e-13;
const CN_ACCEPT: f64 = 1e-11;
const CN_MAX_ITER: usize = 500;

/// Right-preconditioned BiCGSTAB for `(1 + iHδ)x = b`.
fn bicgstab(op: &CnOperator, b: &[Complex64], x0: &[Complex64]) -> Result<Vec<Complex64>> {
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    let ax = op.cayley(&x, 1.0);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rhat = r.clone();
    let n = b.len();
    let (mut rho, mut alpha, mut omega) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    let mut p = v.clone();
    let mut best = (norm(&r), x.clone());
    for it in 0..CN_MAX_ITER {
        let res = norm(&r);
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= CN_TOL * bnorm {
            return Ok(x);
        }
        let rho_new = dot(&rhat, &r);
        if rho_new.norm() == 0.0 || omega.norm() == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = op.apply_precond(&p);
        v = op.cayley(&y, 1.0);
        let denom = dot(&rhat, &v);
        if denom.norm() == 0.0 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<Complex64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if norm(&s) <= CN_TOL * bnorm {
            x.iter_mut().zip(&y).for_each(|(x, y)| *x += alpha * y);
            return Ok(x);
        }
        let z = op.apply_precond(&s);
        let t = op.cayley(&z, 1.0);
        let tt = dot(&t, &t);
        omega = if tt.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if it + 1 == CN_MAX_ITER {
            break;
        }
    }
    // stagnation at rounding level is accepted
    if best.0 <= CN_ACCEPT * bnorm {
        return Ok(best.1);
    }
    Err(Error::SolverError { residual: best.0 / bnorm, iterations: CN_MAX_ITER })
}

fn crank_nicolson_raw(buf: &mut Vec<Complex64>, g: &Grid1D, ham: &HamiltonianSpec, t0: f64, dt: f64, n_steps: usize) -> Result<()> {
    let fixed = if ham.is_static() { Some(CnOperator::new(*g, ham, 0.0, dt)) } else { None };
    for s in 0..n_steps {
        let owned;
        let op = match &fixed {
            Some(op) => op,
            None => {
                owned = CnOperator::new(*g, ham, t0 + (s as f64 + 0.5) * dt, dt);
                &owned
            }
        };
        let rhs = op.cayley(buf, -1.0);
        *buf = bicgstab(op, &rhs, buf)?;
    }
    Ok(())
}

/// Crank–Nicolson (Cayley) evolution over `n_steps` steps of `dt`.
pub fn evolve_crank_nicolson(psi: &WaveFunction, ham: &HamiltonianSpec, dt: f64, n_steps: usize) -> Result<WaveFunction> {
    check_step(dt)?;
    evolve_signed(psi, ham, dt, n_steps, Integrator::CrankNicolson)
}

pub fn evolve(psi: &WaveFunction, ham: &HamiltonianSpec, dt: f64, n_steps: usize, integrator: Integrator) -> Result<WaveFunction> {
    check_step(dt)?;
    evolve_signed(psi, ham, dt, n_steps, integrator)
}

/// Like [`evolve`] but also accepts a negative `dt` (backward evolution).
pub fn evolve_signed(psi: &WaveFunction, ham: &HamiltonianSpec, dt: f64, n_steps: usize, integrator: Integrator) -> Result<WaveFunction> {
    let mut f = psi.field.clone();
    evolve_field(&mut f, ham, dt, n_steps, integrator)?;
    Ok(WaveFunction::from_parts(f, psi.m, psi.hbar))
}

pub(crate) fn evolve_field(f: &mut ComplexField, ham: &HamiltonianSpec, dt: f64, n_steps: usize, integrator: Integrator) -> Result<()> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::BadTimeStep(dt));
    }
    let g = f.grid;
    match integrator {
        Integrator::SplitStep => {
            ensure_split_step(ham)?;
            split_step_raw(&mut f.values, &g, ham, f.time, dt, n_steps);
        }
        Integrator::CrankNicolson => {
            ham.ensure_quadratic()?;
            crank_nicolson_raw(&mut f.values, &g, ham, f.time, dt, n_steps)?;
        }
    }
    f.time += dt * n_steps as f64;
    Ok(())
}

/// Slices at `t₀ + j·dt` for `j = −half..=half`, each reached with
/// `substeps` integrator steps per interval.
pub fn centered_series(
    psi: &WaveFunction,
    ham: &HamiltonianSpec,
    dt: f64,
    half: usize,
    substeps: usize,
    integrator: Integrator,
) -> Result<Vec<WaveFunction>> {
    check_step(dt)?;
    let h = dt / substeps as f64;
    let mut back = Vec::with_capacity(half);
    let mut cur = psi.clone();
    for _ in 0..half {
        cur = evolve_signed(&cur, ham, -h, substeps, integrator)?;
        back.push(cur.clone());
    }
    back.reverse();
    back.push(psi.clone());
    let mut cur = psi.clone();
    for _ in 0..half {
        cur = evolve_signed(&cur, ham, h, substeps, integrator)?;
        back.push(cur.clone());
    }
    Ok(back)
}

/// One-step kernel of an integrator, materialized column by column.
pub fn integrator_kernel(grid: Grid1D, ham: &HamiltonianSpec, dt: f64, t0: f64, integrator: Integrator) -> Result<PropagatorKernel> {
    check_step(dt)?;
    let n = grid.len();
    let inv_dx = 1.0 / grid.dx();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut f = ComplexField::zeros(grid, t0);
            f.values[j] = Complex64::new(inv_dx, 0.0);
            evolve_field(&mut f, ham, dt, 1, integrator).map(|_| f.values)
        })
        .collect::<Result<_>>()?;
    let values = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    let method = match integrator {
        Integrator::SplitStep => PropagatorMethod::SplitStep,
        Integrator::CrankNicolson => PropagatorMethod::CrankNicolson,
    };
    Ok(PropagatorKernel { grid, values, dt, method })
}

fn evolve_columns(kernel: &DMatrix<Complex64>, grid: Grid1D, t0: f64, ham: &HamiltonianSpec, dt: f64, n_steps: usize, integrator: Integrator) -> Result<DMatrix<Complex64>> {
    let n = grid.len();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut f = ComplexField { grid, values: kernel.column(j).iter().copied().collect(), time: t0 };
            evolve_field(&mut f, ham, dt, n_steps, integrator).map(|_| f.values)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// `ρ → UρU†`, with `U` applied to the columns of `ρ` and then to the
/// columns of `(Uρ)†`.
pub fn evolve_density(rho: &DensityMatrix, ham: &HamiltonianSpec, dt: f64, n_steps: usize, integrator: Integrator) -> Result<DensityMatrix> {
    check_step(dt)?;
    let b = evolve_columns(&rho.kernel, rho.grid, rho.time, ham, dt, n_steps, integrator)?;
    let c = evolve_columns(&b.adjoint(), rho.grid, rho.time, ham, dt, n_steps, integrator)?;
    Ok(DensityMatrix { grid: rho.grid, kernel: c.adjoint(), time: rho.time + dt * n_steps as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner;
    use crate::state::families::*;
    use crate::state::density_from_pure;

    #[test]
    fn free_kernel_modulus_at_origin() {
        let u = free_kernel_closed_form(1.0, 1.0, 1.0, 0.0);
        assert!((u.norm() - 1.0 / (std::f64::consts::TAU).sqrt()).abs() < 1e-15);
        assert!((u.norm() - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn bad_time_step() {
        let g = Grid1D::symmetric(64, 5.0).unwrap();
        assert!(matches!(free_propagator(g, 1.0, 1.0, 0.0), Err(Error::BadTimeStep(_))));
        assert!(matches!(free_propagator(g, 1.0, 1.0, -1.0), Err(Error::BadTimeStep(_))));
    }

    #[test]
    fn free_kernel_multiplies_plane_waves() {
        let g = Grid1D::symmetric(128, 10.0).unwrap();
        let psi = plane_wave(g, 1.0, 1.0, 9).unwrap();
        let k = g.k(9);
        let u = free_propagator(g, 1.0, 1.0, 0.3).unwrap();
        let out = u.apply(&psi.field).unwrap();
        let ph = Complex64::from_polar(1.0, -k * k * 0.3 / 2.0);
        for (o, p) in out.values.iter().zip(psi.values()) {
            assert!((o - p * ph).norm() < 1e-10 * p.norm().max(1.0));
        }
    }

    #[test]
    fn free_kernel_matches_continuum_near_the_diagonal() {
        // wide box so the nearest image is far away; only sample offsets
        // well below the grid's maximum resolvable ray slope
        let g = Grid1D::symmetric(1024, 40.0).unwrap();
        let u = free_propagator(g, 1.0, 1.0, 1.0).unwrap();
        let i0 = g.nearest_index(0.0);
        for d in [0usize, 3, 10] {
            let x = g.x(i0 + d) - g.x(i0);
            let exact = free_kernel_closed_form(1.0, 1.0, 1.0, x);
            assert!((u.values[(i0 + d, i0)] - exact).norm() < 2e-2, "offset {x}");
        }
    }

    #[test]
    fn short_time_kernel_is_identity() {
        let g = Grid1D::symmetric(256, 10.0).unwrap();
        let psi = gaussian(g, 1.0, 1.0, 0.0, 0.3, 0.0).unwrap();
        let out = free_propagator(g, 1.0, 1.0, 1e-12).unwrap().apply(&psi.field).unwrap();
        for (o, p) in out.values.iter().zip(psi.values()) {
            assert!((o - p).norm() < 1e-8);
        }
    }

    #[test]
    fn damped_kernel_is_flagged() {
        let g = Grid1D::symmetric(64, 8.0).unwrap();
        let mut u = free_propagator(g, 1.0, 1.0, 0.5).unwrap();
        assert!(unitarity_check(&u) < 1e-12);
        u.values *= Complex64::new(0.99, 0.0);
        assert!((unitarity_check(&u) - 0.0199).abs() < 1e-10);
    }

    #[test]
    fn crank_nicolson_kernel_is_unitary() {
        let g = Grid1D::symmetric(128, 10.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 0.5).unwrap();
        let u = integrator_kernel(g, &h, 0.01, 0.0, Integrator::CrankNicolson).unwrap();
        assert!(unitarity_check(&u) < 1e-10);
    }

    #[test]
    fn split_step_norm_is_preserved() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = coherent(g, 1.0, 1.0, 1.0, 2.0, 0.0).unwrap();
        let out = evolve_split_step(&psi, &h, 0.01, 100).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-11 * 100.0);
    }

    #[test]
    fn stationary_state_picks_up_only_a_phase() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = harmonic_eigenstate(g, 1.0, 1.0, 1.0, 1).unwrap();
        let t = 1.0;
        let out = evolve_split_step(&psi, &h, 1e-3, 1000).unwrap();
        let ph = Complex64::from_polar(1.0, -1.5 * t);
        let dev = out.values().iter().zip(psi.values()).map(|(o, p)| (o - p * ph).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-7, "{dev}");
    }

    #[test]
    fn integrators_agree_on_potential_only_problem() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = coherent(g, 1.0, 1.0, 1.0, 1.5, 0.5).unwrap();
        let a = evolve_split_step(&psi, &h, 5e-4, 1000).unwrap();
        let b = evolve_crank_nicolson(&psi, &h, 5e-4, 1000).unwrap();
        let diff = a.field.zip_with(&b.field, |x, y| x - y).unwrap();
        let l2 = inner(&diff, &diff).unwrap().re.sqrt();
        assert!(l2 < 1e-6, "{l2}");
    }

    #[test]
    fn pure_density_evolution_is_rank_one_consistent() {
        let g = Grid1D::symmetric(64, 8.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = coherent(g, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let rho = density_from_pure(&psi).unwrap();
        let r1 = evolve_density(&rho, &h, 0.01, 10, Integrator::SplitStep).unwrap();
        let p1 = evolve_split_step(&psi, &h, 0.01, 10).unwrap();
        let r2 = density_from_pure(&p1).unwrap();
        assert!(r1.max_abs_diff(&r2) < 1e-8);
    }

    #[test]
    fn nonuniform_vector_potential_needs_crank_nicolson() {
        let g = Grid1D::symmetric(64, 8.0).unwrap();
        let mut h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        h.a = crate::hamiltonian::SpaceTimeFn::static_fn("x", |x| 0.1 * x);
        let psi = gaussian(g, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(evolve_split_step(&psi, &h, 0.01, 1), Err(Error::UnsupportedProcess(_))));
        assert!(evolve_crank_nicolson(&psi, &h, 0.01, 1).is_ok());
    }
}
