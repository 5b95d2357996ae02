//! Madelung / Hamilton–Jacobi layer: drift velocity, quantum potential,
//! quantum and classical Hamilton–Jacobi equations, ħ-scaling and transport
//! of samples along the drift field.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{centered_series, evolve, evolve_signed, Integrator};
use crate::extrapolate::loglog_slope;
use crate::grid::{central_weights, spectral_derivative, spectral_derivative_real, ComplexField, Grid1D, RealField};
use crate::hamiltonian::HamiltonianSpec;
use crate::moments::{local_moments, MomentOrdering};
use crate::state::{families, gauge_transform, Gauge, WaveFunction};

/// Mask of cells with `P > rel·max P`.
pub fn support_mask(p: &[f64], rel: f64) -> Vec<bool> {
    let pmax = p.iter().copied().fold(0.0, f64::max);
    p.iter().map(|&v| v > rel * pmax).collect()
}

/// `max |a − b|` over the mask divided by `max |b|` over the mask.
pub fn masked_relative_error(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for ((x, y), &m) in a.iter().zip(b).zip(mask) {
        if m {
            num = num.max((x - y).abs());
            den = den.max(y.abs());
        }
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `∂ₓS = ħ Im(ψ*∂ₓψ)/|ψ|²`, set to zero where `ψ = 0`.
pub fn phase_gradient(f: &ComplexField, hbar: f64) -> Vec<f64> {
    let d = spectral_derivative(f, 1);
    f.values
        .iter()
        .zip(&d.values)
        .map(|(v, dv)| {
            let p = v.norm_sqr();
            if p > 0.0 {
                hbar * (v.conj() * dv).im / p
            } else {
                0.0
            }
        })
        .collect()
}

/// Drift `⟨v⟩ = (∂ₓS − eA)/m`.
pub fn drift_velocity(psi: &WaveFunction, ham: &HamiltonianSpec) -> Vec<f64> {
    let ea = ham.sample_ea(&psi.grid(), psi.time());
    phase_gradient(&psi.field, ham.hbar).iter().zip(&ea).map(|(s, a)| (s - a) / ham.m).collect()
}

/// Both evaluations of the quantum potential on the support
/// `P > 1e−8·max P` (zero elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPotential {
    pub grid: Grid1D,
    /// `−ħ²/2m · r″/r`.
    pub amplitude: Vec<f64>,
    /// `½m(μ₂/μ₀ − (μ₁/μ₀)²)`.
    pub fluctuation: Vec<f64>,
    pub mask: Vec<bool>,
}

impl QuantumPotential {
    pub fn relative_disagreement(&self) -> f64 {
        masked_relative_error(&self.fluctuation, &self.amplitude, &self.mask)
    }

    pub fn at(&self, x: f64) -> f64 {
        self.amplitude[self.grid.nearest_index(x)]
    }
}

pub const QP_SUPPORT: f64 = 1e-8;

fn amplitude_second_derivative(psi: &WaveFunction) -> (RealField, RealField) {
    let r = RealField { grid: psi.grid(), values: psi.values().iter().map(|v| v.norm()).collect(), time: psi.time() };
    let r2 = spectral_derivative_real(&r, 2);
    (r, r2)
}

pub fn quantum_potential(psi: &WaveFunction, ham: &HamiltonianSpec) -> Result<QuantumPotential> {
    let (r, r2) = amplitude_second_derivative(psi);
    let mf = local_moments(psi, ham, 2, MomentOrdering::Operator)?;
    let mask = support_mask(mf.mu(0), QP_SUPPORT);
    let k = ham.hbar * ham.hbar / (2.0 * ham.m);
    let n = psi.grid().len();
    let mut amplitude = vec![0.0; n];
    let mut fluctuation = vec![0.0; n];
    for i in 0..n {
        if mask[i] {
            amplitude[i] = -k * r2.values[i] / r.values[i];
            let p = mf.mu(0)[i];
            let v = mf.mu(1)[i] / p;
            fluctuation[i] = 0.5 * ham.m * (mf.mu(2)[i] / p - v * v);
        }
    }
    Ok(QuantumPotential { grid: psi.grid(), amplitude, fluctuation, mask })
}

/// Field content of the Madelung picture at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct HjFields {
    pub s_x: Vec<f64>,
    pub drift: Vec<f64>,
    pub v_q: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn hj_fields(psi: &WaveFunction, ham: &HamiltonianSpec) -> Result<HjFields> {
    let qp = quantum_potential(psi, ham)?;
    Ok(HjFields { s_x: phase_gradient(&psi.field, ham.hbar), drift: drift_velocity(psi, ham), v_q: qp.amplitude, mask: qp.mask })
}

/// Shortest-jump increment `arg(b·a*)` per cell.
fn phase_increment(a: &ComplexField, b: &ComplexField) -> Vec<f64> {
    a.values.iter().zip(&b.values).map(|(a, b)| (b * a.conj()).arg()).collect()
}

/// `∂ₜS` at the middle slice of an equally spaced series by central
/// differences of cellwise phase increments.
pub fn action_time_derivative(series: &[WaveFunction], dt: f64, mask: &[bool]) -> Result<Vec<f64>> {
    let len = series.len();
    let w = central_weights(1, len, dt)?;
    let mid = &series[len / 2];
    let hbar = mid.hbar;
    let incs: Vec<Vec<f64>> = series.iter().map(|s| phase_increment(&mid.field, &s.field)).collect();
    let mut jump = 0.0f64;
    for (k, inc) in incs.iter().enumerate() {
        let steps = (k as f64 - (len / 2) as f64).abs().max(1.0);
        for (v, &m) in inc.iter().zip(mask) {
            if m {
                jump = jump.max(v.abs() / steps);
            }
        }
    }
    if jump > std::f64::consts::FRAC_PI_2 / (len / 2) as f64 {
        return Err(Error::PhaseContinuityError { jump });
    }
    let n = mid.grid().len();
    Ok((0..n).map(|i| hbar * w.iter().zip(&incs).map(|(w, inc)| w * inc[i]).sum::<f64>()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjResidual {
    pub l1: f64,
    pub linf: f64,
    pub residual: Vec<f64>,
    pub mask: Vec<bool>,
}

pub const HJ_SUPPORT: f64 = 1e-6;

/// `−∂ₜS − [(∂ₓS − eA)²/2m − ħ²r″/2mr + eφ + V]` at the middle slice, on
/// `P > 1e−6·max P`.
pub fn quantum_hj_residual(series: &[WaveFunction], dt: f64, ham: &HamiltonianSpec) -> Result<HjResidual> {
    if series.len() < 3 {
        return Err(Error::StencilTooShort { order: 1, needed: 3, got: series.len() });
    }
    let mid = &series[series.len() / 2];
    let g = mid.grid();
    let p: Vec<f64> = mid.values().iter().map(|v| v.norm_sqr()).collect();
    let mask = support_mask(&p, HJ_SUPPORT);
    let s_t = action_time_derivative(series, dt, &mask)?;
    let s_x = phase_gradient(&mid.field, ham.hbar);
    let (r, r2) = amplitude_second_derivative(mid);
    let ea = ham.sample_ea(&g, mid.time());
    let u = ham.sample_potential_energy(&g, mid.time());
    let k = ham.hbar * ham.hbar / (2.0 * ham.m);
    let mut residual = vec![0.0; g.len()];
    let (mut l1, mut linf) = (0.0, 0.0f64);
    for i in 0..g.len() {
        if mask[i] {
            let rhs = (s_x[i] - ea[i]).powi(2) / (2.0 * ham.m) - k * r2.values[i] / r.values[i] + u[i];
            residual[i] = -s_t[i] - rhs;
            l1 += residual[i].abs() * g.dx();
            linf = linf.max(residual[i].abs());
        }
    }
    Ok(HjResidual { l1, linf, residual, mask })
}

/// Initial action `S₀(x)` with its derivative.
pub struct InitialAction {
    pub value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub derivative: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl InitialAction {
    pub fn new<F, G>(value: F, derivative: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { value: Box::new(value), derivative: Box::new(derivative) }
    }

    /// `S₀ = p₀x`.
    pub fn linear(p0: f64) -> Self {
        Self::new(move |x| p0 * x, move |_| p0)
    }

    /// `S₀ = p₀x + ½κx²`.
    pub fn quadratic(p0: f64, kappa: f64) -> Self {
        Self::new(move |x| p0 * x + 0.5 * kappa * x * x, move |x| p0 + kappa * x)
    }
}

/// Characteristics of the classical Hamilton–Jacobi equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalHJSolution {
    pub times: Vec<f64>,
    /// `x[step][ray]`.
    pub x: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    /// Action accumulated along each ray, `S₀(x₀) + ∫(pẋ − H)dt`.
    pub s: Vec<Vec<f64>>,
}

impl ClassicalHJSolution {
    pub fn final_index(&self) -> usize {
        self.times.len() - 1
    }

    /// `S_cl` and `∂ₓS_cl` at `x` at time step `k`, by cubic Hermite
    /// interpolation between rays. `None` outside the ray fan.
    pub fn sample(&self, k: usize, x: f64) -> Option<(f64, f64)> {
        let xs = &self.x[k];
        let n = xs.len();
        if n < 2 || x < xs[0] || x > xs[n - 1] {
            return None;
        }
        let j = xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (xs[j], xs[j + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (s0, s1, p0, p1) = (self.s[k][j], self.s[k][j + 1], self.p[k][j], self.p[k][j + 1]);
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        let s = h00 * s0 + h10 * h * p0 + h01 * s1 + h11 * h * p1;
        Some((s, p0 + (p1 - p0) * t))
    }

    /// `max |p − ∂ₓS|` along rays, with `∂ₓS` from centered differences of
    /// the ray actions.
    pub fn gradient_consistency(&self, k: usize) -> f64 {
        let (x, s, p) = (&self.x[k], &self.s[k], &self.p[k]);
        (1..x.len().saturating_sub(1))
            .map(|j| {
                // second-order nonuniform difference
                let (h0, h1) = (x[j] - x[j - 1], x[j + 1] - x[j]);
                let d = (h0 * h0 * s[j + 1] - h1 * h1 * s[j - 1] + (h1 * h1 - h0 * h0) * s[j]) / (h0 * h1 * (h0 + h1));
                (d - p[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn hamilton_rhs(ham: &HamiltonianSpec, x: f64, p: f64, t: f64) -> (f64, f64, f64) {
    let ea = ham.ea(x, t);
    let pi = p - ea;
    let xdot = pi / ham.m;
    let dea = if ham.has_vector_potential() { ham.e * ham.a.dx(x, t) } else { 0.0 };
    let pdot = pi * dea / ham.m - ham.potential_energy_dx(x, t);
    let h = pi * pi / (2.0 * ham.m) + ham.potential_energy(x, t);
    (xdot, pdot, p * xdot - h)
}

/// Method of characteristics for `−∂ₜS = (∂ₓS − eA)²/2m + eφ + V` with
/// rays launched from `starts`, RK4 with `n_steps` steps. Stops with
/// [`Error::CausticError`] at the first crossing of adjacent rays.
pub fn classical_hj_solve(ham: &HamiltonianSpec, s0: &InitialAction, starts: &[f64], t_final: f64, n_steps: usize) -> Result<ClassicalHJSolution> {
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::BadTimeStep(t_final));
    }
    if starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ray start points must be strictly increasing".into()));
    }
    let dt = t_final / n_steps as f64;
    let mut x: Vec<f64> = starts.to_vec();
    let mut p: Vec<f64> = starts.iter().map(|&x| (s0.derivative)(x)).collect();
    let mut s: Vec<f64> = starts.iter().map(|&x| (s0.value)(x)).collect();
    let mut sol = ClassicalHJSolution { times: vec![0.0], x: vec![x.clone()], p: vec![p.clone()], s: vec![s.clone()] };
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let next: Vec<(f64, f64, f64)> = (0..x.len())
            .into_par_iter()
            .map(|j| {
                let (x0, p0) = (x[j], p[j]);
                let k1 = hamilton_rhs(ham, x0, p0, t);
                let k2 = hamilton_rhs(ham, x0 + 0.5 * dt * k1.0, p0 + 0.5 * dt * k1.1, t + 0.5 * dt);
                let k3 = hamilton_rhs(ham, x0 + 0.5 * dt * k2.0, p0 + 0.5 * dt * k2.1, t + 0.5 * dt);
                let k4 = hamilton_rhs(ham, x0 + dt * k3.0, p0 + dt * k3.1, t + dt);
                (
                    x0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                    p0 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                    dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
                )
            })
            .collect();
        let new_x: Vec<f64> = next.iter().map(|n| n.0).collect();
        let mut t_caustic = f64::INFINITY;
        for j in 0..x.len().saturating_sub(1) {
            let (g0, g1) = (x[j + 1] - x[j], new_x[j + 1] - new_x[j]);
            if g1 <= 0.0 {
                t_caustic = t_caustic.min(t + dt * g0 / (g0 - g1));
            }
        }
        if t_caustic.is_finite() {
            return Err(Error::CausticError { t_caustic });
        }
        x = new_x;
        p = next.iter().map(|n| n.1).collect();
        s.iter_mut().zip(&next).for_each(|(s, n)| *s += n.2);
        sol.times.push(t + dt);
        sol.x.push(x.clone());
        sol.p.push(p.clone());
        sol.s.push(s.clone());
    }
    Ok(sol)
}

/// State family for the ħ-scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalingFamily {
    /// Gaussian of width `σ₁·ħ^γ` with mean momentum `p₀`, free evolution.
    FreeGaussian { m: f64, sigma_unit: f64, gamma: f64, x0: f64, p0: f64 },
    /// Harmonic coherent state (width `√(ħ/2mω)`).
    Coherent { m: f64, omega: f64, x0: f64, p0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub hbar: f64,
    /// `max |∂ₓS_q − ∂ₓS_cl|` on `P > 1e−8·max P`.
    pub gradient_deviation: f64,
    /// `|∂ₓS_q − ∂ₓS_cl|` at the grid point nearest `⟨x⟩`.
    pub center_deviation: f64,
    /// `max |V_Q|` on `P > 1e−8·max P`.
    pub max_quantum_potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub gradient_power: f64,
    pub quantum_potential_power: f64,
}

/// Evolves one family member per `ħ` to `t_final`, solves the classical
/// problem from the initial phase `S₀ = p₀x`, and fits log-log powers.
pub fn hbar_scaling_study(family: ScalingFamily, hbar_list: &[f64], grid: Grid1D, t_final: f64, n_steps: usize) -> Result<ScalingTable> {
    if hbar_list.len() < 3 {
        return Err(Error::InvalidArgument("need at least three hbar values".into()));
    }
    let rows = hbar_list
        .par_iter()
        .map(|&hbar| {
            let (psi, ham, p0) = match family {
                ScalingFamily::FreeGaussian { m, sigma_unit, gamma, x0, p0 } => (
                    families::gaussian(grid, m, hbar, x0, sigma_unit * hbar.powf(gamma), p0 / hbar)?,
                    HamiltonianSpec::free(m, hbar)?,
                    p0,
                ),
                ScalingFamily::Coherent { m, omega, x0, p0 } => (
                    families::coherent(grid, m, hbar, omega, x0, p0)?,
                    HamiltonianSpec::harmonic(m, hbar, omega)?,
                    p0,
                ),
            };
            let out = evolve_signed(&psi, &ham, t_final / n_steps as f64, n_steps, Integrator::SplitStep)?;
            let starts = grid.xs();
            let cl = classical_hj_solve(&ham, &InitialAction::linear(p0), &starts, t_final, n_steps)?;
            let sq = phase_gradient(&out.field, hbar);
            let p = out.density();
            let mask = support_mask(&p.values, QP_SUPPORT);
            let mean_x: f64 = p.values.iter().enumerate().map(|(j, v)| v * grid.x(j)).sum::<f64>() * grid.dx();
            let ic = grid.nearest_index(mean_x);
            let kf = cl.final_index();
            let mut dev = 0.0f64;
            let mut center = f64::NAN;
            for j in 0..grid.len() {
                if !mask[j] {
                    continue;
                }
                if let Some((_, pcl)) = cl.sample(kf, grid.x(j)) {
                    let d = (sq[j] - pcl).abs();
                    dev = dev.max(d);
                    if j == ic {
                        center = d;
                    }
                }
            }
            let qp = quantum_potential(&out, &ham)?;
            let vq = qp.amplitude.iter().zip(&qp.mask).filter(|(_, &m)| m).map(|(v, _)| v.abs()).fold(0.0, f64::max);
            Ok(ScalingRow { hbar, gradient_deviation: dev, center_deviation: center, max_quantum_potential: vq })
        })
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.hbar).collect();
    let gradient_power = loglog_slope(&hs, &rows.iter().map(|r| r.gradient_deviation).collect::<Vec<_>>());
    let quantum_potential_power = loglog_slope(&hs, &rows.iter().map(|r| r.max_quantum_potential).collect::<Vec<_>>());
    Ok(ScalingTable { rows, gradient_power, quantum_potential_power })
}

/// Drift field and its spatial derivative on the grid.
struct DriftSlice {
    v: Vec<f64>,
    dv: Vec<f64>,
    p: Vec<f64>,
}

const DRIFT_FLOOR: f64 = 1e-8;

fn drift_slice(psi: &WaveFunction, ham: &HamiltonianSpec) -> DriftSlice {
    let g = psi.grid();
    let f = &psi.field;
    let d1 = spectral_derivative(f, 1);
    let d2 = spectral_derivative(f, 2);
    let ea = ham.sample_ea(&g, psi.time());
    let dea: Vec<f64> = if ham.has_vector_potential() { g.sample(|x| ham.e * ham.a.dx(x, psi.time())) } else { vec![0.0; g.len()] };
    let pmax = f.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let (mut v, mut dv, mut p) = (vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]);
    for i in 0..g.len() {
        let (y, y1, y2) = (f.values[i], d1.values[i], d2.values[i]);
        let pp = y.norm_sqr();
        p[i] = pp;
        if pp <= DRIFT_FLOOR * pmax * 1e-4 {
            continue;
        }
        // j = ħ Im(ψ*ψ'), j' = ħ Im(ψ*ψ''), P' = 2 Re(ψ*ψ')
        let j = ham.hbar * (y.conj() * y1).im;
        let dj = ham.hbar * (y.conj() * y2).im;
        let dp = 2.0 * (y.conj() * y1).re;
        v[i] = (j / pp - ea[i]) / ham.m;
        dv[i] = ((dj * pp - j * dp) / (pp * pp) - dea[i]) / ham.m;
    }
    DriftSlice { v, dv, p }
}

impl DriftSlice {
    fn eval(&self, g: &Grid1D, x: f64) -> (f64, f64) {
        let n = g.len();
        let u = (x - g.x_min()) / g.dx();
        let i0 = u.floor();
        let t = u - i0;
        let i = (i0 as i64).rem_euclid(n as i64) as usize;
        let j = (i + 1) % n;
        let h = g.dx();
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        let v = h00 * self.v[i] + h10 * h * self.dv[i] + h01 * self.v[j] + h11 * h * self.dv[j];
        (v, self.p[i].min(self.p[j]))
    }
}

/// Outcome of drift-characteristic transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub samples: Vec<f64>,
    pub initial_samples: Vec<f64>,
    /// Wasserstein-1 distance between the transported samples and `P(·, t₁)`.
    pub wasserstein: f64,
    pub mean_shift: f64,
    /// Samples that visited cells with `P < 1e−8·max P`.
    pub flagged: usize,
}

fn quantile_fn(grid: &Grid1D, p: &[f64]) -> impl Fn(f64) -> f64 {
    let dx = grid.dx();
    let mut cdf = Vec::with_capacity(p.len() + 1);
    cdf.push(0.0);
    for v in p {
        cdf.push(cdf.last().unwrap() + v * dx);
    }
    let total = *cdf.last().unwrap();
    cdf.iter_mut().for_each(|c| *c /= total);
    let x0 = grid.x_min() - 0.5 * dx;
    move |u: f64| {
        let k = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        x0 + (k as f64 - 1.0 + frac) * dx
    }
}

/// `(1/n)Σ|x₍ᵢ₎ − Q((i + ½)/n)|` for sorted samples against the quantile
/// function of `p`.
pub fn wasserstein_to_density(sorted: &[f64], grid: &Grid1D, p: &[f64]) -> f64 {
    let q = quantile_fn(grid, p);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, x)| (x - q((i as f64 + 0.5) / n)).abs()).sum::<f64>() / n
}

/// Stratified samples `Q((i + Uᵢ)/n)` from `P(·, t₀)`, moved along
/// `ẋ = ⟨v⟩(x, t)` with RK4 steps of `dt` up to `t₀ + n_steps·dt`. The
/// drift is interpolated from a half-step series of evolved slices.
pub fn drift_transport(
    psi: &WaveFunction,
    ham: &HamiltonianSpec,
    dt: f64,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
    integrator: Integrator,
) -> Result<TransportReport> {
    if !(dt > 0.0) {
        return Err(Error::BadTimeStep(dt));
    }
    let g = psi.grid();
    let p0 = psi.density();
    let q = quantile_fn(&g, &p0.values);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<f64> = (0..n_samples).map(|i| q((i as f64 + rng.random::<f64>()) / n_samples as f64)).collect();
    let mut xs = initial.clone();
    let mut flags = vec![false; n_samples];
    let floor = DRIFT_FLOOR * p0.max();
    let mut cur = psi.clone();
    let mut slice0 = drift_slice(&cur, ham);
    for _ in 0..n_steps {
        let half = evolve_signed(&cur, ham, 0.5 * dt, 1, integrator)?;
        let next = evolve_signed(&half, ham, 0.5 * dt, 1, integrator)?;
        let (s_half, s1) = (drift_slice(&half, ham), drift_slice(&next, ham));
        xs.par_iter_mut().zip(flags.par_iter_mut()).for_each(|(x, flag)| {
            let (k1, pa) = slice0.eval(&g, *x);
            let (k2, pb) = s_half.eval(&g, *x + 0.5 * dt * k1);
            let (k3, pc) = s_half.eval(&g, *x + 0.5 * dt * k2);
            let (k4, pd) = s1.eval(&g, *x + dt * k3);
            if pa.min(pb).min(pc).min(pd) < floor {
                *flag = true;
            }
            *x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        });
        cur = next;
        slice0 = s1;
    }
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let p1 = cur.density();
    let wasserstein = wasserstein_to_density(&sorted, &g, &p1.values);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(TransportReport {
        mean_shift: mean(&xs) - mean(&initial),
        flagged: flags.iter().filter(|&&f| f).count(),
        samples: xs,
        initial_samples: initial,
        wasserstein,
    })
}

/// Residuals of `ħ⟨k⟩ = m⟨v⟩` and `ħ⟨Ω⟩ = ½m⟨v²⟩` on `P > 1e−6·max P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeBroglieReport {
    pub wave_number_residual: f64,
    pub frequency_residual: f64,
}

/// `⟨k⟩ = ∂ₓs` from the state and `⟨Ω⟩ = −∂ₜs` from a five-slice stencil
/// of free evolution with step `dt`.
pub fn de_broglie_check(psi: &WaveFunction, ham: &HamiltonianSpec, dt: f64) -> Result<DeBroglieReport> {
    if !ham.is_free() {
        return Err(Error::UnsupportedProcess("de Broglie relations are checked for free particles".into()));
    }
    let series = centered_series(psi, ham, dt, 2, 1, Integrator::SplitStep)?;
    let p: Vec<f64> = psi.values().iter().map(|v| v.norm_sqr()).collect();
    let mask = support_mask(&p, HJ_SUPPORT);
    let s_t = action_time_derivative(&series, dt, &mask)?;
    let s_x = phase_gradient(&psi.field, ham.hbar);
    let mf = local_moments(psi, ham, 2, MomentOrdering::Operator)?;
    let (mut rk, mut rw) = (0.0f64, 0.0f64);
    for i in 0..p.len() {
        if mask[i] {
            let v = mf.mu(1)[i] / p[i];
            let v2 = mf.mu(2)[i] / p[i];
            rk = rk.max((s_x[i] - ham.m * v).abs());
            rw = rw.max((-s_t[i] - 0.5 * ham.m * v2).abs());
        }
    }
    Ok(DeBroglieReport { wave_number_residual: rk, frequency_residual: rw })
}

/// `∫(½m⟨v⟩² + V_Q + V + eφ)P dx` against `⟨ψ|Ĥ|ψ⟩`, both for `A = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBookkeeping {
    pub hydrodynamic: f64,
    pub operator: f64,
}

pub fn energy_bookkeeping(psi: &WaveFunction, ham: &HamiltonianSpec) -> Result<EnergyBookkeeping> {
    if ham.has_vector_potential() {
        return Err(Error::UnsupportedProcess("energy bookkeeping is defined for A = 0".into()));
    }
    let g = psi.grid();
    let (r, r2) = amplitude_second_derivative(psi);
    let u = ham.sample_potential_energy(&g, psi.time());
    let v = drift_velocity(psi, ham);
    let k = ham.hbar * ham.hbar / (2.0 * ham.m);
    let dx = g.dx();
    let hydro: f64 = (0..g.len())
        .map(|i| {
            let p = r.values[i] * r.values[i];
            0.5 * ham.m * v[i] * v[i] * p - k * r.values[i] * r2.values[i] + u[i] * p
        })
        .sum::<f64>()
        * dx;
    let d2 = spectral_derivative(&psi.field, 2);
    let op: Complex64 = psi
        .values()
        .iter()
        .zip(&d2.values)
        .zip(&u)
        .map(|((y, y2), u)| y.conj() * (-k * y2 + y * u))
        .sum::<Complex64>()
        * dx;
    Ok(EnergyBookkeeping { hydrodynamic: hydro, operator: op.re })
}

/// Largest changes of `P` and `⟨v⟩` between evolving a state and
/// evolving its gauge transform, both read at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeDeviation {
    pub density: f64,
    /// On `P > 1e−8·max P`.
    pub drift: f64,
}

/// Non-uniform vector potentials after the transform switch both runs to
/// Crank–Nicolson.
pub fn gauge_invariance(psi: &WaveFunction, ham: &HamiltonianSpec, gauge: &Gauge, dt: f64, n_steps: usize, integrator: Integrator) -> Result<GaugeDeviation> {
    let (psi2, ham2) = gauge_transform(psi, ham, gauge)?;
    let integ = if ham2.a.is_uniform() && ham.a.is_uniform() { integrator } else { Integrator::CrankNicolson };
    let a = evolve(psi, ham, dt, n_steps, integ)?;
    let b = evolve(&psi2, &ham2, dt, n_steps, integ)?;
    let (pa, pb) = (a.density(), b.density());
    let density = pa.values.iter().zip(&pb.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mask = support_mask(&pa.values, QP_SUPPORT);
    let (va, vb) = (drift_velocity(&a, ham), drift_velocity(&b, &ham2));
    let drift = va.iter().zip(&vb).zip(&mask).filter(|(_, &m)| m).map(|((x, y), _)| (x - y).abs()).fold(0.0, f64::max);
    Ok(GaugeDeviation { density, drift })
}

/// Three gauge choices that keep a periodic grid periodic: `χ = αx` and
/// `χ = βxt` with wave numbers on the grid at `t_final`, and a smooth
/// periodic bump.
pub fn standard_gauges(grid: &Grid1D, t_final: f64) -> Vec<(&'static str, Gauge)> {
    let k1 = std::f64::consts::TAU / grid.length();
    let beta = if t_final > 0.0 { k1 / t_final } else { k1 };
    let eps = 0.3;
    let x0 = grid.x_min();
    let chi = crate::hamiltonian::SpaceTimeFn::static_fn("0.3*sin(k1*(x - x_min))", move |x| eps * (k1 * (x - x0)).sin())
        .with_dx(move |x, _| eps * k1 * (k1 * (x - x0)).cos());
    vec![("linear", Gauge::linear(2.0 * k1)), ("linear-in-time", Gauge::linear_in_time(beta)), ("periodic-bump", Gauge::general(chi))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::SpreadingGaussian;
    use crate::state::families::*;

    #[test]
    fn stationary_gaussian_quantum_potential() {
        let g = Grid1D::symmetric(512, 16.0).unwrap();
        let psi = gaussian(g, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let qp = quantum_potential(&psi, &h).unwrap();
        assert!((qp.at(0.0) - 0.25).abs() < 1e-9);
        assert!((qp.at(2.0) + 0.25).abs() < 1e-9);
        for j in 0..g.len() {
            if qp.mask[j] {
                let x = g.x(j);
                assert!((qp.amplitude[j] - (0.25 - x * x / 8.0)).abs() < 1e-7 * (1.0 + x * x));
            }
        }
        assert!(qp.relative_disagreement() < 1e-9);
    }

    #[test]
    fn plane_wave_has_no_quantum_potential() {
        let g = Grid1D::symmetric(128, 8.0).unwrap();
        let psi = plane_wave(g, 1.0, 1.0, 3).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let qp = quantum_potential(&psi, &h).unwrap();
        assert!(qp.amplitude.iter().all(|v| v.abs() < 1e-10));
        assert!(qp.fluctuation.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ground_state_total_potential_is_flat() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = harmonic_eigenstate(g, 1.0, 1.0, 1.0, 0).unwrap();
        let qp = quantum_potential(&psi, &h).unwrap();
        for j in 0..g.len() {
            if qp.mask[j] {
                let x = g.x(j);
                assert!((qp.amplitude[j] - (0.5 - 0.5 * x * x)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn free_streaming_action_is_exact() {
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let starts: Vec<f64> = (0..21).map(|i| -5.0 + 0.5 * i as f64).collect();
        let p0 = 1.3;
        let sol = classical_hj_solve(&h, &InitialAction::linear(p0), &starts, 2.0, 50).unwrap();
        let k = sol.final_index();
        for (x, s) in sol.x[k].iter().zip(&sol.s[k]) {
            assert!((s - (p0 * x - p0 * p0 * 2.0 / 2.0)).abs() < 1e-10);
        }
        let (s, px) = sol.sample(k, 0.3).unwrap();
        assert!((s - (p0 * 0.3 - p0 * p0)).abs() < 1e-10 && (px - p0).abs() < 1e-12);
        assert!(sol.gradient_consistency(k) < 1e-6);
    }

    #[test]
    fn focusing_wave_front_reports_caustic() {
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let starts: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        // S₀ = −x²/2T focuses all rays at t = T
        let t_focus = 1.7;
        let err = classical_hj_solve(&h, &InitialAction::quadratic(0.0, -1.0 / t_focus), &starts, 3.0, 300).unwrap_err();
        match err {
            Error::CausticError { t_caustic } => assert!((t_caustic - t_focus).abs() < 0.01 * t_focus),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn spreading_gaussian_hj_residual() {
        let g = Grid1D::symmetric(512, 20.0).unwrap();
        let o = SpreadingGaussian { m: 1.0, hbar: 1.0, x0: 0.0, sigma: 1.0, k0: 0.5 };
        let psi = WaveFunction::new(o.field(g, 1.0), 1.0, 1.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let s = centered_series(&psi, &h, 1e-3, 1, 1, Integrator::SplitStep).unwrap();
        let r = quantum_hj_residual(&s, 1e-3, &h).unwrap();
        assert!(r.linf < 1e-5, "{}", r.linf);
    }

    #[test]
    fn energy_bookkeeping_matches_operator() {
        let g = Grid1D::symmetric(256, 12.0).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = coherent(g, 1.0, 1.0, 1.0, 1.0, 0.7).unwrap();
        let e = energy_bookkeeping(&psi, &h).unwrap();
        // ½p₀²/m + ½mω²x₀² + ħω/2
        let exact = 0.5 * 0.49 + 0.5 + 0.5;
        assert!((e.operator - exact).abs() < 1e-9);
        assert!((e.hydrodynamic - e.operator).abs() < 1e-7);
    }

    #[test]
    fn gauge_choices_leave_density_and_drift() {
        let g = Grid1D::symmetric(256, 16.0).unwrap();
        let psi = gaussian(g, 1.0, 1.0, 0.0, 1.0, 0.5).unwrap();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap();
        for (name, gauge) in standard_gauges(&g, 0.1) {
            let d = gauge_invariance(&psi, &h, &gauge, 1e-3, 100, Integrator::SplitStep).unwrap();
            assert!(d.density < 1e-7 && d.drift < 1e-7, "{name}: {d:?}");
        }
    }

    #[test]
    fn wasserstein_of_exact_quantiles_is_small() {
        let g = Grid1D::symmetric(512, 12.0).unwrap();
        let psi = gaussian(g, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let p = psi.density();
        let q = quantile_fn(&g, &p.values);
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| q((i as f64 + 0.5) / n as f64)).collect();
        assert!(wasserstein_to_density(&xs, &g, &p.values) < 1e-12);
    }
}
