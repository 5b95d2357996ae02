//! Stochastic velocity moments.
//!
//! Local densities `μₙ(x) = ⟨vⁿ⟩(x)P(x)` come from the covariant momentum
//! operator `D = −iħ∂ₓ − eA` acting on the state; full expectations
//! `⟨⟨vⁿ⟩⟩` from the trace, from `∫μₙ`, and from derivatives of the
//! generating function `G(α) = ∫ρ(y + ħα/2m; y − ħα/2m) dy` must all agree.
//! [`kramers_moyal_extract`] rebuilds the moments from finite-`Δt`
//! displacement statistics of evolved transition slices.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_field, Integrator};
use crate::extrapolate::{fit_basis, richardson_even};
use crate::grid::{
    central_stencil_len, central_weights, fd_weights, fft_in_place, finite_difference_time, ifft_in_place,
    spectral_derivative_real, ComplexField, Grid1D, RealField,
};
use crate::hamiltonian::HamiltonianSpec;
use crate::state::{DensityMatrix, WaveFunction};

pub const MAX_MOMENT_ORDER: usize = 8;

/// How products of `x` and `p` are ordered in a local moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentOrdering {
    /// `m⁻ⁿ Re[ψ* Dⁿψ]`.
    #[default]
    Operator,
    /// Symmetric (Weyl) ordering, `m⁻ⁿ 2⁻ⁿ Σⱼ C(n,j) (Dʲψ)*(Dⁿ⁻ʲψ)`, the
    /// momentum moments of the Wigner function.
    Symmetric,
}

#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a WaveFunction),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a WaveFunction> for StateRef<'a> {
    fn from(p: &'a WaveFunction) -> Self {
        StateRef::Pure(p)
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(r: &'a DensityMatrix) -> Self {
        StateRef::Mixed(r)
    }
}

impl StateRef<'_> {
    pub fn grid(&self) -> Grid1D {
        match self {
            StateRef::Pure(p) => p.grid(),
            StateRef::Mixed(r) => r.grid,
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            StateRef::Pure(p) => p.time(),
            StateRef::Mixed(r) => r.time,
        }
    }
}

/// Local moment densities `μ₀ … μ_{n_max}` and their integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField {
    pub grid: Grid1D,
    pub n_max: usize,
    pub densities: Vec<Vec<f64>>,
    pub full: Vec<f64>,
    pub time: f64,
    pub ordering: MomentOrdering,
}

impl MomentField {
    pub fn mu(&self, n: usize) -> &[f64] {
        &self.densities[n]
    }

    pub fn mu_field(&self, n: usize) -> RealField {
        RealField { grid: self.grid, values: self.densities[n].clone(), time: self.time }
    }

    /// `⟨vⁿ⟩(x) = μₙ/μ₀`, `None` where `P ≤ floor`.
    pub fn conditional(&self, n: usize, floor: f64) -> Vec<Option<f64>> {
        self.densities[0]
            .iter()
            .zip(&self.densities[n])
            .map(|(&p, &m)| if p > floor { Some(m / p) } else { None })
            .collect()
    }

    /// Mask of cells with `P > rel·max P`.
    pub fn support(&self, rel: f64) -> Vec<bool> {
        let pmax = self.densities[0].iter().copied().fold(0.0, f64::max);
        self.densities[0].iter().map(|&p| p > rel * pmax).collect()
    }
}

fn check_order(n_max: usize) -> Result<()> {
    if n_max > MAX_MOMENT_ORDER {
        Err(Error::OrderError { order: n_max, max: MAX_MOMENT_ORDER })
    } else {
        Ok(())
    }
}

/// Applies `−iħ∂ₓ − eA` (or, with `conj`, `+iħ∂ₓ − eA`).
pub(crate) fn covariant_d(v: &[Complex64], g: &Grid1D, ea: &[f64], hbar: f64, conj: bool) -> Vec<Complex64> {
    let mut buf = v.to_vec();
    fft_in_place(&mut buf);
    let s = if conj { Complex64::new(0.0, hbar) } else { Complex64::new(0.0, -hbar) };
    buf.iter_mut().enumerate().for_each(|(j, c)| *c *= s * g.derivative_multiplier(j, 1));
    ifft_in_place(&mut buf);
    buf.iter_mut().zip(v).zip(ea).for_each(|((d, v), a)| *d -= v * a);
    buf
}

fn powers(v: &[Complex64], g: &Grid1D, ea: &[f64], hbar: f64, n: usize, conj: bool) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(v.to_vec());
    for k in 1..=n {
        let next = covariant_d(&out[k - 1], g, ea, hbar, conj);
        out.push(next);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Local moment densities `μₙ(x)` for `n = 0..=n_max`.
pub fn local_moments<'a>(state: impl Into<StateRef<'a>>, ham: &HamiltonianSpec, n_max: usize, ordering: MomentOrdering) -> Result<MomentField> {
    check_order(n_max)?;
    let state = state.into();
    let g = state.grid();
    let t = state.time();
    let ea = ham.sample_ea(&g, t);
    let n = g.len();
    let mut densities = vec![vec![0.0; n]; n_max + 1];
    match state {
        StateRef::Pure(psi) => {
            let pw = powers(psi.values(), &g, &ea, ham.hbar, n_max, false);
            for k in 0..=n_max {
                let scale = ham.m.powi(-(k as i32));
                for i in 0..n {
                    densities[k][i] = scale * match ordering {
                        MomentOrdering::Operator => (pw[0][i].conj() * pw[k][i]).re,
                        MomentOrdering::Symmetric => {
                            (0..=k).map(|j| binomial(k, j) * (pw[j][i].conj() * pw[k - j][i]).re).sum::<f64>()
                                / 2f64.powi(k as i32)
                        }
                    };
                }
            }
        }
        StateRef::Mixed(rho) => {
            // D applied in x' to every column ρ(·; x)
            let cols: Vec<Vec<Vec<Complex64>>> = (0..n)
                .into_par_iter()
                .map(|j| powers(rho.kernel.column(j).as_slice(), &g, &ea, ham.hbar, n_max, false))
                .collect();
            match ordering {
                MomentOrdering::Operator => {
                    for k in 0..=n_max {
                        let scale = ham.m.powi(-(k as i32));
                        for i in 0..n {
                            densities[k][i] = scale * cols[i][k][i].re;
                        }
                    }
                }
                MomentOrdering::Symmetric => {
                    // s[a][b][i] = (conj D)ᵇ in x of (Dᵃ in x' of ρ), at x' = x = xᵢ
                    let s: Vec<Vec<Vec<Complex64>>> = (0..=n_max)
                        .into_par_iter()
                        .map(|a| {
                            let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n_max - a + 1];
                            for i in 0..n {
                                let row: Vec<Complex64> = (0..n).map(|j| cols[j][a][i]).collect();
                                let rp = powers(&row, &g, &ea, ham.hbar, n_max - a, true);
                                for (b, v) in rp.iter().enumerate() {
                                    out[b][i] = v[i];
                                }
                            }
                            out
                        })
                        .collect();
                    for k in 0..=n_max {
                        let scale = ham.m.powi(-(k as i32)) / 2f64.powi(k as i32);
                        for i in 0..n {
                            densities[k][i] = scale * (0..=k).map(|j| binomial(k, j) * s[k - j][j][i].re).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
    let dx = g.dx();
    let full = densities.iter().map(|d| d.iter().sum::<f64>() * dx).collect();
    Ok(MomentField { grid: g, n_max, densities, full, time: t, ordering })
}

/// Momentum-space occupation `diag(FρF†)·dx/N`, which sums to the trace.
fn momentum_occupation(state: StateRef<'_>) -> Vec<f64> {
    let g = state.grid();
    let n = g.len();
    let w = g.dx() / n as f64;
    match state {
        StateRef::Pure(psi) => {
            let mut buf = psi.values().to_vec();
            fft_in_place(&mut buf);
            buf.iter().map(|c| c.norm_sqr() * w).collect()
        }
        StateRef::Mixed(rho) => {
            let fft_cols = |m: &DMatrix<Complex64>| -> DMatrix<Complex64> {
                let cols: Vec<Vec<Complex64>> = (0..n)
                    .into_par_iter()
                    .map(|j| {
                        let mut c: Vec<Complex64> = m.column(j).iter().copied().collect();
                        fft_in_place(&mut c);
                        c
                    })
                    .collect();
                DMatrix::from_fn(n, n, |i, j| cols[j][i])
            };
            let a = fft_cols(&rho.kernel);
            let c = fft_cols(&a.adjoint());
            (0..n).map(|k| c[(k, k)].re * w).collect()
        }
    }
}

/// `⟨⟨vⁿ⟩⟩ = m⁻ⁿ tr(Dⁿρ)` for `n = 0..=n_max`, evaluated in momentum space
/// when `A` is uniform.
pub fn full_moments_trace<'a>(state: impl Into<StateRef<'a>>, ham: &HamiltonianSpec, n_max: usize) -> Result<Vec<f64>> {
    check_order(n_max)?;
    let state = state.into();
    let g = state.grid();
    if ham.has_vector_potential() && !ham.a.is_uniform() {
        return Ok(local_moments(state, ham, n_max, MomentOrdering::Operator)?.full);
    }
    let ea = ham.ea(0.0, state.time());
    let occ = momentum_occupation(state);
    let n = g.len();
    Ok((0..=n_max)
        .map(|k| {
            occ.iter()
                .enumerate()
                .map(|(j, o)| {
                    let kk = if j == n / 2 { 0.0 } else { g.k(j) };
                    o * ((ham.hbar * kk - ea) / ham.m).powi(k as i32)
                })
                .sum()
        })
        .collect())
}

/// Samples of `G(α)` on a symmetric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    pub alphas: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl GeneratingFunction {
    pub fn at_zero(&self) -> Complex64 {
        self.values[self.values.len() / 2]
    }

    /// `(−i d/dα)ⁿ G |₀` from the full sample set.
    pub fn moment(&self, n: usize) -> f64 {
        let w = fd_weights(0.0, &self.alphas, n);
        let d: Complex64 = w.iter().zip(&self.values).map(|(w, g)| g * w).sum();
        (d * Complex64::new(0.0, -1.0).powu(n as u32)).re
    }

    pub fn moments(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| self.moment(n)).collect()
    }
}

fn check_alias(state: StateRef<'_>, shift: f64) -> Result<()> {
    let g = state.grid();
    if 2.0 * shift.abs() > g.length() / 8.0 {
        return Err(Error::AliasError(format!(
            "relative displacement {} exceeds an eighth of the box length {}",
            2.0 * shift.abs(),
            g.length()
        )));
    }
    let occ = momentum_occupation(state);
    let total: f64 = occ.iter().sum();
    let kc = 0.9 * g.k_max();
    let high: f64 = occ.iter().enumerate().filter(|(j, _)| g.k(*j).abs() > kc).map(|(_, o)| o).sum();
    if high > 1e-12 * total {
        return Err(Error::AliasError(format!("spectral weight {:.3e} near the Nyquist limit", high / total)));
    }
    Ok(())
}

/// `G(α) = e^{−ieAα/m} ∫ρ(y + ħα/2m; y − ħα/2m) dy` on `n_samples`
/// (odd) equally spaced `α ∈ [−α_max, α_max]`, with band-limited shifts.
/// Only uniform vector potentials are supported.
pub fn generating_function<'a>(state: impl Into<StateRef<'a>>, ham: &HamiltonianSpec, alpha_max: f64, n_samples: usize) -> Result<GeneratingFunction> {
    let state = state.into();
    if n_samples < 3 || n_samples % 2 == 0 || !(alpha_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need an odd sample count >= 3 and alpha_max > 0, got {n_samples} and {alpha_max}"
        )));
    }
    if ham.has_vector_potential() && !ham.a.is_uniform() {
        return Err(Error::UnsupportedProcess("generating function with a non-uniform vector potential".into()));
    }
    let a_of = |alpha: f64| ham.hbar * alpha / (2.0 * ham.m);
    check_alias(state, a_of(alpha_max))?;
    let ea = ham.ea(0.0, state.time());
    let g = state.grid();
    let half = (n_samples / 2) as f64;
    let alphas: Vec<f64> = (0..n_samples).map(|i| (i as f64 - half) / half * alpha_max).collect();
    let values = alphas
        .par_iter()
        .map(|&alpha| {
            let a = a_of(alpha);
            let raw = match state {
                StateRef::Pure(psi) => {
                    let plus = psi.field.shifted(-a);
                    let minus = psi.field.shifted(a);
                    plus.values.iter().zip(&minus.values).map(|(p, m)| p * m.conj()).sum::<Complex64>() * g.dx()
                }
                StateRef::Mixed(rho) => {
                    let n = g.len();
                    // columns: x' → x' + a; then rows: x → x − a
                    let cols: Vec<Vec<Complex64>> = (0..n).map(|j| rho.column(j).shifted(-a).values).collect();
                    (0..n)
                        .map(|i| {
                            let row = ComplexField { grid: g, values: (0..n).map(|j| cols[j][i]).collect(), time: rho.time };
                            row.shifted(a).values[i]
                        })
                        .sum::<Complex64>()
                        * g.dx()
                }
            };
            raw * Complex64::from_polar(1.0, -ea * alpha / ham.m)
        })
        .collect();
    Ok(GeneratingFunction { alphas, values })
}

/// Settings for [`kramers_moyal_extract`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmConfig {
    /// Descending, at least three values; the three smallest are used.
    pub dt_list: Vec<f64>,
    /// Slice widths, at least three values.
    pub sigma_list: Vec<f64>,
    /// Evaluation points (snapped to the grid).
    pub points: Vec<f64>,
    /// Integrator steps per `±Δt` evolution.
    pub substeps: usize,
    pub integrator: Integrator,
}

impl Default for KmConfig {
    fn default() -> Self {
        Self {
            dt_list: vec![4e-4, 2e-4, 1e-4],
            sigma_list: vec![0.2, 0.15, 0.1],
            points: (-8..=8).map(|i| i as f64 * 0.25).collect(),
            substeps: 1,
            integrator: Integrator::SplitStep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmRow {
    pub x: f64,
    pub sigma: f64,
    pub dt: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmResult {
    pub moment: usize,
    pub derivative: usize,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// Double-extrapolated coefficient at each point (for `moment ==
    /// derivative == n` this estimates `⟨vⁿ⟩(x)P(x)`).
    pub values: Vec<f64>,
    /// Δt-extrapolated value per `(σ, point)`.
    pub per_sigma: Vec<Vec<f64>>,
    pub table: Vec<KmRow>,
    /// Median observed Δt-convergence order per σ.
    pub observed_order: Vec<f64>,
}

impl KmResult {
    /// `values / P`.
    pub fn conditional(&self) -> Vec<f64> {
        self.values.iter().zip(&self.density).map(|(v, p)| v / p).collect()
    }

    pub fn table_text(&self) -> String {
        let mut s = String::from("x\tsigma\tdt\testimate\n");
        for r in &self.table {
            s.push_str(&format!("{}\t{}\t{}\t{:.12e}\n", r.x, r.sigma, r.dt, r.estimate));
        }
        s
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Regularized equal-time transition slice `ψ(y)g(y − x)e^{−iθ(x)}`
/// scaled so that `∫|w|² dy = P(x)`.
pub fn regularized_slice(psi: &WaveFunction, i: usize, sigma: f64) -> ComplexField {
    let g = psi.grid();
    let x = g.x(i);
    let c = (TAU * sigma * sigma).powf(-0.25);
    let phase = Complex64::from_polar(1.0, -psi.values()[i].arg());
    let mut w = ComplexField {
        grid: g,
        values: (0..g.len())
            .map(|j| {
                let u = g.wrapped_offset(g.x(j), x);
                psi.values()[j] * c * (-u * u / (4.0 * sigma * sigma)).exp() * phase
            })
            .collect(),
        time: psi.time(),
    };
    let mass: f64 = w.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx();
    let p = psi.values()[i].norm_sqr();
    if mass > 0.0 {
        let s = (p / mass).sqrt();
        w.values.iter_mut().for_each(|v| *v *= s);
    }
    w
}

fn displacement_moment(w: &ComplexField, x: f64, order: usize) -> f64 {
    let g = w.grid;
    w.values.iter().enumerate().map(|(j, v)| g.wrapped_offset(g.x(j), x).powi(order as i32) * v.norm_sqr()).sum::<f64>() * g.dx()
}

/// Central-difference coefficient of `Δtⁿ` in `F(w(·, t + Δt; x, t))` for
/// each `(σ, Δt)`, at one grid point.
pub(crate) fn slice_derivatives<F>(psi: &WaveFunction, ham: &HamiltonianSpec, cfg: &KmConfig, i: usize, derivative: usize, functional: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&ComplexField) -> f64,
{
    let len = central_stencil_len(derivative);
    let half = (len / 2) as i64;
    let mut out = Vec::with_capacity(cfg.sigma_list.len());
    for &sigma in &cfg.sigma_list {
        let w0 = regularized_slice(psi, i, sigma);
        let f0 = functional(&w0);
        let mut row = Vec::with_capacity(cfg.dt_list.len());
        for &dt in &cfg.dt_list {
            let mut samples = Vec::with_capacity(len);
            for s in -half..=half {
                if s == 0 {
                    samples.push(f0);
                    continue;
                }
                let mut w = w0.clone();
                let h = s as f64 * dt / cfg.substeps as f64;
                evolve_field(&mut w, ham, h, cfg.substeps, cfg.integrator)?;
                samples.push(functional(&w));
            }
            let wts = central_weights(derivative, len, dt)?;
            let d: f64 = wts.iter().zip(&samples).map(|(w, s)| w * s).sum();
            row.push(d / factorial(derivative));
        }
        out.push(row);
    }
    Ok(out)
}

fn sigma_basis(moment: usize, derivative: usize) -> Vec<i32> {
    if moment == derivative && moment % 2 == 0 {
        vec![-2, 0, 2]
    } else {
        vec![0, 2, 4]
    }
}

pub(crate) fn check_km_config(cfg: &KmConfig) -> Result<()> {
    if cfg.dt_list.len() < 3 || cfg.sigma_list.len() < 3 {
        return Err(Error::InvalidArgument("need at least three time steps and three slice widths".into()));
    }
    if cfg.dt_list.windows(2).any(|w| w[1] >= w[0]) || cfg.dt_list.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument("dt_list must be positive and strictly descending".into()));
    }
    if cfg.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    Ok(())
}

/// Double limit over a raw `[point][σ][Δt]` table: Richardson in `Δt²`
/// over the three smallest steps, then the constant term of a fit in σ
/// over `basis`.
pub(crate) fn double_limit(
    psi: &WaveFunction,
    cfg: &KmConfig,
    idx: &[usize],
    raw: &[Vec<Vec<f64>>],
    basis: &[i32],
    moment: usize,
    derivative: usize,
) -> Result<KmResult> {
    let g = psi.grid();
    let nd = cfg.dt_list.len();
    let dts = &cfg.dt_list[nd - 3..];
    let mut table = Vec::new();
    let mut per_sigma = vec![vec![0.0; idx.len()]; cfg.sigma_list.len()];
    let mut orders = vec![Vec::new(); cfg.sigma_list.len()];
    let scale = raw.iter().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    // Finite differences of O(max P) functionals carry rounding noise of
    // order ε·max P/Δt; differences below that say nothing about growth.
    let pmax = psi.density().values.iter().copied().fold(0.0f64, f64::max);
    let floor = (1e-9 * scale).max(1e3 * f64::EPSILON * pmax / dts[2]);
    let mut bad = false;
    for (p, &i) in idx.iter().enumerate() {
        for (s, &sigma) in cfg.sigma_list.iter().enumerate() {
            let est = &raw[p][s];
            for (k, &dt) in cfg.dt_list.iter().enumerate() {
                table.push(KmRow { x: g.x(i), sigma, dt, estimate: est[k] });
            }
            let e = &est[nd - 3..];
            per_sigma[s][p] = richardson_even(dts, e)?;
            let (d1, d2) = ((e[0] - e[1]).abs(), (e[1] - e[2]).abs());
            if d1 > floor && d2 > floor {
                if d2 > d1 {
                    bad = true;
                }
                orders[s].push((d1 / d2).ln() / (dts[0] / dts[1]).ln());
            }
        }
    }
    if bad {
        let mut t = String::from("x\tsigma\tdt\testimate\n");
        for r in &table {
            t.push_str(&format!("{}\t{}\t{}\t{:.12e}\n", r.x, r.sigma, r.dt, r.estimate));
        }
        return Err(Error::ConvergenceError { table: t });
    }
    let values = (0..idx.len())
        .map(|p| {
            let ys: Vec<f64> = per_sigma.iter().map(|v| v[p]).collect();
            let c = fit_basis(&cfg.sigma_list, &ys, basis)?;
            Ok(c[basis.iter().position(|&e| e == 0).unwrap()])
        })
        .collect::<Result<Vec<f64>>>()?;
    let observed_order = orders
        .into_iter()
        .map(|mut o| {
            if o.is_empty() {
                return f64::NAN;
            }
            o.sort_by(f64::total_cmp);
            o[o.len() / 2]
        })
        .collect();
    Ok(KmResult {
        moment,
        derivative,
        x: idx.iter().map(|&i| g.x(i)).collect(),
        density: idx.iter().map(|&i| psi.values()[i].norm_sqr()).collect(),
        values,
        per_sigma,
        table,
        observed_order,
    })
}

/// Finite-`Δt` Kramers–Moyal reconstruction of the coefficient of `Δtⁿ` in
/// the `m`-th displacement moment (`m, n ≤ 2`). For `m = n` this is
/// `⟨vⁿ⟩(x)P(x)`; for `m ≠ n` the limit is expected to vanish.
///
/// Per width σ the `Δt → 0` limit is taken first by Richardson
/// extrapolation in `Δt²` over the three smallest steps; the `σ → 0` limit
/// then comes from a three-term fit, polynomial in `σ²` except for the
/// diagonal second moment where a `σ⁻²` term is included and dropped.
pub fn kramers_moyal_coefficient(ham: &HamiltonianSpec, psi: &WaveFunction, cfg: &KmConfig, moment: usize, derivative: usize) -> Result<KmResult> {
    if moment == 0 || derivative == 0 || moment > 2 || derivative > 2 {
        return Err(Error::OrderError { order: moment.max(derivative), max: 2 });
    }
    if !ham.is_free() && !(ham.a.is_zero() && ham.phi.is_zero()) {
        return Err(Error::UnsupportedProcess("Kramers-Moyal extraction supports free and scalar-potential Hamiltonians".into()));
    }
    ham.ensure_quadratic()?;
    check_km_config(cfg)?;
    let g = psi.grid();
    let idx: Vec<usize> = cfg.points.iter().map(|&x| g.nearest_index(x)).collect();
    let raw: Vec<Vec<Vec<f64>>> = idx
        .par_iter()
        .map(|&i| {
            let x = g.x(i);
            slice_derivatives(psi, ham, cfg, i, derivative, &|w: &ComplexField| displacement_moment(w, x, moment))
        })
        .collect::<Result<_>>()?;
    double_limit(psi, cfg, &idx, &raw, &sigma_basis(moment, derivative), moment, derivative)
}

/// `⟨vⁿ⟩(x)P(x)` from displacement statistics, `n ∈ {1, 2}`.
pub fn kramers_moyal_extract(ham: &HamiltonianSpec, psi: &WaveFunction, cfg: &KmConfig, n: usize) -> Result<KmResult> {
    kramers_moyal_coefficient(ham, psi, cfg, n, n)
}

/// Norms of `∂ₜⁿP − (−1)ⁿ∂ₓⁿμₙ` at the middle slice of an equally spaced
/// series.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityResidual {
    pub order: usize,
    pub l1: f64,
    pub linf: f64,
    pub time_derivative: RealField,
    pub flux_term: RealField,
}

pub fn continuity_residuals(series: &[WaveFunction], dt: f64, ham: &HamiltonianSpec, n: usize, ordering: MomentOrdering) -> Result<ContinuityResidual> {
    if n == 0 || n > MAX_MOMENT_ORDER {
        return Err(Error::OrderError { order: n, max: MAX_MOMENT_ORDER });
    }
    let needed = central_stencil_len(n);
    if series.len() < needed {
        return Err(Error::StencilTooShort { order: n, needed, got: series.len() });
    }
    let densities: Vec<RealField> = series.iter().map(|p| p.density()).collect();
    let lhs = finite_difference_time(&densities, dt, n)?;
    let mid = &series[series.len() / 2];
    let mf = local_moments(mid, ham, n, ordering)?;
    let mut rhs = spectral_derivative_real(&mf.mu_field(n), n as u32);
    if n % 2 == 1 {
        rhs.values.iter_mut().for_each(|v| *v = -*v);
    }
    let dx = lhs.grid.dx();
    let (l1, linf) = lhs.values.iter().zip(&rhs.values).fold((0.0, 0.0f64), |(a, b), (l, r)| {
        let d = (l - r).abs();
        (a + d * dx, b.max(d))
    });
    Ok(ContinuityResidual { order: n, l1, linf, time_derivative: lhs, flux_term: rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{density_from_mixture, density_from_pure, families::*};

    fn g() -> Grid1D {
        Grid1D::symmetric(256, 12.0).unwrap()
    }

    #[test]
    fn stationary_gaussian_profiles() {
        let grid = g();
        let psi = gaussian(grid, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let mf = local_moments(&psi, &h, 2, MomentOrdering::Operator).unwrap();
        let p = psi.density();
        for j in 0..grid.len() {
            let x = grid.x(j);
            if p.values[j] > 1e-8 {
                assert!(mf.mu(1)[j].abs() < 1e-12);
                let v2 = mf.mu(2)[j] / p.values[j];
                assert!((v2 - (0.5 - x * x / 4.0)).abs() < 1e-7, "x={x}");
            }
        }
        assert!((mf.full[2] - 0.25).abs() < 1e-10);
        assert!((mf.full[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boosted_gaussian_drift() {
        let grid = g();
        let k0 = 3.0;
        let psi = gaussian(grid, 1.0, 1.0, 0.0, 1.0, k0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let mf = local_moments(&psi, &h, 1, MomentOrdering::Operator).unwrap();
        let pmax = psi.density().max();
        for (v, ok) in mf.conditional(1, 1e-8 * pmax).iter().zip(mf.support(1e-8)) {
            if ok {
                assert!((v.unwrap() - k0).abs() < 1e-8);
            }
        }
        let tr = full_moments_trace(&psi, &h, 1).unwrap();
        assert!((tr[1] - k0).abs() < 1e-10);
    }

    #[test]
    fn plane_wave_moments_are_powers() {
        let grid = g();
        let psi = plane_wave(grid, 1.0, 1.0, 4).unwrap();
        let k = grid.k(4);
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let mf = local_moments(&psi, &h, 4, MomentOrdering::Operator).unwrap();
        for n in 0..=4 {
            for j in 0..grid.len() {
                let v = mf.mu(n)[j] / mf.mu(0)[j];
                assert!((v - k.powi(n as i32)).abs() < 1e-8 * k.powi(n as i32).max(1.0));
            }
        }
    }

    #[test]
    fn order_cap() {
        let psi = gaussian(g(), 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        assert!(matches!(local_moments(&psi, &h, 9, MomentOrdering::Operator), Err(Error::OrderError { .. })));
    }

    #[test]
    fn pure_and_mixed_paths_agree() {
        let grid = Grid1D::symmetric(128, 10.0).unwrap();
        let psi = gaussian(grid, 1.0, 1.0, 0.5, 1.0, 1.0).unwrap();
        let rho = density_from_pure(&psi).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        for ord in [MomentOrdering::Operator, MomentOrdering::Symmetric] {
            let a = local_moments(&psi, &h, 3, ord).unwrap();
            let b = local_moments(&rho, &h, 3, ord).unwrap();
            for n in 0..=3 {
                for (x, y) in a.mu(n).iter().zip(b.mu(n)) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn generating_function_of_stationary_gaussian() {
        let grid = g();
        let psi = gaussian(grid, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let gf = generating_function(&psi, &h, 0.4, 17).unwrap();
        for (a, v) in gf.alphas.iter().zip(&gf.values) {
            let exact = (-(a * a) / 8.0).exp();
            assert!((v - Complex64::new(exact, 0.0)).norm() < 1e-8);
        }
        assert!((gf.at_zero().re - 1.0).abs() < 1e-9);
        assert!((gf.moment(2) - 0.25).abs() < 1e-8);
    }

    #[test]
    fn generating_function_mixed_matches_pure_mixture() {
        let grid = Grid1D::symmetric(128, 10.0).unwrap();
        let a = gaussian(grid, 1.0, 1.0, -1.0, 1.0, 0.5).unwrap();
        let b = gaussian(grid, 1.0, 1.0, 1.0, 0.8, -0.3).unwrap();
        let rho = density_from_mixture(&[(0.3, a.clone()), (0.7, b.clone())]).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let gm = generating_function(&rho, &h, 0.4, 9).unwrap();
        let ga = generating_function(&a, &h, 0.4, 9).unwrap();
        let gb = generating_function(&b, &h, 0.4, 9).unwrap();
        for i in 0..9 {
            let exp = ga.values[i] * 0.3 + gb.values[i] * 0.7;
            assert!((gm.values[i] - exp).norm() < 1e-12);
            // G(−α) = G*(α)
            assert!((gm.values[i] - gm.values[8 - i].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn large_shift_aliases() {
        let psi = gaussian(g(), 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        assert!(matches!(generating_function(&psi, &h, 10.0, 9), Err(Error::AliasError(_))));
    }

    #[test]
    fn stencil_requirement_for_continuity() {
        let psi = gaussian(g(), 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap();
        assert!(matches!(
            continuity_residuals(&[psi.clone(), psi], 0.1, &h, 1, MomentOrdering::Operator),
            Err(Error::StencilTooShort { .. })
        ));
    }
}
