//! Two-particle correlations evaluated with operators on the state and with
//! the position-density rule of local realism, and the gap between them.
//!
//! The naive rule evaluates a velocity observable at the conditional drift
//! `v̄ = ħ Im(ψ*∂ψ)/(m|ψ|²)` of the configuration, which uses all of the
//! diagonal information the joint density carries.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fft_in_place, ifft_in_place, Grid1D};
use crate::state::WaveFunction;

pub const MAX_OBSERVABLE_DEGREE: usize = 4;
pub const MAX_AXIS_POINTS: usize = 256;
pub const AGREE_TOL: f64 = 1e-7;
const IMAG_TOL: f64 = 1e-9;

/// `ψ(λ_a, λ_b)` with rows indexed by `λ_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleState {
    pub grid_a: Grid1D,
    pub grid_b: Grid1D,
    pub psi: DMatrix<Complex64>,
    pub m_a: f64,
    pub m_b: f64,
    pub hbar: f64,
}

impl TwoParticleState {
    pub fn new(grid_a: Grid1D, grid_b: Grid1D, psi: DMatrix<Complex64>, m_a: f64, m_b: f64, hbar: f64) -> Result<Self> {
        if grid_a.len() > MAX_AXIS_POINTS || grid_b.len() > MAX_AXIS_POINTS {
            return Err(Error::InvalidGrid(format!("two-particle axes are limited to {MAX_AXIS_POINTS} points")));
        }
        if psi.nrows() != grid_a.len() || psi.ncols() != grid_b.len() {
            return Err(Error::GridMismatch);
        }
        if !(m_a > 0.0 && m_b > 0.0 && hbar > 0.0) {
            return Err(Error::InvalidArgument("masses and hbar must be positive".into()));
        }
        let s = Self { grid_a, grid_b, psi, m_a, m_b, hbar };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NormalizationError { norm });
        }
        Ok(s)
    }

    /// Rescales `ψ` to unit norm before validation.
    pub fn normalized(grid_a: Grid1D, grid_b: Grid1D, mut psi: DMatrix<Complex64>, m_a: f64, m_b: f64, hbar: f64) -> Result<Self> {
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid_a.dx() * grid_b.dx();
        if !(norm > 0.0) {
            return Err(Error::DegenerateState);
        }
        psi /= Complex64::from(norm.sqrt());
        Self::new(grid_a, grid_b, psi, m_a, m_b, hbar)
    }

    pub fn product(a: &WaveFunction, b: &WaveFunction) -> Result<Self> {
        if (a.hbar - b.hbar).abs() > 0.0 {
            return Err(Error::InvalidArgument("factors carry different hbar".into()));
        }
        let psi = DMatrix::from_fn(a.grid().len(), b.grid().len(), |i, j| a.values()[i] * b.values()[j]);
        Self::new(a.grid(), b.grid(), psi, a.m, b.m, a.hbar)
    }

    /// `ψ ∝ exp(−(λ_a − λ_b)²/4s² − (λ_a + λ_b)²/4S²)` on a shared grid.
    pub fn epr_gaussian(grid: Grid1D, m: f64, hbar: f64, s: f64, big_s: f64) -> Result<Self> {
        let psi = DMatrix::from_fn(grid.len(), grid.len(), |i, j| {
            let (a, b) = (grid.x(i), grid.x(j));
            Complex64::from((-(a - b).powi(2) / (4.0 * s * s) - (a + b).powi(2) / (4.0 * big_s * big_s)).exp())
        });
        Self::normalized(grid, grid, psi, m, m, hbar)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid_a.dx() * self.grid_b.dx()
    }

    pub fn density(&self) -> DMatrix<f64> {
        self.psi.map(|v| v.norm_sqr())
    }

    /// Whether `ψ` has Schmidt rank one to relative tolerance `tol`.
    pub fn is_product(&self, tol: f64) -> bool {
        let sv = self.psi.clone().singular_values();
        let mut v: Vec<f64> = sv.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v.len() < 2 || v[1] <= tol * v[0]
    }
}

/// `Σₖ ½(Aₖ(λ) v̂ᵏ + v̂ᵏ Aₖ(λ))` with `v̂ = −iħ∂_λ/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    /// `(k, Aₖ sampled on the axis grid)`.
    pub terms: Vec<(usize, Vec<f64>)>,
}

impl Observable {
    pub fn new(name: &str, terms: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        let obs = Self { name: name.to_string(), terms };
        obs.check_degree()?;
        Ok(obs)
    }

    pub fn from_fns(name: &str, grid: &Grid1D, terms: Vec<(usize, &dyn Fn(f64) -> f64)>) -> Result<Self> {
        Self::new(name, terms.into_iter().map(|(k, f)| (k, grid.sample(f))).collect())
    }

    pub fn position(name: &str, grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(name, vec![(0, grid.sample(f))])
    }

    pub fn velocity_power(name: &str, grid: &Grid1D, k: usize) -> Result<Self> {
        Self::new(name, vec![(k, vec![1.0; grid.len()])])
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.0).max().unwrap_or(0)
    }

    fn check_degree(&self) -> Result<()> {
        let d = self.degree();
        if d > MAX_OBSERVABLE_DEGREE {
            return Err(Error::OrderError { order: d, max: MAX_OBSERVABLE_DEGREE });
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        if self.terms.iter().any(|t| t.1.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Classical value `Σₖ Aₖ(λ) vᵏ` at grid index `i`.
    pub fn classical(&self, i: usize, v: f64) -> f64 {
        self.terms.iter().map(|(k, a)| a[i] * v.powi(*k as i32)).sum()
    }

    fn apply(&self, f: &[Complex64], grid: &Grid1D, m: f64, hbar: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); f.len()];
        for (k, a) in &self.terms {
            let vk = velocity_power(f, grid, m, hbar, *k);
            let af: Vec<Complex64> = f.iter().zip(a).map(|(v, a)| v * a).collect();
            let vka = velocity_power(&af, grid, m, hbar, *k);
            for i in 0..f.len() {
                out[i] += 0.5 * (a[i] * vk[i] + vka[i]);
            }
        }
        out
    }
}

fn velocity_power(f: &[Complex64], grid: &Grid1D, m: f64, hbar: f64, k: usize) -> Vec<Complex64> {
    if k == 0 {
        return f.to_vec();
    }
    let mut v = f.to_vec();
    fft_in_place(&mut v);
    let c = (Complex64::new(0.0, -hbar / m)).powi(k as i32);
    for (j, x) in v.iter_mut().enumerate() {
        *x *= c * grid.derivative_multiplier(j, k as u32);
    }
    ifft_in_place(&mut v);
    v
}

fn apply_rows(psi: &DMatrix<Complex64>, obs: &Observable, grid: &Grid1D, m: f64, hbar: f64) -> DMatrix<Complex64> {
    // acts on the λ_b index of each row
    let mut out = psi.clone();
    for i in 0..psi.nrows() {
        let row: Vec<Complex64> = psi.row(i).iter().copied().collect();
        for (j, v) in obs.apply(&row, grid, m, hbar).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

fn apply_cols(psi: &DMatrix<Complex64>, obs: &Observable, grid: &Grid1D, m: f64, hbar: f64) -> DMatrix<Complex64> {
    let mut out = psi.clone();
    for j in 0..psi.ncols() {
        let col: Vec<Complex64> = psi.column(j).iter().copied().collect();
        for (i, v) in obs.apply(&col, grid, m, hbar).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// `⟨ψ|Â ⊗ B̂|ψ⟩`.
pub fn quantum_correlation(state: &TwoParticleState, a: &Observable, b: &Observable) -> Result<f64> {
    a.check_degree()?;
    b.check_degree()?;
    a.check_grid(&state.grid_a)?;
    b.check_grid(&state.grid_b)?;
    let bpsi = apply_rows(&state.psi, b, &state.grid_b, state.m_b, state.hbar);
    let abpsi = apply_cols(&bpsi, a, &state.grid_a, state.m_a, state.hbar);
    let z: Complex64 = state.psi.iter().zip(abpsi.iter()).map(|(p, q)| p.conj() * q).sum::<Complex64>() * state.grid_a.dx() * state.grid_b.dx();
    if z.im.abs() > IMAG_TOL {
        return Err(Error::HermiticityError { deviation: z.im.abs() });
    }
    Ok(z.re)
}

/// Relative density below which the conditional drift is set to zero.
pub const DRIFT_SUPPORT: f64 = 1e-24;

/// Conditional drift fields `(v̄_a, v̄_b)` at each configuration.
pub fn conditional_drifts(state: &TwoParticleState) -> (DMatrix<f64>, DMatrix<f64>) {
    let unit = |g: &Grid1D| Observable { name: String::new(), terms: vec![(1, vec![1.0; g.len()])] };
    // v̂ψ without the symmetrization factor, v̄ = Re(ψ* v̂ψ)/|ψ|²
    let da = apply_cols(&state.psi, &unit(&state.grid_a), &state.grid_a, state.m_a, state.hbar);
    let db = apply_rows(&state.psi, &unit(&state.grid_b), &state.grid_b, state.m_b, state.hbar);
    let floor = DRIFT_SUPPORT * state.psi.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    let drift = |d: &DMatrix<Complex64>| {
        DMatrix::from_fn(state.psi.nrows(), state.psi.ncols(), |i, j| {
            let p = state.psi[(i, j)];
            let n = p.norm_sqr();
            if n > floor {
                (p.conj() * d[(i, j)]).re / n
            } else {
                0.0
            }
        })
    };
    (drift(&da), drift(&db))
}

/// `∬ A(λ_a, v̄_a) B(λ_b, v̄_b) P dλ_a dλ_b`.
pub fn bell_naive_correlation(state: &TwoParticleState, a: &Observable, b: &Observable) -> Result<f64> {
    a.check_grid(&state.grid_a)?;
    b.check_grid(&state.grid_b)?;
    let (va, vb) = conditional_drifts(state);
    let p = state.density();
    let mut sum = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            sum += a.classical(i, va[(i, j)]) * b.classical(j, vb[(i, j)]) * p[(i, j)];
        }
    }
    Ok(sum * state.grid_a.dx() * state.grid_b.dx())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapClass {
    Agree,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub a: String,
    pub b: String,
    pub quantum: f64,
    pub naive: f64,
    pub gap: f64,
    pub class: GapClass,
    /// Highest velocity power across the pair.
    pub velocity_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub product_state: bool,
    pub rows: Vec<GapRow>,
}

impl GapReport {
    /// On product states every pair of at most linear velocity dependence
    /// must agree.
    pub fn separability_holds(&self) -> bool {
        !self.product_state || self.rows.iter().filter(|r| r.velocity_degree <= 1).all(|r| r.class == GapClass::Agree)
    }

    pub fn gap_count(&self) -> usize {
        self.rows.iter().filter(|r| r.class == GapClass::Gap).count()
    }
}

pub fn gap_report(state: &TwoParticleState, pairs: &[(Observable, Observable)]) -> Result<GapReport> {
    let rows = pairs
        .par_iter()
        .map(|(a, b)| {
            let quantum = quantum_correlation(state, a, b)?;
            let naive = bell_naive_correlation(state, a, b)?;
            let gap = quantum - naive;
            Ok(GapRow {
                a: a.name.clone(),
                b: b.name.clone(),
                quantum,
                naive,
                gap,
                class: if gap.abs() < AGREE_TOL { GapClass::Agree } else { GapClass::Gap },
                velocity_degree: a.degree().max(b.degree()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport { product_state: state.is_product(1e-8), rows })
}

/// `⟨v_a v_b⟩ = (ħ²/4m²)(1/S² − 1/s²)` for [`TwoParticleState::epr_gaussian`].
pub fn epr_velocity_covariance(m: f64, hbar: f64, s: f64, big_s: f64) -> f64 {
    hbar * hbar / (4.0 * m * m) * (1.0 / (big_s * big_s) - 1.0 / (s * s))
}

/// `⟨λ_a λ_b⟩ = (S² − s²)/4` for [`TwoParticleState::epr_gaussian`].
pub fn epr_position_covariance(s: f64, big_s: f64) -> f64 {
    (big_s * big_s - s * s) / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::families::gaussian;

    fn grid() -> Grid1D {
        Grid1D::symmetric(256, 16.0).unwrap()
    }

    fn product() -> TwoParticleState {
        let g = Grid1D::symmetric(128, 12.0).unwrap();
        let a = gaussian(g, 1.0, 1.0, 0.5, 1.0, 0.7).unwrap();
        let b = gaussian(g, 1.0, 1.0, -1.0, 0.8, -0.3).unwrap();
        TwoParticleState::product(&a, &b).unwrap()
    }

    #[test]
    fn product_positions_factorize() {
        let s = product();
        let g = s.grid_a;
        let (la, lb) = (Observable::position("x_a", &g, |x| x).unwrap(), Observable::position("x_b", &g, |x| x).unwrap());
        let q = quantum_correlation(&s, &la, &lb).unwrap();
        assert!((q - 0.5 * -1.0).abs() < 1e-10);
        assert!((bell_naive_correlation(&s, &la, &lb).unwrap() - q).abs() < 1e-9);
    }

    #[test]
    fn product_velocities_factorize() {
        let s = product();
        let g = s.grid_a;
        let v = Observable::velocity_power("v", &g, 1).unwrap();
        let q = quantum_correlation(&s, &v, &v).unwrap();
        assert!((q - 0.7 * -0.3).abs() < 1e-9);
        assert!((bell_naive_correlation(&s, &v, &v).unwrap() - q).abs() < 1e-8);
    }

    #[test]
    fn epr_velocity_gap_matches_covariance() {
        let g = grid();
        let s = TwoParticleState::epr_gaussian(g, 1.0, 1.0, 1.0, 3.0).unwrap();
        let v = Observable::velocity_power("v", &g, 1).unwrap();
        let x = Observable::position("x", &g, |x| x).unwrap();
        let exact = epr_velocity_covariance(1.0, 1.0, 1.0, 3.0);
        let rep = gap_report(&s, &[(v.clone(), v.clone()), (x.clone(), x.clone())]).unwrap();
        assert!(!rep.product_state);
        assert!((rep.rows[0].quantum - exact).abs() < 1e-5 * exact.abs());
        assert!(rep.rows[0].naive.abs() < 1e-12);
        assert_eq!(rep.rows[0].class, GapClass::Gap);
        assert!((rep.rows[1].quantum - epr_position_covariance(1.0, 3.0)).abs() < 1e-8);
        assert_eq!(rep.rows[1].class, GapClass::Agree);
    }

    #[test]
    fn degree_overflow() {
        let g = grid();
        assert!(matches!(Observable::velocity_power("v5", &g, 5), Err(Error::OrderError { .. })));
    }
}
