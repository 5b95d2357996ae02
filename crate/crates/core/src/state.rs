//! Wave functions, density matrices and their decompositions.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, integrate_real, ComplexField, Grid1D, RealField};
use crate::hamiltonian::{HamiltonianSpec, SpaceTimeFn};

pub const NORM_TOL: f64 = 1e-9;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-9;

/// Normalized complex wave function with the mass and ħ it is meant for.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub field: ComplexField,
    pub m: f64,
    pub hbar: f64,
}

impl WaveFunction {
    /// Wraps a field, rejecting it unless `∫|ψ|² = 1 ± 1e−9`.
    pub fn new(field: ComplexField, m: f64, hbar: f64) -> Result<Self> {
        let psi = Self { field, m, hbar };
        let norm = psi.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NormalizationError { norm });
        }
        Ok(psi)
    }

    /// Rescales an arbitrary nonzero field to unit norm.
    pub fn normalized(field: ComplexField, m: f64, hbar: f64) -> Result<Self> {
        let norm = integrate_real(&field.norm_sqr());
        if !(norm > 0.0) {
            return Err(Error::DegenerateState);
        }
        let s = Complex64::new(norm.sqrt().recip(), 0.0);
        Ok(Self { field: field.scale(s), m, hbar })
    }

    /// Unchecked constructor for values produced by norm-preserving maps.
    pub(crate) fn from_parts(field: ComplexField, m: f64, hbar: f64) -> Self {
        Self { field, m, hbar }
    }

    pub fn grid(&self) -> Grid1D {
        self.field.grid
    }

    pub fn time(&self) -> f64 {
        self.field.time
    }

    pub fn values(&self) -> &[Complex64] {
        &self.field.values
    }

    pub fn norm_sqr(&self) -> f64 {
        integrate_real(&self.field.norm_sqr())
    }

    /// `P(x) = |ψ(x)|²`.
    pub fn density(&self) -> RealField {
        self.field.norm_sqr()
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.field.time = t;
        self
    }

    /// Multiplies by a global phase `e^{iθ}`.
    pub fn phase_shifted(&self, theta: f64) -> Self {
        Self::from_parts(self.field.scale(Complex64::from_polar(1.0, theta)), self.m, self.hbar)
    }

    /// Probability mass within `width` of either end of the grid.
    pub fn boundary_mass(&self, width: f64) -> f64 {
        let g = self.grid();
        let p = self.density();
        p.values
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                let x = g.x(*j);
                x - g.x_min() < width || g.x_max() - x <= width
            })
            .map(|(_, v)| v * g.dx())
            .sum()
    }
}

/// Elementwise polar form `ψ = r·e^{iS/ħ}` with an unwrapped phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    pub grid: Grid1D,
    pub r: Vec<f64>,
    /// Action `S = ħ·phase`.
    pub s: Vec<f64>,
    /// Number of `2π` turns added to the principal argument in each cell.
    pub branch_offsets: Vec<i64>,
    pub amplitude_floor: f64,
    pub hbar: f64,
    pub time: f64,
}

impl PolarField {
    pub fn phase(&self) -> Vec<f64> {
        self.s.iter().map(|s| s / self.hbar).collect()
    }

    pub fn reconstruct(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.r.iter().zip(&self.s).map(|(&r, &s)| Complex64::from_polar(r, s / self.hbar)).collect(),
            time: self.time,
        }
    }

    /// Cells with amplitude above the floor.
    pub fn support(&self) -> Vec<bool> {
        self.r.iter().map(|&r| r > self.amplitude_floor).collect()
    }
}

fn wrap_to_pi(d: f64) -> f64 {
    d - TAU * ((d + PI) / TAU).floor()
}

/// Polar decomposition with shortest-jump unwrapping outward from the
/// amplitude maximum. The phase is held fixed across cells at or below the
/// floor (default `1e−8·max r`).
pub fn polar_decompose(psi: &WaveFunction, amplitude_floor: Option<f64>) -> Result<PolarField> {
    polar_decompose_field(&psi.field, psi.hbar, amplitude_floor)
}

pub fn polar_decompose_field(f: &ComplexField, hbar: f64, amplitude_floor: Option<f64>) -> Result<PolarField> {
    let r: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    let rmax = r.iter().copied().fold(0.0, f64::max);
    if !(rmax > 0.0) {
        return Err(Error::DegenerateState);
    }
    let floor = amplitude_floor.unwrap_or(1e-8 * rmax);
    let raw: Vec<f64> = f.values.iter().map(|v| v.arg()).collect();
    let n = r.len();
    let i0 = r.iter().enumerate().fold(0, |b, (i, &v)| if v > r[b] { i } else { b });
    let mut phase = vec![0.0; n];
    phase[i0] = raw[i0];
    let step = |range: &mut dyn Iterator<Item = usize>, phase: &mut Vec<f64>| {
        let mut last = raw[i0];
        for j in range {
            if r[j] > floor {
                last += wrap_to_pi(raw[j] - last);
            }
            phase[j] = last;
        }
    };
    step(&mut (i0 + 1..n), &mut phase);
    step(&mut (0..i0).rev(), &mut phase);
    let branch_offsets = phase.iter().zip(&raw).map(|(p, a)| ((p - a) / TAU).round() as i64).collect();
    Ok(PolarField {
        grid: f.grid,
        r,
        s: phase.iter().map(|p| p * hbar).collect(),
        branch_offsets,
        amplitude_floor: floor,
        hbar,
        time: f.time,
    })
}

/// Equal-time density matrix `ρ(x'; x)`, rows indexed by `x'`. Stored values
/// are continuum kernel values; `dx` enters only in traces and contractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub grid: Grid1D,
    pub kernel: DMatrix<Complex64>,
    pub time: f64,
}

/// Measured density-matrix axioms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomReport {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl AxiomReport {
    pub fn passes(&self) -> bool {
        self.hermiticity < HERMITICITY_TOL && (self.trace - 1.0).abs() <= TRACE_TOL && self.min_eigenvalue >= -PSD_TOL
    }
}

/// One term `cₙ ψₙ ψₙ*` of a spectral decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralComponent {
    pub weight: f64,
    pub state: ComplexField,
}

impl DensityMatrix {
    pub fn from_kernel(grid: Grid1D, kernel: DMatrix<Complex64>, time: f64) -> Result<Self> {
        if kernel.nrows() != grid.len() || kernel.ncols() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, kernel, time })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `ρ(x; x)`.
    pub fn diagonal(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: (0..self.len()).map(|i| self.kernel[(i, i)].re).collect(),
            time: self.time,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.kernel[(i, i)].re).sum::<f64>() * self.grid.dx()
    }

    /// `max |ρ(x'; x) − ρ*(x; x')|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.len();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.kernel[(i, j)] - self.kernel[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Eigenvalues of the operator `ρ·dx`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = self.hermitian_part() * Complex64::new(self.grid.dx(), 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn check_axioms(&self) -> AxiomReport {
        let ev = self.eigenvalues();
        AxiomReport {
            hermiticity: self.hermiticity_deviation(),
            trace: self.trace(),
            min_eigenvalue: ev.last().copied().unwrap_or(0.0),
        }
    }

    /// Entries below `EIGEN_FLUSH` are zeroed; tails spanning hundreds of
    /// decades make the Hermitian eigensolver return NaN.
    fn hermitian_part(&self) -> DMatrix<Complex64> {
        ((&self.kernel + self.kernel.adjoint()) * Complex64::new(0.5, 0.0))
            .map(|v| if v.norm() < EIGEN_FLUSH { Complex64::new(0.0, 0.0) } else { v })
    }

    /// Elementwise `r_ρ = |ρ|` and `s_ρ = arg ρ`.
    pub fn elementwise_polar(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.kernel.map(|c| c.norm()), self.kernel.map(|c| c.arg()))
    }

    /// `p·self + q·other`.
    pub fn affine(&self, p: f64, other: &DensityMatrix, q: f64) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            kernel: &self.kernel * Complex64::new(p, 0.0) + &other.kernel * Complex64::new(q, 0.0),
            time: self.time,
        })
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (&self.kernel - &other.kernel).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Column `x` of the kernel, i.e. `ρ(·; x)`.
    pub fn column(&self, j: usize) -> ComplexField {
        ComplexField { grid: self.grid, values: self.kernel.column(j).iter().copied().collect(), time: self.time }
    }
}

/// `ρ(x'; x) = ψ(x')ψ*(x)`.
const EIGEN_FLUSH: f64 = 1e-60;

pub fn density_from_pure(psi: &WaveFunction) -> Result<DensityMatrix> {
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NormalizationError { norm });
    }
    let v = nalgebra::DVector::from_column_slice(psi.values());
    Ok(DensityMatrix { grid: psi.grid(), kernel: &v * v.adjoint(), time: psi.time() })
}

/// `ρ = Σ pᵢ ψᵢψᵢ*` with positive weights summing to one.
pub fn density_from_mixture(states: &[(f64, WaveFunction)]) -> Result<DensityMatrix> {
    let first = states.first().ok_or_else(|| Error::WeightError("empty mixture".into()))?;
    if let Some((p, _)) = states.iter().find(|(p, _)| !(*p > 0.0)) {
        return Err(Error::WeightError(format!("weight {p} is not positive")));
    }
    let total: f64 = states.iter().map(|(p, _)| p).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::WeightError(format!("weights sum to {total}")));
    }
    let grid = first.1.grid();
    let mut kernel = DMatrix::zeros(grid.len(), grid.len());
    for (p, psi) in states {
        ensure_same_grid(&grid, &psi.grid())?;
        let rho = density_from_pure(psi)?;
        kernel += rho.kernel * Complex64::new(*p, 0.0);
    }
    Ok(DensityMatrix { grid, kernel, time: first.1.time() })
}

/// Eigen-decomposition of `ρ` as an operator on `L²` with the grid measure.
/// Eigenfunctions are normalized under grid quadrature; weights descend.
pub fn spectral_decompose(rho: &DensityMatrix) -> Result<Vec<SpectralComponent>> {
    let scale = rho.kernel.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let deviation = rho.hermiticity_deviation();
    if deviation > HERMITICITY_TOL * scale {
        return Err(Error::HermiticityError { deviation });
    }
    let dx = rho.grid.dx();
    let eig = (rho.hermitian_part() * Complex64::new(dx, 0.0)).symmetric_eigen();
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let s = Complex64::new(dx.sqrt().recip(), 0.0);
    Ok(order
        .into_iter()
        .map(|i| SpectralComponent {
            weight: eig.eigenvalues[i],
            state: ComplexField {
                grid: rho.grid,
                values: eig.eigenvectors.column(i).iter().map(|c| c * s).collect(),
                time: rho.time,
            },
        })
        .collect())
}

/// Rebuilds `Σ cₙψₙψₙ*` from components.
pub fn reconstruct_density(grid: Grid1D, components: &[SpectralComponent], time: f64) -> DensityMatrix {
    let mut kernel = DMatrix::zeros(grid.len(), grid.len());
    for c in components {
        let v = nalgebra::DVector::from_column_slice(&c.state.values);
        kernel += (&v * v.adjoint()) * Complex64::new(c.weight, 0.0);
    }
    DensityMatrix { grid, kernel, time }
}

/// Local phase change `χ(x, t)` with its derivatives.
#[derive(Debug, Clone)]
pub struct Gauge {
    pub chi: SpaceTimeFn,
    pub chi_x: SpaceTimeFn,
    pub chi_t: SpaceTimeFn,
}

impl Gauge {
    pub fn constant(c: f64) -> Self {
        Self { chi: SpaceTimeFn::constant(c), chi_x: SpaceTimeFn::zero(), chi_t: SpaceTimeFn::zero() }
    }

    /// `χ = αx`.
    pub fn linear(alpha: f64) -> Self {
        Self {
            chi: SpaceTimeFn::static_fn("alpha*x", move |x| alpha * x).with_dx(move |_, _| alpha),
            chi_x: SpaceTimeFn::constant(alpha),
            chi_t: SpaceTimeFn::zero(),
        }
    }

    /// `χ = αxt`.
    pub fn linear_in_time(alpha: f64) -> Self {
        Self {
            chi: SpaceTimeFn::dynamic("alpha*x*t", move |x, t| alpha * x * t),
            chi_x: SpaceTimeFn::uniform_in_time("alpha*t", move |t| alpha * t).with_dt(move |_, _| alpha),
            chi_t: SpaceTimeFn::static_fn("alpha*x", move |x| alpha * x).with_dx(move |_, _| alpha),
        }
    }

    /// General `χ`; derivatives come from the function's own derivative
    /// rules.
    pub fn general(chi: SpaceTimeFn) -> Self {
        let (c1, c2) = (chi.clone(), chi.clone());
        let static_ = chi.is_static();
        let chi_x = SpaceTimeFn::dynamic("dchi/dx", move |x, t| c1.dx(x, t));
        let chi_t = if static_ { SpaceTimeFn::zero() } else { SpaceTimeFn::dynamic("dchi/dt", move |x, t| c2.dt(x, t)) };
        Self { chi, chi_x, chi_t }
    }

    fn is_global(&self) -> bool {
        self.chi_x.is_zero() && self.chi_t.is_zero()
    }
}

/// `ψ → e^{iχ}ψ`, `eA → eA + ħ∂ₓχ`, `eφ → eφ − ħ∂ₜχ`, which leaves the
/// minimally coupled Schrödinger equation form-invariant.
pub fn gauge_transform(psi: &WaveFunction, ham: &HamiltonianSpec, gauge: &Gauge) -> Result<(WaveFunction, HamiltonianSpec)> {
    let t = psi.time();
    let g = psi.grid();
    let field = ComplexField {
        grid: g,
        values: psi.values().iter().enumerate().map(|(j, v)| v * Complex64::from_polar(1.0, gauge.chi.eval(g.x(j), t))).collect(),
        time: t,
    };
    let mut out = ham.clone();
    if !gauge.is_global() {
        if ham.e == 0.0 {
            return Err(Error::ZeroCharge);
        }
        let k = ham.hbar / ham.e;
        out.a = ham.a.combine(1.0, &gauge.chi_x, k);
        out.phi = ham.phi.combine(1.0, &gauge.chi_t, -k);
    }
    Ok((WaveFunction::from_parts(field, psi.m, psi.hbar), out))
}

/// Named state families used by scenarios, tests and oracles.
pub mod families {
    use super::*;

    /// `(2πσ²)^{-1/4} exp(−(x−x₀)²/4σ² + ik₀x)`.
    pub fn gaussian(grid: Grid1D, m: f64, hbar: f64, x0: f64, sigma: f64, k0: f64) -> Result<WaveFunction> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let c = (TAU * sigma * sigma).powf(-0.25);
        let f = ComplexField::from_fn(grid, 0.0, |x| {
            Complex64::from_polar(c * (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k0 * x)
        })?;
        WaveFunction::normalized(f, m, hbar)
    }

    /// `n`-th harmonic-oscillator eigenfunction (real, positive leading
    /// coefficient) via the normalized Hermite recursion.
    pub fn harmonic_eigenstate(grid: Grid1D, m: f64, hbar: f64, omega: f64, n: usize) -> Result<WaveFunction> {
        let f = ComplexField::from_fn(grid, 0.0, |x| Complex64::new(hermite_function(n, x * (m * omega / hbar).sqrt()), 0.0))?;
        WaveFunction::normalized(f, m, hbar)
    }

    /// Displaced harmonic ground state with mean momentum `p₀`.
    pub fn coherent(grid: Grid1D, m: f64, hbar: f64, omega: f64, x0: f64, p0: f64) -> Result<WaveFunction> {
        let sigma = (hbar / (2.0 * m * omega)).sqrt();
        gaussian(grid, m, hbar, x0, sigma, p0 / hbar)
    }

    /// `e^{ik x}/√L` with `k` the wave number of FFT bin `bin`.
    pub fn plane_wave(grid: Grid1D, m: f64, hbar: f64, bin: usize) -> Result<WaveFunction> {
        let k = grid.k(bin);
        let a = grid.length().sqrt().recip();
        let f = ComplexField::from_fn(grid, 0.0, |x| Complex64::from_polar(a, k * x))?;
        WaveFunction::normalized(f, m, hbar)
    }

    /// Hermite function `Hₙ(ξ)e^{−ξ²/2}/√(2ⁿn!√π)` in scaled units.
    pub fn hermite_function(n: usize, xi: f64) -> f64 {
        let g = (-0.5 * xi * xi).exp() * PI.powf(-0.25);
        if n == 0 {
            return g;
        }
        let (mut prev, mut cur) = (g, 2f64.sqrt() * xi * g);
        for k in 1..n {
            let next = (2.0 / (k as f64 + 1.0)).sqrt() * xi * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}
