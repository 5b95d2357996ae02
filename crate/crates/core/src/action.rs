//! Retarded/advanced split of finite-Δt transition densities and the
//! probabilistic reading of action and Lagrangian.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{evolve_field, Integrator};
use crate::grid::{ComplexField, Grid1D};
use crate::hamiltonian::HamiltonianSpec;
use crate::hj::support_mask;
use crate::moments::{check_km_config, double_limit, local_moments, regularized_slice, slice_derivatives, KmConfig, KmResult, MomentOrdering};
use crate::state::WaveFunction;

/// Transition amplitude `w(x + Δx, t + Δt; x, t)` over all offsets, with
/// its polar fields.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSlab {
    pub x: f64,
    pub t: f64,
    pub dt: f64,
    pub sigma: f64,
    pub w: ComplexField,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    /// Principal phase of `w`.
    pub s: Vec<f64>,
    /// `P(x, t)` at the base point.
    pub base_density: f64,
}

impl TransitionSlab {
    /// Regularized slice at the grid point nearest `x`, evolved by `dt`
    /// (either sign) in `substeps` steps.
    pub fn build(psi: &WaveFunction, ham: &HamiltonianSpec, x: f64, dt: f64, sigma: f64, substeps: usize, integrator: Integrator) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("slice width must be positive, got {sigma}")));
        }
        if dt == 0.0 || !dt.is_finite() || substeps == 0 {
            return Err(Error::BadTimeStep(dt));
        }
        let g = psi.grid();
        let i = g.nearest_index(x);
        let mut w = regularized_slice(psi, i, sigma);
        evolve_field(&mut w, ham, dt / substeps as f64, substeps, integrator)?;
        Ok(Self::from_amplitude(w, g.x(i), psi.time(), dt, sigma, psi.values()[i].norm_sqr()))
    }

    pub fn from_amplitude(w: ComplexField, x: f64, t: f64, dt: f64, sigma: f64, base_density: f64) -> Self {
        let p = w.values.iter().map(|v| v.norm_sqr()).collect();
        let r = w.values.iter().map(|v| v.norm()).collect();
        let s = w.values.iter().map(|v| v.arg()).collect();
        Self { x, t, dt, sigma, w, p, r, s, base_density }
    }

    pub fn grid(&self) -> Grid1D {
        self.w.grid
    }

    /// Offsets `Δx` of each cell from the base point.
    pub fn offsets(&self) -> Vec<f64> {
        let g = self.grid();
        (0..g.len()).map(|j| g.wrapped_offset(g.x(j), self.x)).collect()
    }

    /// `|∫P dΔx / P(x) − 1|`.
    pub fn marginal_error(&self) -> f64 {
        let total: f64 = self.p.iter().sum::<f64>() * self.grid().dx();
        (total / self.base_density - 1.0).abs()
    }

    /// Adds `delta` to the stored phase field on cells with `Δx > 0`
    /// without touching the amplitude.
    pub fn perturb_phase_one_sided(&mut self, delta: f64) {
        let off = self.offsets();
        self.s.iter_mut().zip(off).filter(|(_, o)| *o > 0.0).for_each(|(s, _)| *s += delta);
    }
}

/// Time-ordered halves of a slab's transition density.
#[derive(Debug, Clone, PartialEq)]
pub struct RetardedAdvanced {
    pub p_ret: Vec<f64>,
    pub p_adv: Vec<f64>,
    /// `2 w_s w_a`.
    pub f_a: Vec<f64>,
    /// Cells where either half is negative.
    pub negative: Vec<bool>,
}

impl RetardedAdvanced {
    pub fn negative_count(&self) -> usize {
        self.negative.iter().filter(|&&b| b).count()
    }
}

/// `w_s = Re w = r cos s`, `w_a = Im w = r sin s`,
/// `P_ret = ½P + w_s w_a`, `P_adv = ½P − w_s w_a`.
pub fn retarded_advanced_split(slab: &TransitionSlab) -> RetardedAdvanced {
    let n = slab.w.values.len();
    let (mut p_ret, mut p_adv, mut f_a, mut negative) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![false; n]);
    for (j, v) in slab.w.values.iter().enumerate() {
        let (ws, wa) = (v.re, v.im);
        let half = 0.5 * (ws * ws + wa * wa);
        p_ret[j] = half + ws * wa;
        p_adv[j] = half - ws * wa;
        f_a[j] = 2.0 * ws * wa;
        negative[j] = p_ret[j] < 0.0 || p_adv[j] < 0.0;
    }
    RetardedAdvanced { p_ret, p_adv, f_a, negative }
}

/// `max |P sin 2s − (P_ret − P_adv)|`, the left side from the stored polar
/// fields and the right side from the Cartesian split.
pub fn action_identity_residual(slab: &TransitionSlab) -> f64 {
    let split = retarded_advanced_split(slab);
    slab.p
        .iter()
        .zip(&slab.s)
        .zip(split.p_ret.iter().zip(&split.p_adv))
        .map(|((p, s), (a, b))| (p * (2.0 * s).sin() - (a - b)).abs())
        .fold(0.0, f64::max)
}

/// Extrapolated `⟨l⟩(x)P(x)` with the moment-based target.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianLimit {
    pub extraction: KmResult,
    /// `l₀μ₀ + l₁μ₁ + ½l₂μ₂` at the same points.
    pub target: Vec<f64>,
    /// `max |extracted − target| / max |target|` over `P > 1e−6·max P`.
    pub relative_deviation: f64,
}

impl LagrangianLimit {
    pub fn value_at(&self, x: f64) -> Option<(f64, f64)> {
        let k = self.extraction.x.iter().position(|&v| (v - x).abs() < 1e-12)?;
        Some((self.extraction.values[k], self.target[k]))
    }
}

fn half_split_integral(w: &ComplexField) -> f64 {
    // ½∫(P_ret − P_adv) = ½∫Im(w²)
    0.5 * w.values.iter().map(|v| (v * v).im).sum::<f64>() * w.grid.dx()
}

/// `⟨l⟩P = ½ lim ∫(P_ret − P_adv)/Δt dΔx` through the Kramers–Moyal double
/// limit: central first difference in `Δt`, Richardson in `Δt²`, then the
/// finite part of a `{σ⁻², 1, σ²}` fit.
pub fn lagrangian_limit(ham: &HamiltonianSpec, psi: &WaveFunction, cfg: &KmConfig) -> Result<LagrangianLimit> {
    ham.ensure_quadratic()?;
    if ham.has_vector_potential() || !ham.phi.is_zero() {
        return Err(Error::UnsupportedProcess("Lagrangian limit supports free and scalar-potential Hamiltonians".into()));
    }
    check_km_config(cfg)?;
    let g = psi.grid();
    let idx: Vec<usize> = cfg.points.iter().map(|&x| g.nearest_index(x)).collect();
    let raw: Vec<Vec<Vec<f64>>> = idx.par_iter().map(|&i| slice_derivatives(psi, ham, cfg, i, 1, &half_split_integral)).collect::<Result<_>>()?;
    let extraction = double_limit(psi, cfg, &idx, &raw, &[-2, 0, 2], 0, 1)?;
    let mf = local_moments(psi, ham, 2, MomentOrdering::Operator)?;
    let c = ham.coefficients();
    let target: Vec<f64> = idx.iter().map(|&i| c.lagrangian_density(g.x(i), psi.time(), mf.mu(0)[i], mf.mu(1)[i], mf.mu(2)[i])).collect();
    let mask = support_mask(&extraction.density, 1e-6);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for k in 0..idx.len() {
        if mask[k] {
            num = num.max((extraction.values[k] - target[k]).abs());
            den = den.max(target[k].abs());
        }
    }
    let relative_deviation = if den > 0.0 { num / den } else { num };
    Ok(LagrangianLimit { extraction, target, relative_deviation })
}

/// `½∫Im(w²)` of a slab, the quantity whose `Δt`-slope defines `⟨l⟩P`.
pub fn slab_half_split(slab: &TransitionSlab) -> f64 {
    half_split_integral(&slab.w)
}

#[doc(hidden)]
pub fn polar_slab(grid: Grid1D, r: impl Fn(f64) -> f64, s: impl Fn(f64) -> f64) -> TransitionSlab {
    let w = ComplexField { grid, values: grid.xs().iter().map(|&x| Complex64::from_polar(r(x), s(x))).collect(), time: 0.0 };
    let base: f64 = w.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dx();
    TransitionSlab::from_amplitude(w, 0.0, 0.0, 0.0, 0.0, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::families::gaussian;

    fn g() -> Grid1D {
        Grid1D::symmetric(512, 16.0).unwrap()
    }

    #[test]
    fn time_symmetric_slab_splits_evenly() {
        let slab = polar_slab(g(), |x| (-x * x).exp(), |_| 0.0);
        let sp = retarded_advanced_split(&slab);
        for (j, p) in slab.p.iter().enumerate() {
            assert!((sp.p_ret[j] - 0.5 * p).abs() < 1e-15 && (sp.p_adv[j] - 0.5 * p).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_phase_is_fully_retarded() {
        let slab = polar_slab(g(), |x| (-x * x).exp(), |_| std::f64::consts::FRAC_PI_4);
        let sp = retarded_advanced_split(&slab);
        for (j, p) in slab.p.iter().enumerate() {
            assert!((sp.p_ret[j] - p).abs() < 1e-15 && sp.p_adv[j].abs() < 1e-15);
        }
    }

    #[test]
    fn free_and_harmonic_slabs_satisfy_identity() {
        let psi = gaussian(g(), 1.0, 1.0, 0.3, 1.0, 0.4).unwrap();
        for ham in [HamiltonianSpec::free(1.0, 1.0).unwrap(), HamiltonianSpec::harmonic(1.0, 1.0, 1.0).unwrap()] {
            let slab = TransitionSlab::build(&psi, &ham, 0.0, 0.1, 0.05, 10, Integrator::SplitStep).unwrap();
            assert!(action_identity_residual(&slab) < 1e-12);
            assert!(slab.marginal_error() < 1e-6);
        }
    }

    #[test]
    fn one_sided_phase_corruption_is_detected() {
        let psi = gaussian(g(), 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let ham = HamiltonianSpec::free(1.0, 1.0).unwrap();
        let mut slab = TransitionSlab::build(&psi, &ham, 0.0, 0.1, 0.5, 10, Integrator::SplitStep).unwrap();
        let pmax = slab.p.iter().copied().fold(0.0, f64::max);
        let delta = 1e-3;
        slab.perturb_phase_one_sided(delta);
        let res = action_identity_residual(&slab);
        assert!(res > 0.5 * delta * pmax && res < 2.5 * delta * pmax, "{res}");
    }
}
