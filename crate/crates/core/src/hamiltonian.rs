//! Hamiltonians in physics variables and in stochastic-coefficient form.
//!
//! The two descriptions are related by
//! `l₀ = −(eφ + V)/ħ`, `l₁ = eA/ħ`, `l₂ = m/ħ`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid1D;

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Real function of `(x, t)` with an optional analytic `∂ₓ` and `∂ₜ`.
#[derive(Clone)]
pub struct SpaceTimeFn {
    f: ScalarFn,
    dx: Option<ScalarFn>,
    dt: Option<ScalarFn>,
    zero: bool,
    uniform: bool,
    static_: bool,
    label: String,
}

impl fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceTimeFn({})", self.label)
    }
}

const FD_STEP: f64 = 1e-5;

impl SpaceTimeFn {
    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_, _| 0.0),
            dx: Some(Arc::new(|_, _| 0.0)),
            dt: Some(Arc::new(|_, _| 0.0)),
            zero: true,
            uniform: true,
            static_: true,
            label: "0".into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self {
            f: Arc::new(move |_, _| c),
            dx: Some(Arc::new(|_, _| 0.0)),
            dt: Some(Arc::new(|_, _| 0.0)),
            zero: false,
            uniform: true,
            static_: true,
            label: format!("{c}"),
        }
    }

    /// Time-independent function of `x`.
    pub fn static_fn<F>(label: &str, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |x, _| f(x)),
            dx: None,
            dt: Some(Arc::new(|_, _| 0.0)),
            zero: false,
            uniform: false,
            static_: true,
            label: label.into(),
        }
    }

    /// General function of `(x, t)`.
    pub fn dynamic<F>(label: &str, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            dx: None,
            dt: None,
            zero: false,
            uniform: false,
            static_: false,
            label: label.into(),
        }
    }

    /// Spatially uniform, possibly time-dependent value.
    pub fn uniform_in_time<F>(label: &str, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |_, t| f(t)),
            dx: Some(Arc::new(|_, _| 0.0)),
            dt: None,
            zero: false,
            uniform: true,
            static_: false,
            label: label.into(),
        }
    }

    pub fn with_dx<F>(mut self, dfdx: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.dx = Some(Arc::new(dfdx));
        self
    }

    pub fn with_dt<F>(mut self, dfdt: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.dt = Some(Arc::new(dfdt));
        self
    }

    /// `½ m ω² (x − x₀)²`.
    pub fn harmonic(m: f64, omega: f64, x0: f64) -> Self {
        let k = m * omega * omega;
        Self::static_fn(&format!("harmonic(m={m}, omega={omega})"), move |x| 0.5 * k * (x - x0).powi(2))
            .with_dx(move |x, _| k * (x - x0))
    }

    /// Polynomial `Σ cᵢ xⁱ`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let c2 = coeffs.clone();
        let label = format!("poly{coeffs:?}");
        Self::static_fn(&label, move |x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)).with_dx(move |x, _| {
            c2.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * x + i as f64 * c)
        })
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.f)(x, t)
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        match &self.dx {
            Some(d) => d(x, t),
            None => (self.eval(x + FD_STEP, t) - self.eval(x - FD_STEP, t)) / (2.0 * FD_STEP),
        }
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        match &self.dt {
            Some(d) => d(x, t),
            None => (self.eval(x, t + FD_STEP) - self.eval(x, t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn sample(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        grid.sample(|x| self.eval(x, t))
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn is_static(&self) -> bool {
        self.static_
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SpaceTimeFn, b: f64) -> Self {
        if other.zero || b == 0.0 {
            return self.scaled(a);
        }
        if self.zero || a == 0.0 {
            return other.scaled(b);
        }
        let (f, g) = (self.clone(), other.clone());
        let (f2, g2) = (self.clone(), other.clone());
        let (f3, g3) = (self.clone(), other.clone());
        Self {
            f: Arc::new(move |x, t| a * f.eval(x, t) + b * g.eval(x, t)),
            dx: Some(Arc::new(move |x, t| a * f2.dx(x, t) + b * g2.dx(x, t))),
            dt: Some(Arc::new(move |x, t| a * f3.dt(x, t) + b * g3.dt(x, t))),
            zero: false,
            uniform: self.uniform && other.uniform,
            static_: self.static_ && other.static_,
            label: format!("{a}*({}) + {b}*({})", self.label, other.label),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        if self.zero || a == 0.0 {
            return Self::zero();
        }
        if a == 1.0 {
            return self.clone();
        }
        let (f, f2, f3) = (self.clone(), self.clone(), self.clone());
        Self {
            f: Arc::new(move |x, t| a * f.eval(x, t)),
            dx: Some(Arc::new(move |x, t| a * f2.dx(x, t))),
            dt: Some(Arc::new(move |x, t| a * f3.dt(x, t))),
            zero: false,
            uniform: self.uniform,
            static_: self.static_,
            label: format!("{a}*({})", self.label),
        }
    }
}

/// `(m, ħ, e, V, A, φ)` plus optional higher stochastic coefficients
/// `l₃, l₄, …` (constants) that no evolution engine accepts.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub m: f64,
    pub hbar: f64,
    pub e: f64,
    pub v: SpaceTimeFn,
    pub a: SpaceTimeFn,
    pub phi: SpaceTimeFn,
    pub higher: Vec<f64>,
}

impl HamiltonianSpec {
    pub fn new(m: f64, hbar: f64, e: f64, v: SpaceTimeFn, a: SpaceTimeFn, phi: SpaceTimeFn) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {m}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { m, hbar, e, v, a, phi, higher: Vec::new() })
    }

    pub fn free(m: f64, hbar: f64) -> Result<Self> {
        Self::new(m, hbar, 1.0, SpaceTimeFn::zero(), SpaceTimeFn::zero(), SpaceTimeFn::zero())
    }

    pub fn harmonic(m: f64, hbar: f64, omega: f64) -> Result<Self> {
        Self::new(m, hbar, 1.0, SpaceTimeFn::harmonic(m, omega, 0.0), SpaceTimeFn::zero(), SpaceTimeFn::zero())
    }

    pub fn with_higher(mut self, higher: Vec<f64>) -> Self {
        self.higher = higher;
        self
    }

    /// `V + eφ`.
    pub fn potential_energy(&self, x: f64, t: f64) -> f64 {
        self.v.eval(x, t) + self.e * self.phi.eval(x, t)
    }

    pub fn potential_energy_dx(&self, x: f64, t: f64) -> f64 {
        self.v.dx(x, t) + self.e * self.phi.dx(x, t)
    }

    pub fn sample_potential_energy(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        grid.sample(|x| self.potential_energy(x, t))
    }

    /// `eA` sampled on the grid.
    pub fn sample_ea(&self, grid: &Grid1D, t: f64) -> Vec<f64> {
        if self.a.is_zero() {
            return vec![0.0; grid.len()];
        }
        grid.sample(|x| self.e * self.a.eval(x, t))
    }

    pub fn ea(&self, x: f64, t: f64) -> f64 {
        self.e * self.a.eval(x, t)
    }

    pub fn has_vector_potential(&self) -> bool {
        !self.a.is_zero() && self.e != 0.0
    }

    /// Rejects processes with nonzero `l_{n>2}`.
    pub fn ensure_quadratic(&self) -> Result<()> {
        match self.higher.iter().position(|&l| l != 0.0) {
            Some(i) => Err(Error::UnsupportedProcess(format!(
                "l{} = {} is nonzero; only quadratic processes can be evolved",
                i + 3,
                self.higher[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn is_free(&self) -> bool {
        self.v.is_zero() && self.phi.is_zero() && !self.has_vector_potential()
    }

    pub fn is_static(&self) -> bool {
        self.v.is_static() && self.a.is_static() && self.phi.is_static()
    }

    pub fn coefficients(&self) -> StochasticCoefficients {
        let (hbar, e) = (self.hbar, self.e);
        StochasticCoefficients {
            l0: self.v.combine(-1.0 / hbar, &self.phi, -e / hbar),
            l1: self.a.scaled(e / hbar),
            l2: self.m / hbar,
            higher: self.higher.clone(),
        }
    }

    /// Builds physics variables from stochastic coefficients, putting the
    /// whole of `l₀` into `V` and `l₁` into `A`.
    pub fn from_coefficients(c: &StochasticCoefficients, hbar: f64, e: f64) -> Result<Self> {
        if !c.l1.is_zero() && e == 0.0 {
            return Err(Error::ZeroCharge);
        }
        let a = if c.l1.is_zero() { SpaceTimeFn::zero() } else { c.l1.scaled(hbar / e) };
        let mut spec = Self::new(c.l2 * hbar, hbar, e, c.l0.scaled(-hbar), a, SpaceTimeFn::zero())?;
        spec.higher = c.higher.clone();
        Ok(spec)
    }
}

/// Stochastic Lagrangian coefficients `⟨l⟩ = l₀ + l₁⟨v⟩ + ½l₂⟨v²⟩ + …`.
#[derive(Debug, Clone)]
pub struct StochasticCoefficients {
    pub l0: SpaceTimeFn,
    pub l1: SpaceTimeFn,
    pub l2: f64,
    pub higher: Vec<f64>,
}

impl StochasticCoefficients {
    /// `l₀μ₀ + l₁μ₁ + ½l₂μ₂` at `(x, t)` given local moment densities.
    pub fn lagrangian_density(&self, x: f64, t: f64, mu0: f64, mu1: f64, mu2: f64) -> f64 {
        self.l0.eval(x, t) * mu0 + self.l1.eval(x, t) * mu1 + 0.5 * self.l2 * mu2
    }

    /// Diagnostic list of the `l_{n>2}` that are nonzero, as `(n, lₙ)`.
    pub fn nonquadratic_terms(&self) -> Vec<(usize, f64)> {
        self.higher.iter().enumerate().filter(|(_, &l)| l != 0.0).map(|(i, &l)| (i + 3, l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_mass_and_hbar() {
        assert!(HamiltonianSpec::free(0.0, 1.0).is_err());
        assert!(HamiltonianSpec::free(1.0, -1.0).is_err());
    }

    #[test]
    fn coefficient_round_trip() {
        let v = SpaceTimeFn::dynamic("v", |x, t| x * x + t);
        let a = SpaceTimeFn::static_fn("a", |x| 0.3 * x);
        let phi = SpaceTimeFn::dynamic("phi", |x, t| (x * t).sin());
        let h = HamiltonianSpec::new(2.0, 0.7, -1.5, v, a, phi).unwrap();
        let c = h.coefficients();
        assert!((c.l2 - 2.0 / 0.7).abs() < 1e-15);
        let back = HamiltonianSpec::from_coefficients(&c, 0.7, -1.5).unwrap();
        assert!((back.m - 2.0).abs() < 1e-14);
        for &(x, t) in &[(0.1, 0.2), (-1.3, 2.0), (4.0, -0.5)] {
            assert!((back.potential_energy(x, t) - h.potential_energy(x, t)).abs() < 1e-12);
            assert!((back.ea(x, t) - h.ea(x, t)).abs() < 1e-12);
            let l0 = -(h.potential_energy(x, t)) / 0.7;
            assert!((c.l0.eval(x, t) - l0).abs() < 1e-12);
            assert!((c.l1.eval(x, t) - h.ea(x, t) / 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_potential_needs_charge() {
        let c = StochasticCoefficients {
            l0: SpaceTimeFn::zero(),
            l1: SpaceTimeFn::constant(1.0),
            l2: 1.0,
            higher: vec![],
        };
        assert!(matches!(HamiltonianSpec::from_coefficients(&c, 1.0, 0.0), Err(Error::ZeroCharge)));
    }

    #[test]
    fn higher_coefficients_block_evolution() {
        let h = HamiltonianSpec::free(1.0, 1.0).unwrap().with_higher(vec![0.0, 0.2]);
        assert!(matches!(h.ensure_quadratic(), Err(Error::UnsupportedProcess(_))));
        assert_eq!(h.coefficients().nonquadratic_terms(), vec![(4, 0.2)]);
        assert!(HamiltonianSpec::free(1.0, 1.0).unwrap().ensure_quadratic().is_ok());
    }

    #[test]
    fn derivatives_fall_back_to_differences() {
        let f = SpaceTimeFn::dynamic("f", |x, t| x.powi(3) * t);
        assert!((f.dx(2.0, 0.5) - 6.0).abs() < 1e-8);
        assert!((f.dt(2.0, 0.5) - 8.0).abs() < 1e-8);
        let p = SpaceTimeFn::polynomial(vec![1.0, 2.0, 3.0]);
        assert!((p.eval(2.0, 0.0) - 17.0).abs() < 1e-14);
        assert!((p.dx(2.0, 0.0) - 14.0).abs() < 1e-14);
    }
}
