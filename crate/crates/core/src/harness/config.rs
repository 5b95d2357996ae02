//! Scenario files (TOML) and their validation into runnable objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bell::TwoParticleState;
use crate::evolution::Integrator;
use crate::grid::Grid1D;
use crate::hamiltonian::{HamiltonianSpec, SpaceTimeFn};
use crate::moments::KmConfig;
use crate::state::{density_from_mixture, families, DensityMatrix, WaveFunction};

/// Environment variable that replaces the output root.
pub const OUTPUT_ROOT_ENV: &str = "STOCHPATH_OUTPUT_ROOT";

/// Boundary `|ψ|²` above which a scenario is rejected.
pub const TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    pub state: StateSpec,
    #[serde(default)]
    pub run: RunSpec,
    pub checks: Vec<String>,
    /// Overrides keyed by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Adds a timestamp line to every CSV header.
    #[serde(default)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub e: f64,
    #[serde(default)]
    pub v: FieldSpec,
    #[serde(default)]
    pub a: FieldSpec,
    #[serde(default)]
    pub phi: FieldSpec,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { m: 1.0, hbar: 1.0, e: 1.0, v: FieldSpec::Zero, a: FieldSpec::Zero, phi: FieldSpec::Zero }
    }
}

/// Static scalar field presets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `½mω²(x − center)²`, using the Hamiltonian's mass.
    Harmonic { omega: f64, #[serde(default)] center: f64 },
    /// `Σ cᵢ xⁱ`.
    Polynomial { coeffs: Vec<f64> },
    /// `amplitude·exp(−(x − center)²/2width²)`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl FieldSpec {
    pub fn build(&self, m: f64) -> SpaceTimeFn {
        match self {
            FieldSpec::Zero => SpaceTimeFn::zero(),
            FieldSpec::Constant { value } => SpaceTimeFn::constant(*value),
            FieldSpec::Harmonic { omega, center } => SpaceTimeFn::harmonic(m, *omega, *center),
            FieldSpec::Polynomial { coeffs } => SpaceTimeFn::polynomial(coeffs.clone()),
            FieldSpec::Gaussian { amplitude, center, width } => {
                let (a, c, w) = (*amplitude, *center, *width);
                SpaceTimeFn::static_fn("gaussian", move |x| a * (-(x - c).powi(2) / (2.0 * w * w)).exp())
                    .with_dx(move |x, _| -a * (x - c) / (w * w) * (-(x - c).powi(2) / (2.0 * w * w)).exp())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Gaussian {
        #[serde(default)]
        x0: f64,
        sigma: f64,
        #[serde(default)]
        k0: f64,
    },
    HarmonicEigenstate { omega: f64, n: usize },
    Coherent { omega: f64, x0: f64, p0: f64 },
    PlaneWave { bin: usize },
    /// Incoherent mixture of pure components.
    Mixture { components: Vec<MixtureComponent> },
    /// Correlated two-particle Gaussian with relative width `s` and
    /// centre-of-mass width `big_s`.
    Epr { s: f64, big_s: f64 },
    /// Two-particle product of pure components.
    Product { a: Box<StateSpec>, b: Box<StateSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: StateSpec,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    100
}
fn default_hbar_list() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125]
}
fn default_samples() -> usize {
    20_000
}
fn default_slab_sigma() -> f64 {
    0.05
}
fn default_slab_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub km: KmSpec,
    #[serde(default = "default_hbar_list")]
    pub hbar_list: Vec<f64>,
    #[serde(default = "default_samples")]
    pub transport_samples: usize,
    #[serde(default = "default_slab_dt")]
    pub slab_dt: f64,
    #[serde(default = "default_slab_sigma")]
    pub slab_sigma: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            n_steps: default_steps(),
            integrator: Integrator::SplitStep,
            km: KmSpec::default(),
            hbar_list: default_hbar_list(),
            transport_samples: default_samples(),
            slab_dt: default_slab_dt(),
            slab_sigma: default_slab_sigma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmSpec {
    pub dt_list: Vec<f64>,
    pub sigma_list: Vec<f64>,
    pub points: Vec<f64>,
    #[serde(default = "one_usize")]
    pub substeps: usize,
}

fn one_usize() -> usize {
    1
}

impl Default for KmSpec {
    fn default() -> Self {
        let d = KmConfig::default();
        Self { dt_list: d.dt_list, sigma_list: d.sigma_list, points: d.points, substeps: d.substeps }
    }
}

impl KmSpec {
    pub fn to_config(&self, integrator: Integrator) -> KmConfig {
        KmConfig {
            dt_list: self.dt_list.clone(),
            sigma_list: self.sigma_list.clone(),
            points: self.points.clone(),
            substeps: self.substeps,
            integrator,
        }
    }
}

/// Failure to obtain a runnable scenario.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    /// Unreadable, malformed or ill-typed configuration.
    #[error("config error: {0}")]
    Parse(String),
    /// Well-formed configuration describing an unusable setup.
    #[error("validation error: {0}")]
    Validation(String),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse(_) => 2,
            ConfigError::Validation(_) => 3,
        }
    }
}

/// Initial statistical state of a scenario.
#[derive(Debug, Clone)]
pub enum ScenarioState {
    Pure(WaveFunction),
    Mixed { rho: DensityMatrix, components: Vec<(f64, WaveFunction)> },
    TwoParticle(TwoParticleState),
}

impl ScenarioState {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioState::Pure(_) => "pure",
            ScenarioState::Mixed { .. } => "mixed",
            ScenarioState::TwoParticle(_) => "two-particle",
        }
    }
}

/// Validated configuration with its built objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Grid1D,
    pub hamiltonian: HamiltonianSpec,
    pub state: ScenarioState,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            v => v,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        let GridSpec { n, x_min, x_max } = self.grid;
        if n == 0 || !n.is_power_of_two() {
            return Err(ConfigError::Parse(format!("grid.n: {n} is not a power of two")));
        }
        if !(x_max > x_min) {
            return Err(ConfigError::Parse(format!("grid.x_max: {x_max} must exceed grid.x_min {x_min}")));
        }
        Grid1D::new(n, x_min, x_max).map_err(|e| ConfigError::Parse(format!("grid: {e}")))
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec, ConfigError> {
        let h = &self.hamiltonian;
        HamiltonianSpec::new(h.m, h.hbar, h.e, h.v.build(h.m), h.a.build(h.m), h.phi.build(h.m))
            .map_err(|e| ConfigError::Parse(format!("hamiltonian: {e}")))
    }

    /// Output directory, honouring [`OUTPUT_ROOT_ENV`].
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            if !root.is_empty() {
                return PathBuf::from(root).join(&self.id);
            }
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("output").join(&self.id))
    }

    /// Tolerance for a check: the override if present, else `default`.
    pub fn tolerance(&self, check: &str, default: f64) -> f64 {
        self.tolerances.get(check).copied().unwrap_or(default)
    }
}

fn pure(spec: &StateSpec, grid: Grid1D, m: f64, hbar: f64) -> Result<WaveFunction, ConfigError> {
    let v = |e: crate::error::Error| ConfigError::Validation(format!("state: {e}"));
    match *spec {
        StateSpec::Gaussian { x0, sigma, k0 } => families::gaussian(grid, m, hbar, x0, sigma, k0).map_err(v),
        StateSpec::HarmonicEigenstate { omega, n } => families::harmonic_eigenstate(grid, m, hbar, omega, n).map_err(v),
        StateSpec::Coherent { omega, x0, p0 } => families::coherent(grid, m, hbar, omega, x0, p0).map_err(v),
        StateSpec::PlaneWave { bin } => families::plane_wave(grid, m, hbar, bin).map_err(v),
        _ => Err(ConfigError::Parse("state: nested components must be pure families".into())),
    }
}

fn edge_density(psi: &WaveFunction) -> f64 {
    let n = psi.grid().len();
    let w = (n / 64).max(1);
    psi.values().iter().enumerate().filter(|(j, _)| *j < w || *j >= n - w).map(|(_, v)| v.norm_sqr()).fold(0.0, f64::max)
}

fn check_tail(psi: &WaveFunction, what: &str) -> Result<(), ConfigError> {
    let e = edge_density(psi);
    if e > TAIL_TOL && !is_plane_wave(psi) {
        return Err(ConfigError::Validation(format!("{what}: boundary |psi|^2 = {e:.3e} exceeds {TAIL_TOL:.0e}")));
    }
    Ok(())
}

fn is_plane_wave(psi: &WaveFunction) -> bool {
    let p = psi.density();
    let (lo, hi) = p.values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    hi - lo < 1e-12 * hi
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ConfigError> {
        let grid = config.grid()?;
        let hamiltonian = config.hamiltonian()?;
        let (m, hbar) = (hamiltonian.m, hamiltonian.hbar);
        if config.run.dt <= 0.0 || !config.run.dt.is_finite() {
            return Err(ConfigError::Parse(format!("run.dt: {} must be positive", config.run.dt)));
        }
        let state = match &config.state {
            StateSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(ConfigError::Parse("state.components: empty mixture".into()));
                }
                let mut comps = Vec::with_capacity(components.len());
                for (k, c) in components.iter().enumerate() {
                    let psi = pure(&c.state, grid, m, hbar)?;
                    check_tail(&psi, &format!("state.components[{k}]"))?;
                    comps.push((c.weight, psi));
                }
                let rho = density_from_mixture(&comps).map_err(|e| ConfigError::Validation(format!("state: {e}")))?;
                ScenarioState::Mixed { rho, components: comps }
            }
            StateSpec::Epr { s, big_s } => {
                let st = TwoParticleState::epr_gaussian(grid, m, hbar, *s, *big_s).map_err(|e| ConfigError::Validation(format!("state: {e}")))?;
                let n = grid.len();
                let edge = (0..n)
                    .flat_map(|i| [(i, 0), (i, n - 1), (0, i), (n - 1, i)])
                    .map(|(i, j)| st.psi[(i, j)].norm_sqr())
                    .fold(0.0, f64::max);
                if edge > TAIL_TOL {
                    return Err(ConfigError::Validation(format!("state: boundary |psi|^2 = {edge:.3e} exceeds {TAIL_TOL:.0e}")));
                }
                ScenarioState::TwoParticle(st)
            }
            StateSpec::Product { a, b } => {
                let (pa, pb) = (pure(a, grid, m, hbar)?, pure(b, grid, m, hbar)?);
                check_tail(&pa, "state.a")?;
                check_tail(&pb, "state.b")?;
                ScenarioState::TwoParticle(TwoParticleState::product(&pa, &pb).map_err(|e| ConfigError::Validation(format!("state: {e}")))?)
            }
            spec => {
                let psi = pure(spec, grid, m, hbar)?;
                check_tail(&psi, "state")?;
                ScenarioState::Pure(psi)
            }
        };
        let output_dir = config.resolve_output_dir();
        Ok(Self { config, grid, hamiltonian, state, output_dir })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_config(ScenarioConfig::load(path)?)
    }

    pub fn pure_state(&self) -> Option<&WaveFunction> {
        match &self.state {
            ScenarioState::Pure(p) => Some(p),
            _ => None,
        }
    }

    pub fn km_config(&self) -> KmConfig {
        self.config.run.km.to_config(self.config.run.integrator)
    }
}
