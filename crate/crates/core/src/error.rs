use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("finite-difference stencil for order {order} needs {needed} samples, got {got}")]
    StencilTooShort { order: usize, needed: usize, got: usize },

    #[error("state is not normalized: norm = {norm}")]
    NormalizationError { norm: f64 },

    #[error("invalid mixture weights: {0}")]
    WeightError(String),

    #[error("state has no support above the amplitude floor")]
    DegenerateState,

    #[error("kernel is not Hermitian: max deviation {deviation:e}")]
    HermiticityError { deviation: f64 },

    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),

    #[error("unsupported process: {0}")]
    UnsupportedProcess(String),

    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverError { residual: f64, iterations: usize },

    #[error("moment/degree order {order} exceeds the limit {max}")]
    OrderError { order: usize, max: usize },

    #[error("generating-function shift aliases on this grid: {0}")]
    AliasError(String),

    #[error("extrapolation did not converge monotonically:\n{table}")]
    ConvergenceError { table: String },

    #[error("phase could not be matched across time slices: jump {jump:e}")]
    PhaseContinuityError { jump: f64 },

    #[error("characteristics cross at t = {t_caustic}")]
    CausticError { t_caustic: f64 },

    #[error("charge is zero; vector and scalar potentials cannot absorb a gauge change")]
    ZeroCharge,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
