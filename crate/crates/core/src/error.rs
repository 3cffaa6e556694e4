use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("flag `{flag}` violated: deviation {deviation:.3e}")]
    FlagViolation { flag: &'static str, deviation: f64 },

    #[error("grid mismatch: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("mode {n} outside 1..={max}")]
    ModeOutOfRange { n: i64, max: i64 },

    #[error("norm ill-defined: {0}")]
    IllDefinedNorm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("declared order {declared} violated: growth ratio {measured:.3e} vs reference {reference:.3e}")]
    OrderViolation { declared: f64, measured: f64, reference: f64 },

    #[error("diffeomorphism too steep: sup|beta'| = {lipschitz:.4} exceeds {bound}")]
    DiffeoTooSteep { lipschitz: f64, bound: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { what: &'static str, iterations: usize, residual: f64 },

    #[error("Neumann iteration not contracting: ratio {ratio:.4} at iteration {iteration}")]
    NonContraction { ratio: f64, iteration: usize },

    #[error("surface amplitude too large: sup|eta| = {sup:.4} >= {bound}")]
    AmplitudeTooLarge { sup: f64, bound: f64 },

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("time step {dt:.3e} exceeds stability limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("near resonance at kappa = {kappa}: tuple {tuple} has |D| = {divisor:.3e}")]
    NearResonance { kappa: f64, tuple: String, divisor: f64 },

    #[error("empty tuple family")]
    EmptyFamily,

    #[error("tuple family too large: {count} tuples exceeds budget {limit}")]
    BudgetExceeded { count: u64, limit: u64 },

    #[error("transform not near-identity: |Q| = {q:.3e} vs |u|/2 = {half:.3e}")]
    NotNearIdentity { q: f64, half: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
