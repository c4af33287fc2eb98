use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("consumer `{id}`: {message}")]
    InvalidConsumer { id: String, message: String },

    #[error("hour {hour} out of range for a horizon of {hours} hours")]
    HourOutOfRange { hour: usize, hours: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("consumer index {index} out of range ({count} consumers)")]
    ConsumerOutOfRange { index: usize, count: usize },

    #[error("daily-proportional billing needs positive total flexible energy")]
    NoFlexibleEnergy,

    #[error("daily-proportional potential undefined: consumer {index} has zero energy need")]
    ZeroEnergyConsumer { index: usize },

    #[error("best response of consumer {index} is degenerate (alpha = 1 with zero preference weight)")]
    DegenerateBestResponse { index: usize },

    #[error("profile infeasible: {0}")]
    InfeasibleProfile(String),

    #[error("budget {budget} outside [{lower_sum}, {upper_sum}]")]
    InfeasibleBudget {
        budget: f64,
        lower_sum: f64,
        upper_sum: f64,
    },

    #[error("quadratic coefficient at index {index} is {value}, must be > 0")]
    NonConvexQp { index: usize, value: f64 },

    #[error("multiplier search did not converge after {iterations} iterations")]
    SolverNoConvergence { iterations: usize },

    #[error("KKT system degenerate at alpha = 0: only the aggregate equilibrium is determined")]
    DegenerateKkt,

    #[error("invalid two-period scenario: {0}")]
    InvalidTwoPeriod(String),

    #[error("optimal social cost {0} is negative")]
    NegativeOptimum(f64),

    #[error("minimal system cost is {0}, price of efficiency undefined")]
    NonPositiveSystemOptimum(f64),

    #[error("tariff interpolation is singular (load values must be distinct)")]
    SingularTariff,

    #[error("tariff interpolation is not convex (quadratic coefficient {0} <= 0)")]
    NonConvexTariff(f64),

    #[error("preference weight undefined: system optimum coincides with preferred profiles")]
    OmegaUndefined,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
