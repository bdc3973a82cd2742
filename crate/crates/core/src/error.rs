use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("quantity {value} outside [0, {max}]")]
    QuantityOutOfRange { value: f64, max: f64 },

    #[error("negative total quantity {0}")]
    NegativeQuantity(f64),

    #[error("corner Nash equilibrium (q_{firm} = {quantity}) is not supported")]
    CornerEquilibrium { firm: &'static str, quantity: f64 },

    #[error("profit target {target} infeasible for firm {firm} (monopoly profit {max})")]
    InfeasibleProfit { firm: &'static str, target: f64, max: f64 },

    #[error("{label}: {reason}")]
    SolverFailure { label: String, reason: String },

    #[error("disagreement profit of firm {0} is zero; relative gains undefined")]
    ZeroDisagreement(&'static str),

    #[error("nu = {nu} is infeasible (probability argument {arg} not in (0, 1))")]
    InfeasibleNu { nu: f64, arg: f64 },

    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("symmetric reference value for {0} is zero; cannot normalize")]
    ZeroNormalization(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("Q-matrices unavailable for run {0}")]
    QMatricesUnavailable(usize),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
