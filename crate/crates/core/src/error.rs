use thiserror::Error;

/// Errors raised by the solvers, simulators and parameter parsing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DisorderError {
    #[error("invalid parameter `{field}` = {value}: {reason}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("lambda0 and lambda1 are equal ({0}); the disorder is unobservable")]
    EqualRates(f64),

    #[error("jump size must be non-negative, got {0}")]
    NegativeJump(f64),

    #[error("quadrature did not reach tolerance {tol:e}: estimate {estimate}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64, tol: f64 },

    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("kernel diverges at pi = {pi} for boundary {boundary}")]
    Divergent { pi: f64, boundary: f64 },

    #[error("operation requires {0}")]
    WrongRegime(&'static str),

    #[error("missing value for `{0}`: pass --{0}, --preset or --config")]
    Missing(&'static str),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DisorderError>;
