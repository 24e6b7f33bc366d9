use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("parameter `{name}` = {value} is outside its domain: {expected}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// An argument (time, step size) lies outside the range the object was built for.
    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// The subordinator path ends before the requested horizon.
    #[error("subordinator path reaches {reached} but must exceed horizon {horizon}")]
    Coverage { reached: f64, horizon: f64 },

    /// The truncation policy cannot be applied at the requested step size.
    #[error("truncation misconfigured: {0}")]
    Configuration(String),

    /// A model violates a declared property (envelope, finiteness).
    #[error("model `{model}`: {message}")]
    Model { model: String, message: String },

    /// A step produced a non-finite or exploding state.
    #[error("numerical overflow at t = {t} from state {x:?}")]
    NumericalOverflow { t: f64, x: Vec<f64> },

    /// Iteration guard tripped.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A Monte Carlo experiment could not be completed.
    #[error("experiment failed: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
