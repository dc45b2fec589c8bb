use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("position {0:?} is not a member of the configuration")]
    Membership(Vec<f64>),

    #[error("capacity exceeded: {what} has size {size}, cap is {cap}")]
    Capacity {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("config error: unknown keys {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("process halted: total event rate is zero")]
    Halted,

    #[error("replica {replica} exceeded the event cap of {cap} events")]
    CappedRun { replica: usize, cap: u64 },

    #[error("step size too large: dt * rate bound = {product} exceeds {limit}")]
    StepSize { product: f64, limit: f64 },

    #[error("divergence detected at t = {time}")]
    Divergence { time: f64 },

    #[error("clipped mass {clipped} exceeds {limit} of total mass {total} at t = {time}")]
    ClipMass {
        clipped: f64,
        total: f64,
        limit: f64,
        time: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Halted
                | Error::CappedRun { .. }
                | Error::StepSize { .. }
                | Error::Divergence { .. }
                | Error::ClipMass { .. }
        )
    }
}
