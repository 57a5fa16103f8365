use thiserror::Error;

use crate::fleetlink::CodecError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("position ({x}, {y}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("endurance is undefined for zero duty cycle")]
    UndefinedEndurance,

    #[error("formation of {0} vehicles exceeds the fleet limit of 7")]
    FleetSize(usize),

    #[error("fleet is at capacity ({0} active sessions)")]
    FleetCapacity(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("event log is empty")]
    EmptyLog,

    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),

    #[error("vehicle `{0}` is stale")]
    StaleVehicle(String),

    #[error("out-of-order telemetry from `{vehicle}`: sequence {got} after {last}")]
    OutOfOrder { vehicle: String, got: u64, last: u64 },

    #[error("dispatch error: {0}")]
    Dispatch(String),

    #[error("watchdog expired after {elapsed:.1} s (limit {limit:.1} s)")]
    Watchdog { elapsed: f64, limit: f64 },

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
