use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{array} index {index} out of range 1..={len}")]
    IndexOutOfRange {
        array: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate geometry: transmitter and receiver points coincide")]
    DegenerateGeometry,

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solver stagnated: {0}")]
    Stagnation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Qualifies a bare field name with its config section.
    pub fn in_section(self, section: &str) -> Self {
        match self {
            Error::InvalidParameter { field, reason } if !field.contains('.') => {
                Error::InvalidParameter {
                    field: format!("{section}.{field}"),
                    reason,
                }
            }
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
