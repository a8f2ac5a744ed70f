use thiserror::Error;

use crate::refelem::EntityKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported polynomial degree {degree} on {kind:?}")]
    UnsupportedDegree { kind: EntityKind, degree: usize },

    #[error("no quadrature rule of exactness {degree}")]
    QuadratureDegree { degree: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh validation failed for {entity}: {message}")]
    Validation { entity: String, message: String },

    #[error("facet {facet} could not be classified: {message}")]
    Classification { facet: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("factorization failed: {message}")]
    Factorization { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            message: message.into(),
        }
    }
}
