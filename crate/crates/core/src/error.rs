use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{attr}` in relation `{relation}`")]
    UnknownAttribute { relation: String, attr: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("FK must target key: `{0}` does not reference the key of its destination")]
    FkNotKey(String),
    #[error("relation `{relation}`: expected {expected} values, found {found}")]
    Arity {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate key {key} in relation `{relation}`")]
    DuplicateKey { relation: String, key: String },
    #[error("dangling foreign key `{fk}`: no fact with key {key}")]
    DanglingReference { fk: String, key: String },
    #[error("null in non-nullable attribute `{relation}.{attr}`")]
    NullViolation { relation: String, attr: String },
    #[error("value `{value}` does not fit `{relation}.{attr}` ({kind})")]
    TypeMismatch {
        relation: String,
        attr: String,
        kind: String,
        value: String,
    },
    #[error("fact {fact} is not a fact of relation `{relation}`")]
    RelationMismatch { fact: usize, relation: String },
    #[error("unknown fact {0}")]
    UnknownFact(usize),
    #[error("unknown scheme index {0}")]
    UnknownScheme(usize),
    #[error("kernel: {0}")]
    Kernel(String),
    #[error("no samples: {0}")]
    NoSamples(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors caused by malformed or inconsistent data.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            Error::UnknownRelation(_)
                | Error::UnknownAttribute { .. }
                | Error::Schema(_)
                | Error::FkNotKey(_)
                | Error::Arity { .. }
                | Error::DuplicateKey { .. }
                | Error::DanglingReference { .. }
                | Error::NullViolation { .. }
                | Error::TypeMismatch { .. }
                | Error::RelationMismatch { .. }
                | Error::UnknownFact(_)
        )
    }

    /// Errors raised by the numerical routines.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Singular(_))
    }
}
