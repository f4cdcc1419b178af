use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented invariant (bad modulus, malformed set, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The walk has no spectral gap, so the relaxation time is infinite.
    #[error("spectral gap is zero; the driving set does not generate")]
    ZeroGap,

    /// Two powers of two reduce to the same symmetric pair modulo p.
    #[error("powers 2^{i} and 2^{j} collide modulo {p} (both reduce to ±{residue})")]
    PowerCollision { p: u64, i: u32, j: u32, residue: u64 },

    /// A lattice has two coordinates that agree up to sign, so it is not of the form Λ(A).
    #[error("lattice is not in L0(p,k): {0}")]
    NotInL0(String),

    /// A computation would exceed the configured memory cap.
    #[error("capacity exceeded: {needed} cells requested, limit is {limit}")]
    Capacity { needed: u128, limit: u128 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
