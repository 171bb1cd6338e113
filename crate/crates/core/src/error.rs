use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("subspace dimension {k} out of range for ambient dimension {m}")]
    DimensionOutOfRange { m: usize, k: usize },

    #[error("matrix shape {rows}x{cols} not supported (need 1 <= cols <= 64)")]
    BadShape { rows: usize, cols: usize },

    #[error("polynomial {poly:#x} does not have degree {m}")]
    PolynomialDegree { poly: u64, m: usize },

    #[error("polynomial {0:#x} is reducible")]
    ReduciblePolynomial(u64),

    #[error("field element {elem:#x} is not a nonzero element of GF(2^{m})")]
    FieldElementOutOfRange { elem: u64, m: usize },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("line {line}, field `{field}`: {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },

    #[error("erasure probability {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("cannot balance degree sequence: {0}")]
    Unbalanceable(String),

    #[error("vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
