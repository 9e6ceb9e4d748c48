use core::fmt;

/// Everything that can go wrong inside the numerical core.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    NotSquare { rows: usize, cols: usize },
    NotSymmetric { asymmetry: f64 },
    NoConvergence { sweeps: usize, off_norm: f64 },
    RankDeficient { column: usize },
    Singular { smallest: f64 },
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    NonFiniteGradient,
    NonFiniteScore,
    TooLarge { n: usize, max: usize },
    EmptyInput,
    MissingClass { class: usize },
    ComposeUnsupported,
    AsymmetricAdjacency { asymmetry: f64 },
    NegativeWeight { row: usize, col: usize },
    BadDecay(f64),
    BlockDimMismatch { band: usize, expected: usize, found: usize },
    DimMismatch,
    SizeMismatch { left: usize, right: usize },
    TooLargeForBrute { n: usize },
    BadConfig(&'static str),
    DivergedLoss,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, expected square"),
            Error::NotSymmetric { asymmetry } => {
                write!(f, "matrix is not symmetric (max asymmetry {asymmetry:e})")
            }
            Error::NoConvergence { sweeps, off_norm } => write!(
                f,
                "eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})"
            ),
            Error::RankDeficient { column } => write!(f, "rank deficient at column {column}"),
            Error::Singular { smallest } => {
                write!(f, "matrix is singular (smallest singular value {smallest:e})")
            }
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonFiniteGradient => f.write_str("objective returned a non-finite gradient"),
            Error::NonFiniteScore => f.write_str("every candidate produced a non-finite score"),
            Error::TooLarge { n, max } => write!(f, "size {n} exceeds the limit {max}"),
            Error::EmptyInput => f.write_str("empty input"),
            Error::MissingClass { class } => write!(f, "no decision for class {class}"),
            Error::ComposeUnsupported => {
                f.write_str("transformation family does not support composition")
            }
            Error::AsymmetricAdjacency { asymmetry } => {
                write!(f, "adjacency is not symmetric (max asymmetry {asymmetry:e})")
            }
            Error::NegativeWeight { row, col } => {
                write!(f, "negative edge weight at ({row}, {col})")
            }
            Error::BadDecay(r) => write!(f, "decay rate {r} outside (0, 1)"),
            Error::BlockDimMismatch { band, expected, found } => write!(
                f,
                "orthogonal block for band {band} has dimension {found}, expected {expected}"
            ),
            Error::DimMismatch => f.write_str("block dimensions differ across classes"),
            Error::SizeMismatch { left, right } => {
                write!(f, "point counts differ ({left} vs {right})")
            }
            Error::TooLargeForBrute { n } => {
                write!(f, "{n} points is too many for brute-force matching (max 8)")
            }
            Error::BadConfig(msg) => write!(f, "bad configuration: {msg}"),
            Error::DivergedLoss => f.write_str("training loss became non-finite"),
        }
    }
}

impl core::error::Error for Error {}
