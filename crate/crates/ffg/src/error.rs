use thiserror::Error;

use crate::flows::Obstruction;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong short of a bug. Obstructions are errors in
/// the sense that the requested object does not exist at the working order;
/// they carry a certificate instead of a message.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("truncation order mismatch: {left} vs {right}")]
    OrderMismatch { left: u32, right: u32 },

    #[error("variable index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("component {component} has a nonzero constant term ({magnitude:.3e})")]
    NonzeroConstantTerm { component: usize, magnitude: f64 },

    #[error("linear part is not invertible (|det| = {det_abs:.3e})")]
    NotInvertible { det_abs: f64 },

    #[error("linear part is defective: eigenvector condition {condition:.3e} (no eigenbasis)")]
    DefectiveLinearPart { condition: f64 },

    #[error("eigenvalue {re:.6e}{im:+.6e}i lies on the closed negative real axis; the principal branch is undefined")]
    BranchCut { re: f64, im: f64 },

    #[error("eigenvalue within tolerance of zero")]
    ZeroEigenvalue,

    #[error("branch choice {given:?} invalid for k = {k}, n = {n}")]
    BadBranch { given: Vec<usize>, k: u32, n: usize },

    #[error("witness (s = {s}, m = {m:?}) is not a resonance at tolerance {tol:.3e}: residual {residual:.3e}")]
    InconsistentWitness {
        s: usize,
        m: Vec<u32>,
        residual: f64,
        tol: f64,
    },

    #[error("{0}")]
    Obstruction(Box<Obstruction>),

    #[error("no real {k}-th root of the linear part exists")]
    NoRealBranch { k: u32 },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("dimension {n} exceeds the supported range (n <= {max})")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("parse error at {line}:{col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("error at {line}:{col}: {msg}")]
    Semantic {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("requested order {requested} exceeds the stored order {available}; raising the order would invent coefficients")]
    OrderRaise { requested: u32, available: u32 },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// The obstruction certificate, if this error carries one.
    pub fn obstruction(&self) -> Option<&Obstruction> {
        match self {
            Error::Obstruction(ob) => Some(ob),
            _ => None,
        }
    }
}
