use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid axis {axis} for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: empty axis in shape {shape:?}")]
    EmptyAxis { op: &'static str, shape: Vec<usize> },
    #[error("{op}: value {value} outside the function's domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("tensor data has {len} values but shape {shape:?} needs {expected}")]
    DataLength {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("backward root must be a single value, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
