use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two inputs that must agree in shape do not.
    #[error("shape mismatch in {context}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        context: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// An input matrix carries a NaN or infinite entry.
    #[error("non-finite entry at row {row}, column {col} in {context}")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },

    /// The 1-d rank solver was asked to couple multi-coordinate atoms.
    #[error("rank solver requires single-coordinate atoms, got dimension {dim}")]
    UnsupportedDimension { dim: usize },

    /// Wasserstein order must be positive and finite.
    #[error("Wasserstein order must be positive and finite, got {p}")]
    InvalidOrder { p: f64 },

    /// A loss order outside the supported range.
    #[error("loss order {p} is unsupported: {reason}")]
    UnsupportedLoss { p: f64, reason: &'static str },

    /// Lambda grids must be non-empty, nonnegative, strictly decreasing.
    #[error("lambda grid must be non-empty, nonnegative and strictly decreasing")]
    InvalidLambdaGrid,

    /// MCP concavity parameter out of range.
    #[error("MCP concavity parameter must exceed 1, got {gamma}")]
    InvalidMcpGamma { gamma: f64 },

    /// A cardinality budget that no mask can satisfy.
    #[error("budget {budget} exceeds the {k} selectable covariates")]
    InfeasibleBudget { budget: usize, k: usize },

    /// Exhaustive enumeration refused; caller should switch methods or raise the cap.
    #[error("{k} covariates exceeds the enumeration cap of {cap}; use simulated annealing or backward stepwise, or raise the cap")]
    EnumerationCap { k: usize, cap: usize },

    /// A descent step increased the objective beyond float slack.
    #[error("descent diverged in {context}: objective rose from {previous} to {current}")]
    Divergence {
        context: &'static str,
        previous: f64,
        current: f64,
    },

    /// An input collection that must be non-empty is empty.
    #[error("empty input in {context}")]
    EmptyInput { context: &'static str },

    /// A parameter failed validation.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            context,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}

/// Scan a matrix view for non-finite entries.
pub(crate) fn check_finite(context: &'static str, m: &ndarray::ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), &v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { context, row, col });
        }
    }
    Ok(())
}
