//! Error types shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A parameter failed its validation rule at construction time.
    #[error("invalid parameter `{field}`: {message}")]
    Validation { field: &'static str, message: String },

    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error in {op}: {message}")]
    Domain { op: &'static str, message: String },

    /// The initial state already sits in the stopping region, where the
    /// fixed point offers no interior solution.
    #[error("interior-start violation: x0 = {x0} >= x* = {x_star}; the threshold derivation assumes x0 < x*")]
    InteriorStartViolation { x0: f64, x_star: f64 },

    /// No sign change was found while expanding a root bracket. For valid
    /// inputs this indicates a bug, so it carries the scanned range.
    #[error("no sign change found for {op} on [{lo}, {hi}]")]
    Bracket { op: &'static str, lo: f64, hi: f64 },

    /// The discounted running-profit integral diverges for these rates.
    #[error("resolvent diverges: {message}")]
    ResolventDivergence { message: String },

    /// The scalar reduction produced more than one admissible root. The
    /// consistency system is supposed to have a unique solution, so all
    /// brackets are surfaced instead of silently picking one.
    #[error("multiple admissible roots found at brackets {brackets:?}")]
    MultipleRoots { brackets: Vec<(f64, f64)> },

    /// A design request fell outside the feasible fee/parameter region.
    #[error("infeasible design: {message}")]
    Feasibility { message: String },

    /// The objective keeps decreasing past the search cap.
    #[error("objective still decreasing at K_max = {k_max}; search range exhausted")]
    UnboundedBelow { k_max: f64 },

    /// A sample set carries no information for the fit.
    #[error("degenerate sample: {message}")]
    DegenerateSample { message: String },
}

impl Error {
    pub(crate) fn domain(op: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { op, message: message.into() }
    }

    pub(crate) fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation { field, message: message.into() }
    }

    pub(crate) fn feasibility(message: impl Into<String>) -> Self {
        Error::Feasibility { message: message.into() }
    }
}
