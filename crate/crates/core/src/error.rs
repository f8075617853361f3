//! Shared error type for the whole engine.

use thiserror::Error;

/// Everything that can go wrong while validating inputs or running a query.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("expression uses variable x{var} but only {supplied} slot(s) are supplied")]
    ArityMismatch { var: usize, supplied: usize },

    #[error("invalid interval: lower bound {lo} exceeds upper bound {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid extent on axis {axis}: [{lo}, {hi}) is not a half-open interval")]
    InvalidExtent { axis: usize, lo: f64, hi: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("atom guard exceeded: {sources} source regions (limit {limit})")]
    AtomGuard { sources: usize, limit: usize },

    #[error("refinement guard exceeded: {cells} elementary cells (limit {limit})")]
    CellGuard { cells: usize, limit: usize },

    #[error(
        "certified mode supports at most {cap} free variables, this query needs {arity}; \
         use heuristic mode to proceed without a certificate"
    )]
    CertifiedCap { arity: usize, cap: usize },

    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),

    #[error("evaluation budget exhausted: {evals} evaluations (budget {budget})")]
    EvalBudget { evals: u64, budget: u64 },

    #[error("regions are not pairwise disjoint: {a} and {b} overlap")]
    NotDisjoint { a: String, b: String },

    #[error("region names are not distinct: {0} appears twice")]
    DuplicateName(String),

    #[error("invalid signed permutation: {0}")]
    BadPermutation(String),

    #[error("time grid must be strictly increasing with at least two points, all nonnegative")]
    BadTimeGrid,

    #[error("filtration time must be nonnegative and finite, got {0}")]
    BadTime(f64),

    #[error("region {0} is not a single temporal-spatial box")]
    NotABox(String),

    #[error("{what} is not measurable at time {t}: region extends past the cut")]
    NotMeasurable { what: String, t: f64 },

    #[error("CFL bound violated: tau*max|mu|/h = {ratio:.6} exceeds 1")]
    CflViolation { ratio: f64 },

    #[error("window too small on axis {axis}: margin {need} needed, {have} available")]
    WindowTooSmall { axis: usize, need: f64, have: f64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for free-form validation failures.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
