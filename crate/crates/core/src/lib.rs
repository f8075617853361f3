//! Worst-case expectation calculus over rectangular uncertainty.
//!
//! The crate models random quantities whose distribution is known only up to
//! a box of parameters: the expectation of a payoff is the maximum of the
//! payoff over that box.  On top of this sit set-indexed noise fields with
//! volume-proportional uncertainty, their finite-dimensional laws, integrals
//! of simple region-valued integrands, a conditional calculus, a first-order
//! PDE solved both in closed form and by a monotone scheme, and a
//! law-of-large-numbers simulator driven by adversarial mean switching.
//!
//! All numeric answers that claim certification carry explicit error bounds
//! produced by interval arithmetic and a branch-and-bound maximizer.

pub mod error;
pub mod expectation;
pub mod expr;
pub mod integral;
pub mod interval;
pub mod lln;
pub mod maximize;
pub mod pde;
pub mod region;
pub mod white_noise;

pub use error::{Error, Result};
pub use expectation::{expect, generating_function, g_eval, pushforward};
pub use expr::Expr;
pub use integral::{
    conditional_expect, integrate_spatial, integrate_temporal_spatial, CylinderVariable,
    FiltrationTime, SimpleRandomField, TemporalSpatialField,
};
pub use interval::{MaximalVector, UncertaintyInterval};
pub use lln::{LlnCurve, LlnEstimate, MeasureFamily, NoiseKind, Strategy};
pub use maximize::{maximize, CertifiedValue, MaxOptions, SearchMode};
pub use pde::{closed_form, convergence_study, solve_fd, PdeProblem, PdeResult};
pub use region::{Atom, AtomDecomposition, Rect, Region, SignedPermutation};
pub use white_noise::{fdd_expect, fdd_generating, FddQuery, WhiteNoiseModel};
