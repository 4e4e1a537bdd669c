//! Sequential tests of practical significance.
//!
//! The centrepiece is the truncated mixture SPRT: the likelihood under the
//! alternative is marginalized over a normal mixing distribution, and the
//! likelihood under the null over the same normal truncated to the region of
//! practical equivalence `(-delta, delta)`. Wald's SPRT and the classic mixture
//! SPRT are provided alongside it so the three can be run on common streams.
//!
//! Module map:
//!
//! - [`gauss`]: normal and truncated-normal numerics, conjugate posterior.
//! - [`lratio`]: closed-form log likelihood ratios for every variant, plus a
//!   quadrature oracle that integrates the defining ratio directly.
//! - [`sequential`]: the streaming test engine and always-valid p-values.
//! - [`diagnostics`]: Monte Carlo checks of the validity machinery.
//! - [`sims`]: the deterministic, parallel operating-characteristic harness.

#![allow(clippy::excessive_precision)]

pub mod diagnostics;
pub mod error;
pub mod gauss;
pub mod lratio;
pub mod quadrature;
pub mod rng;
pub mod sequential;
pub mod sims;

pub use error::{Error, Result};
pub use gauss::{MixingSpec, PosteriorState, RopeMass, SuffStats, Support};
pub use lratio::{VariantKind, VariantSpec};
pub use sequential::{TestConfig, TestResult, TestState, Verdict};
