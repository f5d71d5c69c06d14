//! Frequentist inference for structural VARs identified with sign restrictions.
//!
//! The crate estimates a reduced-form VAR, stacks the reduced-form responses that
//! enter the sign restrictions, and builds
//!
//! * a moment-inequality confidence set for the rotation vector `q`
//!   (generalized moment selection with simulated critical values),
//! * Bonferroni confidence intervals for impulse responses and variance shares,
//! * plug-in estimates of the identified sets,
//! * Bayesian credible bands from an acceptance sampler, for comparison,
//! * and a Monte Carlo harness that scores coverage at identified-set boundaries.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`var_core`] | OLS, VMA recursion, Cholesky orthogonalization, simulation |
//! | [`restrictions`] | restriction schema, `φ_q` stacking, `S̃(q)`, `S(q)`, targets |
//! | [`bootstrap_cov`] | parametric bootstrap for the response covariances |
//! | [`sphere`] | grids on the unit sphere |
//! | [`moment_inequality`] | objective, NNLS, moment selection, critical values |
//! | [`confidence_sets`] | `CS^q`, plug-in sets, Wald and Bonferroni intervals |
//! | [`bayes_compare`] | posterior acceptance sampler and credible bands |
//! | [`mc_harness`] | Monte Carlo designs and coverage experiments |

pub mod bayes_compare;
pub mod bootstrap_cov;
pub mod confidence_sets;
mod error;
pub mod mc_harness;
pub mod moment_inequality;
pub mod normal;
pub mod restrictions;
pub mod rng;
pub mod sphere;
pub mod var_core;

pub use error::{Error, Result};
