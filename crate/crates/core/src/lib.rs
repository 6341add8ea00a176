//! Bifurcation analysis of parameterized epidemic ODE models at R0 = 1.
//!
//! The pipeline: a [`models::ModelSystem`] supplies a right-hand side and its
//! disease-free equilibrium; [`numdiff`] differentiates it; [`ngm`] computes R0;
//! [`bifcoeffs`] computes the centre-manifold coefficients a, b, c, d, e;
//! [`steadystate`] and [`continuation`] enumerate and trace steady states;
//! [`recipes`] builds the parameter constructions for backward bifurcation
//! and multistationarity below threshold; [`verify`] bundles the checks.

pub mod bifcoeffs;
pub mod continuation;
pub mod error;
pub mod linalg;
pub mod models;
pub mod ngm;
pub mod numdiff;
pub mod params;
pub mod recipes;
pub mod sampling;
pub mod steadystate;
pub mod verify;

pub use error::{Error, Result};
pub use models::{builtin, ModelSystem};
pub use params::ParamMap;
