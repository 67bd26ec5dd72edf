//! Event-driven simulation and closed-form moment analysis of the
//! Aldous-Shields random binary tree process, plus its depth-truncated
//! variant modelling cellular senescence.
//!
//! An external vertex at depth n splits at rate `r * c^-n`, replacing
//! itself by its two children. The crate provides:
//!
//! - exact stochastic simulation (profile-level and tree-level), with an
//!   exact dyadic mass invariant checked in rational arithmetic;
//! - the q-series constants a_k, b_k, b_inf and the identities behind the
//!   closed-form mean profile;
//! - the exact mean and covariance of the profile, the limit profile, and
//!   the phase-transition asymptotics of the covariance;
//! - the limiting proliferating-cell fraction of the senescence variant
//!   and leading-order expected counts;
//! - a Monte Carlo verification harness comparing simulation moments
//!   against the closed forms;
//! - least-squares estimation of c from proliferating-fraction data.

pub mod error;
pub mod series;
pub(crate) mod mp;
pub mod params;
pub mod profile;
pub mod qseries;
pub mod analytics;
pub mod senescence;
pub mod sim;
pub mod montecarlo;
pub mod fit;
pub mod csvio;

pub use error::{Error, Result};
pub use params::{validate, Parameters, ValidationContext};
pub use profile::{dyadic_mass, has_unit_mass, PathWord, Profile, SeedRecord, Trajectory};
pub use qseries::QTable;
pub use series::{PrecisionMode, SeriesControl};
