//! Closed-form profile moments: exact mean, limit profile, exact
//! covariance via the MRCA/hypoexponential decomposition, and the
//! phase-transition covariance asymptotics.

mod cov;
mod hypoexp;
mod mean;

pub use cov::{
    cov_prefactor, pair_cov, pair_cov_with, profile_cov_asymptotic, profile_cov_exact,
    profile_cov_exact_with, CovRegime, RegimeTag,
};
pub use hypoexp::{restricted_mgf, HypoexpSpec};
pub use mean::{limit_profile, mean_count, mean_occupancy, ode_profile};
