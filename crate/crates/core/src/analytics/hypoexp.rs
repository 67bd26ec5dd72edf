//! Hypoexponential arrival time of the leftmost lineage and the restricted
//! moment generating function used by the covariance decomposition.
//!
//! T_m is the time the depth-m most recent common ancestor splits: the sum
//! of independent exponentials with rates 1, c^-1, ..., c^-m (m+1 stages).
//! Both the partial-fraction weights W_l and the covariance subtraction
//! cancel heavily; every evaluation carries a running error bound and the
//! operations refuse to return results whose predicted cancellation
//! exceeds the precision budget.

use astro_float::BigFloat;

use crate::error::{Error, Result};
use crate::mp::MpCtx;
use crate::params::validate_analytic_c;
use crate::series::KahanSum;

/// Rates of the m+1 exponential stages, r_l = c^-l for l = 0..m.
#[derive(Debug, Clone)]
pub struct HypoexpSpec {
    pub m: u32,
    pub rates: Vec<f64>,
}

impl HypoexpSpec {
    pub fn new(m: u32, c: f64) -> Result<Self> {
        validate_analytic_c(c)?;
        let rates = (0..=m as i32).map(|l| c.powi(-l)).collect();
        Ok(HypoexpSpec { m, rates })
    }
}

/// Result-loss budget: refuse when predicted cancellation exceeds 10^6
/// ulps of the working precision.
pub(crate) const ULP_BUDGET: f64 = 1.0e6;

/// Partial-fraction weights in log-magnitude + sign form:
/// W_l = prod_{j != l} r_j/(r_j - r_l) = prod_{j != l} 1/(1 - c^{j-l}),
/// sign (-1)^{m-l}.
fn weights_log(m: u32, c: f64) -> Vec<(f64, f64)> {
    (0..=m as i64)
        .map(|l| {
            let mut log_mag = 0.0f64;
            for j in 0..=m as i64 {
                if j != l {
                    log_mag -= (1.0 - c.powi((j - l) as i32)).abs().ln();
                }
            }
            let sign = if (m as i64 - l) % 2 == 0 { 1.0 } else { -1.0 };
            (log_mag, sign)
        })
        .collect()
}

/// e^{-lam t} phi(delta, t) with phi(delta,t) = (1 - e^{-delta t})/delta
/// and delta = r - lam, evaluated without forming e^{+st} factors:
/// (e^{-lam t} - e^{-r t})/delta, with a 4-term series branch at the
/// removable singularity |delta| t < 1e-6.
fn discounted_phi(lam: f64, r: f64, t: f64, exp_lam_t: f64, exp_r_t: f64) -> f64 {
    let delta = r - lam;
    if (delta * t).abs() < 1e-6 {
        let dt = delta * t;
        exp_lam_t * t * (1.0 - dt / 2.0 + dt * dt / 6.0 - dt * dt * dt / 24.0)
    } else {
        (exp_lam_t - exp_r_t) / delta
    }
}

/// R(lam, t, m) = e^{-lam t} M(lam, t, m) = E[e^{-lam (t - T_m)} 1_{T_m <= t}],
/// plus the sum of absolute term magnitudes for error accounting.
pub(crate) fn discounted_restricted_mgf(
    lam: f64,
    t: f64,
    weights: &[(f64, f64)],
    rates: &[f64],
    exp_rt: &[f64],
    exp_lam_t: f64,
) -> (f64, f64) {
    let mut s = KahanSum::new();
    let mut abs_sum = 0.0f64;
    for (l, &(log_mag, sign)) in weights.iter().enumerate() {
        let phi = discounted_phi(lam, rates[l], t, exp_lam_t, exp_rt[l]);
        let term = sign * (log_mag.exp()) * rates[l] * phi;
        s.add(term);
        abs_sum += term.abs();
    }
    (s.value(), abs_sum)
}

/// M(s, t, m) = E[e^{s T_m} 1_{T_m <= t}]. Errors with a conditioning
/// failure when the alternating weights cancel beyond the 10^6-ulp budget
/// (m too large for the requested precision).
pub fn restricted_mgf(s: f64, t: f64, spec: &HypoexpSpec) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("t must be >= 0, got {t}")));
    }
    if spec.rates.len() != spec.m as usize + 1 {
        return Err(Error::Validation("inconsistent hypoexp spec".into()));
    }
    let mut sum = KahanSum::new();
    let mut abs_sum = 0.0f64;
    for l in 0..spec.rates.len() {
        let r_l = spec.rates[l];
        let mut w = 1.0f64;
        for j in 0..spec.rates.len() {
            if j != l {
                w *= spec.rates[j] / (spec.rates[j] - r_l);
            }
        }
        let delta = r_l - s;
        let phi = if (delta * t).abs() < 1e-6 {
            let dt = delta * t;
            t * (1.0 - dt / 2.0 + dt * dt / 6.0 - dt * dt * dt / 24.0)
        } else {
            (1.0 - (-delta * t).exp()) / delta
        };
        let term = w * r_l * phi;
        sum.add(term);
        abs_sum += term.abs();
    }
    let value = sum.value();
    let predicted = abs_sum * f64::EPSILON;
    let budget = ULP_BUDGET * f64::EPSILON * value.abs();
    if value == 0.0 || predicted > budget.max(f64::MIN_POSITIVE) {
        return Err(Error::Conditioning {
            context: format!("restricted_mgf(s={s}, t={t}, m={})", spec.m),
            predicted: predicted / value.abs().max(f64::MIN_POSITIVE),
            budget: ULP_BUDGET * f64::EPSILON,
        });
    }
    Ok(value)
}

/// Per-(t, m, c) engine producing the covariance terms
/// COV[e^{-lam(t-T_m)} 1, e^{-lam'(t-T_m)} 1]
/// = R(lam+lam') - R(lam) R(lam') together with an error bound.
pub(crate) struct CovTermEngine {
    t: f64,
    weights: Vec<(f64, f64)>,
    rates: Vec<f64>,
    exp_rt: Vec<f64>,
}

impl CovTermEngine {
    pub fn new(m: u32, c: f64, t: f64) -> Self {
        let rates: Vec<f64> = (0..=m as i32).map(|l| c.powi(-l)).collect();
        let exp_rt = rates
            .iter()
            .map(|&r| if r * t > 745.0 { 0.0 } else { (-r * t).exp() })
            .collect();
        CovTermEngine {
            t,
            weights: weights_log(m, c),
            rates,
            exp_rt,
        }
    }

    fn r_disc(&self, lam: f64) -> (f64, f64) {
        let exp_lam_t = if lam * self.t > 745.0 {
            0.0
        } else {
            (-lam * self.t).exp()
        };
        discounted_restricted_mgf(lam, self.t, &self.weights, &self.rates, &self.exp_rt, exp_lam_t)
    }

    /// (covariance term, absolute error bound)
    pub fn cov_term(&self, lam: f64, lam_p: f64) -> (f64, f64) {
        let (r12, a12) = self.r_disc(lam + lam_p);
        let (r1, a1) = self.r_disc(lam);
        let (r2, a2) = self.r_disc(lam_p);
        let delta = r12 - r1 * r2;
        let err = f64::EPSILON
            * (a12 + a1 * r2.abs() + a2 * r1.abs() + (r1 * r2).abs() + delta.abs());
        (delta, err)
    }
}

/// Extended-precision twin of `CovTermEngine`.
pub(crate) struct CovTermEngineMp {
    t: BigFloat,
    weights: Vec<BigFloat>,
    rates: Vec<BigFloat>,
    exp_rt: Vec<BigFloat>,
    sing_cut: f64,
}

impl CovTermEngineMp {
    pub fn new(ctx: &mut MpCtx, m: u32, c: f64, t: f64) -> Self {
        let cm = ctx.num(c);
        let one = ctx.num(1.0);
        let rates: Vec<BigFloat> = (0..=m as i64).map(|l| ctx.powi(&cm, -l)).collect();
        let mut weights = Vec::with_capacity(m as usize + 1);
        for l in 0..=m as i64 {
            let mut w = one.clone();
            for j in 0..=m as i64 {
                if j != l {
                    w = ctx.div(&w, &ctx.sub(&one, &ctx.powi(&cm, j - l)));
                }
            }
            weights.push(w);
        }
        let tm = ctx.num(t);
        let exp_rt = rates
            .iter()
            .map(|r| {
                let arg = ctx.mul(r, &tm).neg();
                ctx.exp(&arg)
            })
            .collect();
        CovTermEngineMp {
            t: tm,
            weights,
            rates,
            exp_rt,
            // singular branch cut matches the double path in spirit but can
            // be far tighter at extended precision
            sing_cut: 1e-6 * 1e-10,
        }
    }

    fn r_disc(&self, ctx: &mut MpCtx, lam: &BigFloat) -> (BigFloat, f64) {
        let arg = ctx.mul(lam, &self.t).neg();
        let exp_lam_t = ctx.exp(&arg);
        let mut s = ctx.zero();
        let mut abs_sum = 0.0f64;
        for l in 0..self.rates.len() {
            let delta = ctx.sub(&self.rates[l], lam);
            let dt = ctx.to_f64(&ctx.mul(&delta, &self.t));
            let phi = if dt.abs() < self.sing_cut {
                // leading series term suffices below the cut
                let half = ctx.num(0.5);
                let corr = ctx.sub(&ctx.num(1.0), &ctx.mul(&half, &ctx.mul(&delta, &self.t)));
                ctx.mul(&exp_lam_t, &ctx.mul(&self.t, &corr))
            } else {
                ctx.div(&ctx.sub(&exp_lam_t, &self.exp_rt[l]), &delta)
            };
            let term = ctx.mul(&self.weights[l], &ctx.mul(&self.rates[l], &phi));
            abs_sum += ctx.to_f64(&term).abs();
            s = ctx.add(&s, &term);
        }
        (s, abs_sum)
    }

    pub fn cov_term(&self, ctx: &mut MpCtx, lam: &BigFloat, lam_p: &BigFloat) -> (BigFloat, f64) {
        let lam_sum = ctx.add(lam, lam_p);
        let (r12, a12) = self.r_disc(ctx, &lam_sum);
        let (r1, a1) = self.r_disc(ctx, lam);
        let (r2, a2) = self.r_disc(ctx, lam_p);
        let prod = ctx.mul(&r1, &r2);
        let delta = ctx.sub(&r12, &prod);
        let r1f = ctx.to_f64(&r1).abs();
        let r2f = ctx.to_f64(&r2).abs();
        let err = ctx.eps() * (a12 + a1 * r2f + a2 * r1f + (r1f * r2f) + ctx.to_f64(&delta).abs());
        (delta, err)
    }
}
