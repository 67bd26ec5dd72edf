//! Exact profile covariance via the MRCA decomposition and its
//! phase-transition asymptotics.
//!
//! COV[X_n(t), X_n'(t)] = 2^{n+n'} sum_{m=0}^{n} 2^{-((m+1) /\ n)} y_{n,n',m}(t)
//! where y_{n,n',m} is the covariance of a representative vertex pair with
//! most recent common ancestor at depth m. For m < n the pair decouples
//! given the ancestor's split time T_m and expands over the hypoexponential
//! restricted MGF; for m = n it reduces to the Bernoulli identity.

use serde::Serialize;

use super::hypoexp::{CovTermEngine, CovTermEngineMp, ULP_BUDGET};
use super::mean::mean_occupancy;
use crate::error::{Error, Result};
use crate::mp::MpCtx;
use crate::params::validate_analytic_c;
use crate::qseries::{b_infinity, coeff_a_seq, coeff_b_seq, coeff_seqs_mp};
use crate::series::{KahanSum, PrecisionMode, SeriesControl};

/// Relative-error budget for results returned as f64 from the extended
/// path (the 10^6-ulp rule applies to the working precision in double).
const EXTENDED_REL_BUDGET: f64 = 1e-12;

/// Escalation ladder for Auto precision.
const AUTO_DIGIT_LADDER: [u32; 4] = [60, 120, 240, 480];

/// y_{n,n',m}(t): covariance of the indicators of a depth-n and a depth-n'
/// vertex whose most recent common ancestor sits at depth m <= n <= n'.
pub fn pair_cov(n: u32, n_prime: u32, m: u32, t: f64, c: f64) -> Result<f64> {
    pair_cov_with(n, n_prime, m, t, c, &SeriesControl::default())
}

pub fn pair_cov_with(
    n: u32,
    n_prime: u32,
    m: u32,
    t: f64,
    c: f64,
    control: &SeriesControl,
) -> Result<f64> {
    validate_pair(n, n_prime, m, t, c)?;
    let (value, err) = pair_cov_dispatch(n, n_prime, m, t, c, control)?;
    let budget = rel_budget(control) * value.abs();
    if err > budget && value != 0.0 {
        return Err(Error::Conditioning {
            context: format!("pair_cov(n={n}, n'={n_prime}, m={m}, t={t}, c={c})"),
            predicted: err / value.abs(),
            budget: rel_budget(control),
        });
    }
    Ok(value)
}

fn validate_pair(n: u32, n_prime: u32, m: u32, t: f64, c: f64) -> Result<()> {
    validate_analytic_c(c)?;
    if !(m <= n && n <= n_prime) {
        return Err(Error::Validation(format!(
            "need m <= n <= n', got m={m}, n={n}, n'={n_prime}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("t must be >= 0, got {t}")));
    }
    Ok(())
}

fn rel_budget(control: &SeriesControl) -> f64 {
    match control.precision {
        PrecisionMode::DoubleCompensated => ULP_BUDGET * f64::EPSILON,
        _ => EXTENDED_REL_BUDGET.max(ULP_BUDGET * f64::EPSILON),
    }
}

fn pair_cov_dispatch(
    n: u32,
    n_prime: u32,
    m: u32,
    t: f64,
    c: f64,
    control: &SeriesControl,
) -> Result<(f64, f64)> {
    if m == n {
        return pair_cov_mrca_at_n(n, n_prime, t, c);
    }
    match control.precision {
        PrecisionMode::DoubleCompensated => pair_cov_f64(n, n_prime, m, t, c),
        PrecisionMode::Extended { digits } => {
            let mut ctx = MpCtx::new(digits);
            pair_cov_mp(&mut ctx, n, n_prime, m, t, c)
        }
        PrecisionMode::Auto => {
            let (v, e) = pair_cov_f64(n, n_prime, m, t, c)?;
            if e <= ULP_BUDGET * f64::EPSILON * v.abs() || v == 0.0 {
                return Ok((v, e));
            }
            for &digits in &AUTO_DIGIT_LADDER {
                let mut ctx = MpCtx::new(digits);
                let (v, e) = pair_cov_mp(&mut ctx, n, n_prime, m, t, c)?;
                if e <= EXTENDED_REL_BUDGET * v.abs() || v == 0.0 {
                    return Ok((v, e));
                }
            }
            Err(Error::Conditioning {
                context: format!("pair_cov(n={n}, n'={n_prime}, m={m})"),
                predicted: e / v.abs().max(f64::MIN_POSITIVE),
                budget: EXTENDED_REL_BUDGET,
            })
        }
    }
}

/// m = n: the vertices coincide (n = n') or one descends through the
/// sibling subtree; either way y = delta y_n - y_n y_n'.
fn pair_cov_mrca_at_n(n: u32, n_prime: u32, t: f64, c: f64) -> Result<(f64, f64)> {
    let yn = mean_occupancy(n, t, c)?;
    let ynp = if n_prime == n {
        yn
    } else {
        mean_occupancy(n_prime, t, c)?
    };
    let delta = if n == n_prime { yn } else { 0.0 };
    let v = delta - yn * ynp;
    Ok((v, 8.0 * f64::EPSILON * (delta.abs() + (yn * ynp).abs())))
}

/// Double-precision evaluation of the m < n double sum. Conditioned on
/// T_m the sub-lineages restart one level below the split, so the
/// coefficient indices run to n-m-1 (resp. n'-m-1).
fn pair_cov_f64(n: u32, n_prime: u32, m: u32, t: f64, c: f64) -> Result<(f64, f64)> {
    let kmax = (n - m - 1) as usize;
    let kmax_p = (n_prime - m - 1) as usize;
    let a = coeff_a_seq(kmax.max(kmax_p) as u32, c);
    let b = coeff_b_seq(kmax.max(kmax_p) as u32, c);
    let engine = CovTermEngine::new(m, c, t);

    let lam: Vec<f64> = (0..=kmax).map(|k| c.powi(k as i32 - n as i32)).collect();
    let lam_p: Vec<f64> = (0..=kmax_p)
        .map(|k| c.powi(k as i32 - n_prime as i32))
        .collect();

    let mut sum = KahanSum::new();
    let mut err = 0.0f64;
    for k in 0..=kmax {
        for kp in 0..=kmax_p {
            let (d, e) = engine.cov_term(lam[k], lam_p[kp]);
            let coeff = a[k] * a[kp] * b[kmax - k] * b[kmax_p - kp];
            sum.add(coeff * d);
            err += coeff.abs() * e + f64::EPSILON * (coeff * d).abs();
        }
    }
    Ok((sum.value(), err))
}

fn pair_cov_mp(
    ctx: &mut MpCtx,
    n: u32,
    n_prime: u32,
    m: u32,
    t: f64,
    c: f64,
) -> Result<(f64, f64)> {
    let kmax = (n - m - 1) as usize;
    let kmax_p = (n_prime - m - 1) as usize;
    let (a, b) = coeff_seqs_mp(ctx, kmax.max(kmax_p) as u32, c);
    let engine = CovTermEngineMp::new(ctx, m, c, t);

    let cm = ctx.num(c);
    let lam: Vec<_> = (0..=kmax)
        .map(|k| ctx.powi(&cm, k as i64 - n as i64))
        .collect();
    let lam_p: Vec<_> = (0..=kmax_p)
        .map(|k| ctx.powi(&cm, k as i64 - n_prime as i64))
        .collect();

    let mut sum = ctx.zero();
    let mut err = 0.0f64;
    for k in 0..=kmax {
        for kp in 0..=kmax_p {
            let (d, e) = engine.cov_term(ctx, &lam[k], &lam_p[kp]);
            let coeff = ctx.mul(&ctx.mul(&a[k], &a[kp]), &ctx.mul(&b[kmax - k], &b[kmax_p - kp]));
            let term = ctx.mul(&coeff, &d);
            sum = ctx.add(&sum, &term);
            let cf = ctx.to_f64(&coeff).abs();
            err += cf * e + ctx.eps() * ctx.to_f64(&term).abs();
        }
    }
    Ok((ctx.to_f64(&sum), err))
}

/// COV[X_n(t), X_n'(t)] = 2^{n+n'} sum_m 2^{-((m+1) /\ n)} y_{n,n',m}(t).
/// The m-sum is evaluated in exact order m = 0..n with no reordering.
pub fn profile_cov_exact(n: u32, n_prime: u32, t: f64, c: f64) -> Result<f64> {
    profile_cov_exact_with(n, n_prime, t, c, &SeriesControl::default())
}

pub fn profile_cov_exact_with(
    n: u32,
    n_prime: u32,
    t: f64,
    c: f64,
    control: &SeriesControl,
) -> Result<f64> {
    let (n, n_prime) = if n <= n_prime { (n, n_prime) } else { (n_prime, n) };
    validate_pair(n, n_prime, 0, t, c)?;
    if t == 0.0 {
        // deterministic initial state; forced by continuity
        return Ok(0.0);
    }

    let attempt = |control: &SeriesControl| -> Result<(f64, f64)> {
        let mut sum = KahanSum::new();
        let mut err = 0.0f64;
        for m in 0..=n {
            let w = 2f64.powi(-((m + 1).min(n) as i32));
            let (v, e) = pair_cov_dispatch(n, n_prime, m, t, c, control)?;
            sum.add(w * v);
            err += w * e + f64::EPSILON * (w * v).abs();
        }
        let scale = ((n + n_prime) as f64).exp2();
        Ok((scale * sum.value(), scale * err))
    };

    let budget = rel_budget(control);
    let (value, err) = match control.precision {
        PrecisionMode::Auto => {
            // try double for the whole sum first, then escalate uniformly
            let mut chosen: Option<(f64, f64)> = None;
            let double_ctrl = control.with_precision(PrecisionMode::DoubleCompensated);
            if let Ok((v, e)) = attempt(&double_ctrl) {
                if e <= ULP_BUDGET * f64::EPSILON * v.abs() || v == 0.0 {
                    chosen = Some((v, e));
                }
            }
            if chosen.is_none() {
                for &digits in &AUTO_DIGIT_LADDER {
                    let ext = control.with_precision(PrecisionMode::Extended { digits });
                    let (v, e) = attempt(&ext)?;
                    if e <= EXTENDED_REL_BUDGET * v.abs() || v == 0.0 {
                        chosen = Some((v, e));
                        break;
                    }
                }
            }
            chosen.ok_or_else(|| Error::Conditioning {
                context: format!("profile_cov_exact(n={n}, n'={n_prime}, t={t}, c={c})"),
                predicted: f64::INFINITY,
                budget,
            })?
        }
        _ => {
            let (v, e) = attempt(control)?;
            if e > budget * v.abs() && v != 0.0 {
                return Err(Error::Conditioning {
                    context: format!("profile_cov_exact(n={n}, n'={n_prime}, t={t}, c={c})"),
                    predicted: e / v.abs(),
                    budget,
                });
            }
            (v, e)
        }
    };
    let _ = err;

    if n == n_prime && value < -1e-9 * ((2 * n) as f64).exp2() {
        return Err(Error::Conditioning {
            context: format!("variance at n={n}, t={t}, c={c} is negative: {value}"),
            predicted: value.abs(),
            budget: 1e-9 * ((2 * n) as f64).exp2(),
        });
    }
    Ok(value)
}

/// a_{i,i'}(t) = b_inf^2 sum_{k,k'} a_k a_k' e^{-t(c^{-i+k} + c^{-i'+k'})} c^{k+k'}.
pub fn cov_prefactor(
    i: i32,
    i_prime: i32,
    t: f64,
    c: f64,
    control: &SeriesControl,
) -> Result<f64> {
    // the summand is symmetric under (i,k) <-> (i',k'); normalize the
    // argument order so the symmetry holds bit-for-bit
    let (i, i_prime) = if i <= i_prime { (i, i_prime) } else { (i_prime, i) };
    validate_analytic_c(c)?;
    if !(t > 0.0) {
        return Err(Error::Validation(format!(
            "cov_prefactor requires t > 0, got {t}"
        )));
    }
    let b_inf = b_infinity(c, control)?.value;
    let kmax = control.k_max;
    let a = coeff_a_seq(kmax, c);

    // row factors u_k = a_k c^k e^{-t c^{k-i}} for each side
    let side = |ii: i32| -> Vec<f64> {
        (0..=kmax as usize)
            .map(|k| {
                let arg = t * c.powi(k as i32 - ii);
                if arg > 745.0 {
                    0.0
                } else {
                    a[k] * c.powi(k as i32) * (-arg).exp()
                }
            })
            .collect()
    };
    let u = side(i);
    let v = side(i_prime);

    let mut sum = KahanSum::new();
    let mut max_term = 0.0f64;
    let mut row_streak = 0u32;
    let mut converged = false;
    let mut last_row = 0.0f64;
    for k in 0..=kmax as usize {
        let mut row = KahanSum::new();
        for (kp, vv) in v.iter().enumerate() {
            let term = u[k] * vv;
            row.add(term);
            max_term = max_term.max(term.abs());
            let _ = kp;
        }
        sum.add(row.value());
        last_row = row.value();
        let floor = max_term * f64::EPSILON * (k as f64 + 1.0);
        if row.value().abs() <= control.rel_tol * sum.value().abs().max(floor) {
            row_streak += 1;
            if row_streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            row_streak = 0;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            context: format!("cov_prefactor(i={i}, i'={i_prime}, t={t}, c={c})"),
            index: kmax,
            last_term: last_row,
        });
    }
    Ok(b_inf * b_inf * sum.value())
}

/// Covariance growth regime in n, split at c = sqrt(2). The critical
/// branch is selected inside an explicit tolerance band |c - sqrt2| < 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeTag {
    Subcritical,
    Critical,
    Supercritical,
}

/// Regime descriptor: `value = prefactor * a_{i,i'}(t) * scale(n, i, i')`
/// where `prefactor` is the printed c-dependent constant and
/// `scale_description` records the n-dependence in text form.
#[derive(Debug, Clone, Serialize)]
pub struct CovRegime {
    pub tag: RegimeTag,
    pub prefactor: f64,
    pub scale_description: String,
}

const CRITICAL_BAND: f64 = 1e-12;

/// Asymptotic covariance of (X_{n+i}(t c^n), X_{n+i'}(t c^n)) for large n,
/// as printed: a_{i,i'}(t) times the regime factor.
pub fn profile_cov_asymptotic(
    i: i32,
    i_prime: i32,
    n: u32,
    t: f64,
    c: f64,
    control: &SeriesControl,
) -> Result<(f64, CovRegime)> {
    let (i, i_prime) = if i <= i_prime { (i, i_prime) } else { (i_prime, i) };
    let a = cov_prefactor(i, i_prime, t, c, control)?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let (tag, prefactor, scale, description) = if (c - sqrt2).abs() < CRITICAL_BAND {
        (
            RegimeTag::Critical,
            1.0,
            (n as f64).exp2() * n as f64 * sqrt2.powi(i + i_prime),
            "2^n * n * sqrt(2)^(i+i')".to_string(),
        )
    } else if c < sqrt2 {
        (
            RegimeTag::Subcritical,
            2.0 / (2.0 - c * c),
            (2.0 / c).powi(2 * n as i32 + i + i_prime),
            "(2/c)^(2n+i+i')".to_string(),
        )
    } else {
        (
            RegimeTag::Supercritical,
            c.powi(4) / (2.0 * (c * c - 1.0) * (c * c - 2.0)),
            ((n as i32 + i_prime) as f64).exp2() * c.powi(i - i_prime),
            "2^(n+i') * c^(i-i')".to_string(),
        )
    };
    Ok((
        a * prefactor * scale,
        CovRegime {
            tag,
            prefactor,
            scale_description: description,
        },
    ))
}
