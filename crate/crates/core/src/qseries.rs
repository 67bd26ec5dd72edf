//! q-series constants and the linear-algebra identities behind the mean
//! profile: the alternating coefficients a_k, the normalizing coefficients
//! b_k, their limit b_inf, and numerical residuals of the eigenvector /
//! inverse-pair identities of the profile ODE generator.
//!
//! Both coefficient families are computed by multiplicative recurrences
//! (a_k = -a_{k-1} c/(c^k - 1), b_k = b_{k-1} c^k/(c^k - 1)); forming the
//! product (c-1)...(c^k-1) directly overflows quickly.

use crate::error::{Error, Result};
use crate::mp::MpCtx;
use crate::params::validate_analytic_c;
use crate::series::{KahanSum, PrecisionMode, SeriesControl, SumReport};

/// a_k = (-1)^k c^k / prod_{j=1..k} (c^j - 1); 1 at k=0, 0 for k<0.
pub fn coeff_a(k: i64, c: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let mut v = 1.0;
    for j in 1..=k {
        v *= -c / (powi(c, j) - 1.0);
    }
    v
}

/// b_k = prod_{j=1..k} c^j / (c^j - 1); 1 at k=0, 0 for k<0.
pub fn coeff_b(k: i64, c: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let mut v = 1.0;
    for j in 1..=k {
        let cj = powi(c, j);
        v *= cj / (cj - 1.0);
    }
    v
}

/// a_0..a_kmax by the recurrence.
pub fn coeff_a_seq(kmax: u32, c: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(kmax as usize + 1);
    a.push(1.0);
    for k in 1..=kmax as i64 {
        let prev = a[(k - 1) as usize];
        a.push(-prev * c / (powi(c, k) - 1.0));
    }
    a
}

/// b_0..b_kmax by the recurrence.
pub fn coeff_b_seq(kmax: u32, c: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(kmax as usize + 1);
    b.push(1.0);
    for k in 1..=kmax as i64 {
        let ck = powi(c, k);
        let prev = b[(k - 1) as usize];
        // the parenthesized ratio is >= 1, keeping the sequence monotone
        b.push(prev * (ck / (ck - 1.0)));
    }
    b
}

fn powi(c: f64, k: i64) -> f64 {
    c.powi(k as i32)
}

/// Internal cap on the number of b_inf product factors; the stopping rule
/// needs ~log(1/rel_tol)/log(c) of them, far below this for c >= 1.05.
const PRODUCT_FACTOR_CAP: u32 = 100_000;

/// b_inf = (prod_{l>=1} (1 - c^-l))^-1, in (1, inf). Factors are
/// multiplied until c^-l drops below the control's relative tolerance.
pub fn b_infinity(c: f64, control: &SeriesControl) -> Result<SumReport> {
    validate_analytic_c(c)?;
    let mut prod = 1.0f64;
    let mut l = 1u32;
    let mut last = 0.0;
    loop {
        let cl = powi(c, -(l as i64));
        prod *= 1.0 - cl;
        last = cl;
        if cl < control.rel_tol {
            break;
        }
        if l >= PRODUCT_FACTOR_CAP {
            return Err(Error::Convergence {
                context: format!("b_infinity(c={c})"),
                index: l,
                last_term: cl,
            });
        }
        l += 1;
    }
    Ok(SumReport {
        value: 1.0 / prod,
        stopped_at: l,
        last_term: last,
        converged: true,
        max_term: 1.0,
    })
}

/// Cached a_k, b_k, b_inf for a fixed c.
#[derive(Debug, Clone)]
pub struct QTable {
    pub c: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub b_inf: f64,
    pub b_inf_report: SumReport,
}

impl QTable {
    pub fn build(c: f64, kmax: u32, control: &SeriesControl) -> Result<QTable> {
        validate_analytic_c(c)?;
        let report = b_infinity(c, control)?;
        Ok(QTable {
            c,
            a: coeff_a_seq(kmax, c),
            b: coeff_b_seq(kmax, c),
            b_inf: report.value,
            b_inf_report: report,
        })
    }

    pub fn kmax(&self) -> u32 {
        (self.a.len() - 1) as u32
    }
}

/// (F E) entry at offset n: sum_{k=0}^n b_{n-k} a_k. Exactly 1 for n=0 and
/// 0 for n>0; the returned value is the numerical residual of that
/// identity. Auto precision escalates to extended arithmetic when the
/// summand magnitudes would swamp double (c near 1).
pub fn inverse_identity_residual(n: u32, c: f64, control: &SeriesControl) -> Result<f64> {
    validate_analytic_c(c)?;
    let a = coeff_a_seq(n, c);
    let b = coeff_b_seq(n, c);
    let max_term = (0..=n as usize)
        .map(|k| (a[k] * b[n as usize - k]).abs())
        .fold(0.0f64, f64::max);

    let use_extended = match control.precision {
        PrecisionMode::DoubleCompensated => false,
        PrecisionMode::Extended { .. } => true,
        // double noise floor from per-term rounding: ~ max_term * eps * n
        PrecisionMode::Auto => max_term * f64::EPSILON * (n as f64 + 1.0) > 1e-12,
    };

    if !use_extended {
        let mut s = KahanSum::new();
        for k in 0..=n as usize {
            s.add(a[k] * b[n as usize - k]);
        }
        return Ok(s.value());
    }

    let digits = match control.precision {
        PrecisionMode::Extended { digits } => digits,
        _ => (max_term.max(1.0).log10().ceil() as u32).saturating_add(40).max(60),
    };
    let mut ctx = MpCtx::new(digits);
    let (am, bm) = coeff_seqs_mp(&mut ctx, n, c);
    let mut s = ctx.zero();
    for k in 0..=n as usize {
        s = ctx.add(&s, &ctx.mul(&am[k], &bm[n as usize - k]));
    }
    Ok(ctx.to_f64(&s))
}

pub(crate) fn coeff_seqs_mp(
    ctx: &mut MpCtx,
    kmax: u32,
    c: f64,
) -> (Vec<astro_float::BigFloat>, Vec<astro_float::BigFloat>) {
    let cm = ctx.num(c);
    let one = ctx.num(1.0);
    let mut a = vec![one.clone()];
    let mut b = vec![one.clone()];
    for k in 1..=kmax as i64 {
        let ck = ctx.powi(&cm, k);
        let denom = ctx.sub(&ck, &one);
        let an = ctx.div(&ctx.mul(&a[(k - 1) as usize], &cm), &denom).neg();
        let bn = ctx.div(&ctx.mul(&b[(k - 1) as usize], &ck), &denom);
        a.push(an);
        b.push(bn);
    }
    (a, b)
}

/// Max-abs residual of the eigenvector identity (A E)_{ij} = -c^-j e_{ij}
/// on the K x K truncations of the generator (diagonal -c^-i, subdiagonal
/// c^-i) and E (e_{ij} = a_{i-j}), over rows i < K-1 and columns j <= i.
pub fn eigen_residual(k_dim: u32, c: f64) -> Result<f64> {
    validate_analytic_c(c)?;
    if k_dim < 2 {
        return Err(Error::Validation(format!(
            "eigen_residual needs K >= 2, got {k_dim}"
        )));
    }
    let k = k_dim as usize;
    let a = coeff_a_seq(k_dim, c);
    // dense truncations, built literally
    let mut gen = vec![vec![0.0f64; k]; k];
    let mut e = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        gen[i][i] = -powi(c, -(i as i64));
        if i > 0 {
            gen[i][i - 1] = powi(c, -(i as i64 - 1));
        }
        for j in 0..=i {
            e[i][j] = a[i - j];
        }
    }
    let mut worst = 0.0f64;
    for i in 0..k - 1 {
        for j in 0..=i {
            let mut prod = 0.0;
            for l in 0..k {
                prod += gen[i][l] * e[l][j];
            }
            let resid = prod + powi(c, -(j as i64)) * e[i][j];
            worst = worst.max(resid.abs());
        }
    }
    Ok(worst)
}

/// Truncated value of sum_k a_k c^{N k}, the cancellation stress test:
/// the sum vanishes for every integer N >= 0 (gated by the extended
/// precision oracle in the test suite before tests rely on it).
pub fn euler_vanishing_sum(n_pow: u32, c: f64, control: &SeriesControl) -> Result<SumReport> {
    validate_analytic_c(c)?;
    match control.precision {
        PrecisionMode::Extended { digits } => Ok(vanishing_sum_extended(n_pow, c, digits)),
        _ => {
            let mut s = KahanSum::new();
            let mut ak = 1.0f64;
            let mut max_term = 0.0f64;
            let mut streak = 0u32;
            let mut k = 0i64;
            let (mut last, mut converged) = (0.0, false);
            loop {
                let term = ak * powi(c, n_pow as i64 * k);
                s.add(term);
                last = term;
                max_term = max_term.max(term.abs());
                if term.abs() <= control.rel_tol * max_term {
                    streak += 1;
                    if streak >= control.consec {
                        converged = true;
                        break;
                    }
                } else {
                    streak = 0;
                }
                if k as u32 >= control.k_max {
                    break;
                }
                k += 1;
                ak *= -c / (powi(c, k) - 1.0);
            }
            Ok(SumReport {
                value: s.value(),
                stopped_at: k as u32,
                last_term: last,
                converged,
                max_term,
            })
        }
    }
}

/// Extended-precision evaluation of the vanishing sum; serves as the
/// independent oracle required before the double version is trusted.
pub fn vanishing_sum_extended(n_pow: u32, c: f64, digits: u32) -> SumReport {
    let mut ctx = MpCtx::new(digits);
    let cm = ctx.num(c);
    let one = ctx.num(1.0);
    let mut ak = one.clone();
    let mut s = ctx.zero();
    let mut max_term = 0.0f64;
    let mut k = 0i64;
    let mut last = 0.0;
    loop {
        let term = ctx.mul(&ak, &ctx.powi(&cm, n_pow as i64 * k));
        s = ctx.add(&s, &term);
        last = ctx.to_f64(&term);
        max_term = max_term.max(last.abs());
        // Gaussian tail: once terms fall below the target precision of the
        // running max, three more cannot bring them back.
        if k > 10 && last.abs() < max_term * ctx.eps() {
            break;
        }
        if k > 4000 {
            break;
        }
        k += 1;
        let ck = ctx.powi(&cm, k);
        ak = ctx.div(&ctx.mul(&ak, &cm), &ctx.sub(&ck, &one)).neg();
    }
    SumReport {
        value: ctx.to_f64(&s),
        stopped_at: k as u32,
        last_term: last,
        converged: true,
        max_term,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeff_a_direct(k: i64, c: f64) -> f64 {
        // ratio of products, only safe for small k
        if k < 0 {
            return 0.0;
        }
        let mut denom = 1.0;
        for j in 1..=k {
            denom *= c.powi(j as i32) - 1.0;
        }
        (if k % 2 == 0 { 1.0 } else { -1.0 }) * c.powi(k as i32) / denom
    }

    #[test]
    fn a_examples() {
        assert_eq!(coeff_a(0, 2.0), 1.0);
        assert_eq!(coeff_a(1, 2.0), -2.0);
        assert!((coeff_a(3, 2.0) - (-8.0 / 21.0)).abs() < 1e-15);
        assert_eq!(coeff_a(-1, 2.0), 0.0);
    }

    #[test]
    fn b_examples() {
        assert_eq!(coeff_b(0, 2.0), 1.0);
        assert_eq!(coeff_b(1, 2.0), 2.0);
        assert!((coeff_b(2, 2.0) - 8.0 / 3.0).abs() < 1e-15);
        assert!((coeff_b(3, 2.0) - 64.0 / 21.0).abs() < 1e-15);
        assert_eq!(coeff_b(-2, 2.0), 0.0);
    }

    #[test]
    fn recurrence_agrees_with_direct_product() {
        for &c in &[1.2, 1.5, 2.0, 3.0] {
            for k in 0..=50 {
                let r = coeff_a(k, c);
                let d = coeff_a_direct(k, c);
                if d.is_finite() && d != 0.0 {
                    assert!(
                        ((r - d) / d).abs() < 1e-13,
                        "a_{k}({c}): {r} vs {d}"
                    );
                }
            }
        }
    }

    #[test]
    fn sign_alternation_and_b_monotonicity() {
        for &c in &[1.2, 2.0, 3.0] {
            let t = QTable::build(c, 60, &SeriesControl::default()).unwrap();
            for k in 0..=60usize {
                if t.a[k] == 0.0 {
                    // |a_k| decays like c^{-k(k-1)/2} and eventually
                    // underflows f64; the sign pattern holds up to there
                    assert!(k > 30, "a_{k} underflowed too early at c={c}");
                    break;
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert!(sign * t.a[k] > 0.0, "sign of a_{k} at c={c}");
            }
            for k in 1..=60usize {
                // increments b_{k-1}/(c^k - 1) drop below one ulp for
                // large k; strictness only holds while representable
                if k <= 30 {
                    assert!(t.b[k] > t.b[k - 1], "b increasing at c={c}, k={k}");
                } else {
                    assert!(t.b[k] >= t.b[k - 1], "b decreasing at c={c}, k={k}");
                }
                assert!(t.b[k] < t.b_inf * (1.0 + 1e-12), "b_k below b_inf at c={c}");
            }
            assert!(t.b_inf > 1.0);
        }
    }

    #[test]
    fn b_inf_value_at_2() {
        // independent high-precision evaluation of the inverted Euler product
        let r = b_infinity(2.0, &SeriesControl::default()).unwrap();
        assert!((r.value - 3.462_746_619_455_063_6).abs() < 1e-12);
        assert!(r.converged);
        assert!(r.last_term < 1e-14);
    }

    #[test]
    fn b_inf_monotone_in_c() {
        let c = SeriesControl::default();
        let v12 = b_infinity(1.2, &c).unwrap().value;
        let v2 = b_infinity(2.0, &c).unwrap().value;
        let v3 = b_infinity(3.0, &c).unwrap().value;
        let v10 = b_infinity(10.0, &c).unwrap().value;
        assert!(v12 > v2 && v2 > v3 && v3 > v10 && v10 > 1.0);
    }

    #[test]
    fn inverse_identity_hand_case() {
        // n=2, c=2: 8/3 + 2*(-2) + 4/3 = 0
        let r = inverse_identity_residual(2, 2.0, &SeriesControl::default()).unwrap();
        assert!(r.abs() < 1e-14, "residual {r}");
        let r0 = {
            let a = coeff_a(0, 2.0);
            let b = coeff_b(0, 2.0);
            a * b
        };
        assert_eq!(r0, 1.0);
    }

    #[test]
    fn inverse_identity_small_c_extended() {
        // at c=1.05 the summands reach ~1e16; only the extended path can
        // deliver a small residual
        let ctrl = SeriesControl::extended(60);
        for n in [10, 20, 30] {
            let r = inverse_identity_residual(n, 1.05, &ctrl).unwrap();
            assert!(r.abs() < 1e-9, "n={n} residual {r}");
        }
    }

    #[test]
    fn eigen_residual_small() {
        assert!(eigen_residual(2, 2.0).unwrap() < 1e-15);
        assert!(eigen_residual(15, 2.0).unwrap() < 1e-12);
        assert!(eigen_residual(15, 1.1).unwrap() < 1e-8);
        assert!(eigen_residual(1, 2.0).is_err());
    }

    #[test]
    fn vanishing_sum_double_vs_extended() {
        // the extended-precision oracle gates the double-precision claim
        for &c in &[2.0, 1.3] {
            for n_pow in 0..=2 {
                let oracle = vanishing_sum_extended(n_pow, c, 60);
                assert!(
                    oracle.value.abs() < 1e-30 * oracle.max_term.max(1.0),
                    "oracle says nonzero: c={c} N={n_pow} -> {}",
                    oracle.value
                );
            }
        }
        let d = euler_vanishing_sum(1, 2.0, &SeriesControl::double()).unwrap();
        assert!(d.value.abs() < 1e-12, "double sum {}", d.value);
        assert!(d.converged);
    }

    #[test]
    fn abs_a_times_ck_summable() {
        // partial sums of |a_k| c^k must hit the stopping criterion
        for &c in &[1.05, 1.2, 1.5, 2.0, 3.0] {
            let a = coeff_a_seq(200, c);
            let mut prev = 0.0f64;
            let mut sum = 0.0f64;
            let mut stopped = false;
            for (k, ak) in a.iter().enumerate() {
                let term = ak.abs() * c.powi(k as i32);
                sum += term;
                if k > 10 && term < 1e-14 * sum {
                    stopped = true;
                    break;
                }
                prev = term;
            }
            assert!(stopped, "no convergence for c={c}, last={prev}, sum={sum}");
        }
    }

    #[test]
    fn rejects_invalid_c() {
        assert!(b_infinity(1.0, &SeriesControl::default()).is_err());
        assert!(euler_vanishing_sum(0, 0.9, &SeriesControl::default()).is_err());
    }
}
