//! Limiting proliferating-cell fraction of the depth-truncated model and
//! the leading-order expected counts.
//!
//! Both sums share the kernel f(x) = sum_k a_k e^{-c^k x}:
//!   proliferating side  N(x) = sum_{i>=0} 2^-i f(c^i x)
//!   senescent side      S(x) = 2 sum_{i>=1} f(c^-i x)
//! with x = t/r, L_inf(t) = N/(N+S), and expected counts
//! (zp, zs) ~ b_inf 2^h (N, S). Every f-evaluation inherits the
//! cancellation of the vanishing alternating sums, so the achievable
//! accuracy is tracked explicitly and precision escalates when the
//! cancellation floor would swamp either side.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mp::MpCtx;
use crate::params::validate_analytic_c;
use crate::qseries::b_infinity;
use crate::series::{KahanSum, PrecisionMode, SeriesControl};

/// One evaluated point of the limit curve.
#[derive(Debug, Clone, Serialize)]
pub struct LimitCurvePoint {
    /// Rescaled time (units of c^h model time).
    pub t: f64,
    /// Proliferating fraction, numerator/denominator.
    pub l: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Senescent side S alone; representable even when it is far below
    /// one ulp of the denominator N + S.
    pub senescent_sum: f64,
    /// Outer terms consumed by the proliferating-side sum.
    pub numer_terms: u32,
    /// Outer terms consumed by the senescent-side sum.
    pub senesc_terms: u32,
    /// Cancellation floors achieved for (numerator, senescent sum).
    pub floors: (f64, f64),
    /// Decimal digits of the arithmetic that produced the value; None for
    /// IEEE double.
    pub digits_used: Option<u32>,
}

struct SideSums {
    n: f64,
    s: f64,
    n_terms: u32,
    s_terms: u32,
    floor_n: f64,
    floor_s: f64,
}

/// Required resolution of each side relative to its own magnitude.
const SIDE_RESOLUTION: f64 = 1e-9;

const AUTO_DIGIT_LADDER: [u32; 4] = [60, 120, 240, 480];

/// L_inf(t) for rescaled time t: the h -> infinity limit of the
/// proliferating fraction observed at model time t c^h.
pub fn limit_fraction(t: f64, c: f64, r: f64, control: &SeriesControl) -> Result<LimitCurvePoint> {
    validate_analytic_c(c)?;
    if !(r > 0.0) {
        return Err(Error::Validation(format!("r must be > 0, got {r}")));
    }
    if !(t > 0.0) {
        return Err(Error::Validation(
            "limit_fraction is undefined at t = 0 (0/0); use t > 0".into(),
        ));
    }
    let x = t / r;

    let refuse_unresolved = |sums: SideSums, what: &str| -> Result<SideSums> {
        if resolved(&sums) {
            Ok(sums)
        } else {
            Err(Error::Conditioning {
                context: format!("limit_fraction(t={t}, c={c}, r={r}) in {what}"),
                predicted: (sums.floor_n / sums.n.abs().max(f64::MIN_POSITIVE))
                    .max(sums.floor_s / sums.s.abs().max(f64::MIN_POSITIVE)),
                budget: SIDE_RESOLUTION,
            })
        }
    };
    let sums = match control.precision {
        PrecisionMode::DoubleCompensated => {
            refuse_unresolved(side_sums_f64(x, c, control)?, "double precision")?
        }
        PrecisionMode::Extended { digits } => {
            refuse_unresolved(side_sums_mp(x, c, control, digits)?, "extended precision")?
        }
        PrecisionMode::Auto => {
            let mut chosen = None;
            if let Ok(s) = side_sums_f64(x, c, control) {
                if resolved(&s) {
                    chosen = Some((s, None));
                }
            }
            if chosen.is_none() {
                let mut last_err = None;
                for &digits in &AUTO_DIGIT_LADDER {
                    match side_sums_mp(x, c, control, digits) {
                        Ok(s) if resolved(&s) => {
                            chosen = Some((s, Some(digits)));
                            break;
                        }
                        Ok(_) => {}
                        Err(e) => last_err = Some(e),
                    }
                }
                if chosen.is_none() {
                    if let Some(e) = last_err {
                        return Err(e);
                    }
                }
            }
            match chosen {
                Some((s, digits)) => {
                    return build_point(t, s, digits);
                }
                None => {
                    return Err(Error::Conditioning {
                        context: format!("limit_fraction(t={t}, c={c}, r={r})"),
                        predicted: f64::INFINITY,
                        budget: SIDE_RESOLUTION,
                    })
                }
            }
        }
    };
    let digits = match control.precision {
        PrecisionMode::Extended { digits } => Some(digits),
        _ => None,
    };
    build_point(t, sums, digits)
}

fn resolved(s: &SideSums) -> bool {
    s.n > 0.0 && s.s > 0.0 && s.floor_n <= SIDE_RESOLUTION * s.n && s.floor_s <= SIDE_RESOLUTION * s.s
}

fn build_point(t: f64, sums: SideSums, digits: Option<u32>) -> Result<LimitCurvePoint> {
    let denominator = sums.n + sums.s;
    if !(denominator > 0.0) {
        return Err(Error::Conditioning {
            context: format!("limit_fraction denominator vanished at t={t}"),
            predicted: f64::INFINITY,
            budget: SIDE_RESOLUTION,
        });
    }
    Ok(LimitCurvePoint {
        t,
        l: sums.n / denominator,
        numerator: sums.n,
        denominator,
        senescent_sum: sums.s,
        numer_terms: sums.n_terms,
        senesc_terms: sums.s_terms,
        floors: (sums.floor_n, sums.floor_s),
        digits_used: digits,
    })
}

/// Double-precision evaluation with a shared e^{-c^j x} table.
fn side_sums_f64(x: f64, c: f64, control: &SeriesControl) -> Result<SideSums> {
    let imax = control.k_max as i64;
    let kmax = control.k_max as i64;
    // table over j in [-imax, kmax + imax]
    let offset = imax;
    let size = (2 * imax + kmax + 1) as usize;
    let mut table = vec![0.0f64; size];
    for j in -imax..=(kmax + imax) {
        let arg = c.powi(j as i32) * x;
        table[(j + offset) as usize] = if arg > 745.0 { 0.0 } else { (-arg).exp() };
    }
    let a = crate::qseries::coeff_a_seq(control.k_max, c);

    // kernel f(c^shift x) with term accounting
    let kernel = |shift: i64| -> (f64, f64, u32) {
        let mut s = KahanSum::new();
        let mut max_term = 0.0f64;
        let mut below = 0u32;
        let mut used = 0u32;
        for (k, ak) in a.iter().enumerate() {
            let j = shift + k as i64;
            let e = if j > kmax + imax { 0.0 } else { table[(j + offset) as usize] };
            let term = ak * e;
            s.add(term);
            used = k as u32;
            max_term = max_term.max(term.abs());
            if k > 3 && term.abs() <= max_term * f64::EPSILON {
                below += 1;
                if below >= 3 {
                    break;
                }
            } else {
                below = 0;
            }
        }
        (s.value(), max_term, used)
    };

    // proliferating side: sum_i 2^-i f(c^i x)
    let mut n_sum = KahanSum::new();
    let mut floor_n = 0.0f64;
    let mut streak = 0u32;
    let mut n_terms = 0u32;
    let mut converged = false;
    for i in 0..=imax {
        let w = (-(i as f64)).exp2();
        let (f, max_term, used) = kernel(i);
        n_sum.add(w * f);
        let kernel_floor = w * max_term * f64::EPSILON * (used as f64 + 1.0);
        floor_n += kernel_floor;
        n_terms = i as u32 + 1;
        // a contribution at its own noise floor cannot inform the sum
        if (w * f).abs() <= (control.rel_tol * n_sum.value().abs()).max(kernel_floor) {
            streak += 1;
            if streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            context: format!("limit_fraction proliferating sum (c={c}, x={x})"),
            index: n_terms,
            last_term: n_sum.value(),
        });
    }

    // senescent side: 2 sum_{i>=1} f(c^-i x); stop against |partial D|
    let mut s_sum = KahanSum::new();
    let mut floor_s = 0.0f64;
    streak = 0;
    let mut s_terms = 0u32;
    converged = false;
    for i in 1..=imax {
        let (f, max_term, used) = kernel(-i);
        s_sum.add(2.0 * f);
        let kernel_floor = 2.0 * max_term * f64::EPSILON * (used as f64 + 1.0);
        floor_s += kernel_floor;
        s_terms = i as u32;
        let partial_d = (n_sum.value() + s_sum.value()).abs();
        if (2.0 * f).abs() <= (control.rel_tol * partial_d).max(kernel_floor) {
            streak += 1;
            if streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            context: format!("limit_fraction senescent sum (c={c}, x={x})"),
            index: s_terms,
            last_term: s_sum.value(),
        });
    }

    Ok(SideSums {
        n: n_sum.value(),
        s: s_sum.value(),
        n_terms,
        s_terms,
        floor_n,
        floor_s,
    })
}

/// Extended-precision twin; identical structure at `digits` digits.
fn side_sums_mp(x: f64, c: f64, control: &SeriesControl, digits: u32) -> Result<SideSums> {
    let mut ctx = MpCtx::new(digits);
    let imax = control.k_max as i64;
    let kmax = control.k_max as i64;
    let offset = imax;
    let size = (2 * imax + kmax + 1) as usize;
    let xm = ctx.num(x);
    let cm = ctx.num(c);
    let mut table = Vec::with_capacity(size);
    for j in -imax..=(kmax + imax) {
        let p = ctx.powi(&cm, j);
        let arg = ctx.mul(&p, &xm).neg();
        let e = ctx.exp(&arg);
        table.push(e);
    }
    // a_k in extended precision
    let one = ctx.num(1.0);
    let mut a = vec![one.clone()];
    for k in 1..=kmax {
        let ck = ctx.powi(&cm, k);
        let prev = a[(k - 1) as usize].clone();
        let next = ctx.div(&ctx.mul(&prev, &cm), &ctx.sub(&ck, &one)).neg();
        a.push(next);
    }

    let eps = ctx.eps();
    let kernel = |ctx: &mut MpCtx, shift: i64| -> (astro_float::BigFloat, f64, u32) {
        let mut s = ctx.zero();
        let mut max_term = 0.0f64;
        let mut below = 0u32;
        let mut used = 0u32;
        for (k, ak) in a.iter().enumerate() {
            let j = shift + k as i64;
            let term = if j > kmax + imax {
                ctx.zero()
            } else {
                ctx.mul(ak, &table[(j + offset) as usize])
            };
            s = ctx.add(&s, &term);
            used = k as u32;
            let mag = ctx.to_f64(&term).abs();
            max_term = max_term.max(mag);
            if k > 3 && mag <= max_term * eps {
                below += 1;
                if below >= 3 {
                    break;
                }
            } else {
                below = 0;
            }
        }
        (s, max_term, used)
    };

    let mut n_sum = ctx.zero();
    let mut floor_n = 0.0f64;
    let mut streak = 0u32;
    let mut n_terms = 0u32;
    let mut converged = false;
    for i in 0..=imax {
        let w = ctx.powi(&ctx.num(2.0), -i);
        let (f, max_term, used) = kernel(&mut ctx, i);
        let contrib = ctx.mul(&w, &f);
        n_sum = ctx.add(&n_sum, &contrib);
        let kernel_floor = (-(i as f64)).exp2() * max_term * eps * (used as f64 + 1.0);
        floor_n += kernel_floor;
        n_terms = i as u32 + 1;
        let cmag = ctx.to_f64(&contrib).abs();
        if cmag <= (control.rel_tol * ctx.to_f64(&n_sum).abs()).max(kernel_floor) {
            streak += 1;
            if streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            context: format!("limit_fraction proliferating sum (c={c}, x={x}, {digits} digits)"),
            index: n_terms,
            last_term: ctx.to_f64(&n_sum),
        });
    }

    let mut s_sum = ctx.zero();
    let mut floor_s = 0.0f64;
    streak = 0;
    let mut s_terms = 0u32;
    converged = false;
    let two = ctx.num(2.0);
    for i in 1..=imax {
        let (f, max_term, used) = kernel(&mut ctx, -i);
        let contrib = ctx.mul(&two, &f);
        s_sum = ctx.add(&s_sum, &contrib);
        let kernel_floor = 2.0 * max_term * eps * (used as f64 + 1.0);
        floor_s += kernel_floor;
        s_terms = i as u32;
        let partial_d = ctx.to_f64(&ctx.add(&n_sum, &s_sum)).abs();
        let cmag = ctx.to_f64(&contrib).abs();
        if cmag <= (control.rel_tol * partial_d).max(kernel_floor) {
            streak += 1;
            if streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            context: format!("limit_fraction senescent sum (c={c}, x={x}, {digits} digits)"),
            index: s_terms,
            last_term: ctx.to_f64(&s_sum),
        });
    }

    Ok(SideSums {
        n: ctx.to_f64(&n_sum),
        s: ctx.to_f64(&s_sum),
        n_terms,
        s_terms,
        floor_n,
        floor_s,
    })
}

/// Leading-order expected (proliferating, senescent) counts at model time
/// t c^h: (zp, zs) = b_inf 2^h (N, S).
pub fn expected_counts_asymptotic(
    t: f64,
    c: f64,
    r: f64,
    h: u32,
    control: &SeriesControl,
) -> Result<(f64, f64)> {
    let point = limit_fraction(t, c, r, control)?;
    let b_inf = b_infinity(c, control)?.value;
    let scale = b_inf * (h as f64).exp2();
    Ok((scale * point.numerator, scale * (point.denominator - point.numerator)))
}
