//! Exact mean profile, its large-depth limit, and an independent ODE
//! integration oracle.

use crate::error::{Error, Result};
use crate::mp::{MpCtx, EXP_ARG_LIMIT};
use crate::params::{validate, validate_analytic_c, Parameters, ValidationContext};
use crate::qseries::{b_infinity, coeff_a_seq, coeff_b_seq};
use crate::series::{KahanSum, PrecisionMode, SeriesControl, SumReport};

/// y_n(t): probability that the depth-n vertex on the all-zeros path is
/// external at time t, y_n(t) = sum_{k=0}^n a_k b_{n-k} exp(-c^{-(n-k)} t).
pub fn mean_occupancy(n: u32, t: f64, c: f64) -> Result<f64> {
    validate_analytic_c(c)?;
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        // deterministic initial state; the series collapses to the
        // inverse-pair identity and would only return rounding noise
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let a = coeff_a_seq(n, c);
    let b = coeff_b_seq(n, c);
    let mut s = KahanSum::new();
    for k in 0..=n as usize {
        let rate = c.powi(-((n as usize - k) as i32));
        s.add(a[k] * b[n as usize - k] * (-rate * t).exp());
    }
    Ok(s.value())
}

/// Expected external-vertex count at depth n: 2^n y_n(t).
pub fn mean_count(n: u32, t: f64, c: f64) -> Result<f64> {
    Ok((n as f64).exp2() * mean_occupancy(n, t, c)?)
}

/// f(x) = sum_k a_k exp(-c^k x), the kernel shared by the limit profile
/// and the senescence sums. Stops on `consec` terms below
/// rel_tol * max(|partial|, cancellation floor).
pub(crate) fn vanishing_kernel_f64(x: f64, c: f64, control: &SeriesControl) -> SumReport {
    let mut s = KahanSum::new();
    let mut ak = 1.0f64;
    let mut ck = 1.0f64; // c^k
    let mut max_term = 0.0f64;
    let mut streak = 0u32;
    let mut k = 0u32;
    let (mut last, mut converged) = (0.0, false);
    loop {
        let term = if ck * x > 745.0 { 0.0 } else { ak * (-ck * x).exp() };
        s.add(term);
        last = term;
        max_term = max_term.max(term.abs());
        let floor = max_term * f64::EPSILON * (k as f64 + 1.0);
        if term.abs() <= control.rel_tol * s.value().abs().max(floor) {
            streak += 1;
            if streak >= control.consec {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
        if k >= control.k_max {
            break;
        }
        k += 1;
        ck *= c;
        ak *= -c / (ck - 1.0);
    }
    SumReport {
        value: s.value(),
        stopped_at: k,
        last_term: last,
        converged,
        max_term,
    }
}

/// Extended-precision kernel. Returns the sum and the largest |term| (in
/// f64) for cancellation-floor accounting.
pub(crate) fn vanishing_kernel_mp(
    ctx: &mut MpCtx,
    x: &astro_float::BigFloat,
    c: f64,
    k_max: u32,
) -> (astro_float::BigFloat, f64) {
    let cm = ctx.num(c);
    let one = ctx.num(1.0);
    let mut ak = one.clone();
    let mut ck = one.clone();
    let mut s = ctx.zero();
    let mut max_term = 0.0f64;
    let mut below = 0u32;
    for k in 0..=k_max as i64 {
        let arg = ctx.mul(&ck, x).neg();
        let e = ctx.exp(&arg);
        let term = ctx.mul(&ak, &e);
        s = ctx.add(&s, &term);
        let mag = ctx.to_f64(&term).abs();
        max_term = max_term.max(mag);
        if k > 3 && mag < max_term * ctx.eps() {
            below += 1;
            if below >= 3 {
                break;
            }
        } else {
            below = 0;
        }
        ck = ctx.mul(&ck, &cm);
        ak = ctx.div(&ctx.mul(&ak, &cm), &ctx.sub(&ck, &one)).neg();
    }
    (s, max_term)
}

/// x_i(t) = b_inf * sum_k a_k exp(-c^{k-i} t): the in-probability limit of
/// the normalized count at depth n+i and time t c^n.
pub fn limit_profile(i: i32, t: f64, c: f64, control: &SeriesControl) -> Result<SumReport> {
    validate_analytic_c(c)?;
    if !(t > 0.0) {
        return Err(Error::Validation(format!(
            "limit profile requires t > 0, got {t}"
        )));
    }
    let b_inf = b_infinity(c, control)?.value;
    let x = c.powi(-i) * t;
    let mut rep = match control.precision {
        PrecisionMode::Extended { digits } => {
            let mut ctx = MpCtx::new(digits);
            let xm = ctx.num(x);
            let (s, max_term) = vanishing_kernel_mp(&mut ctx, &xm, c, control.k_max);
            SumReport {
                value: ctx.to_f64(&s),
                stopped_at: 0,
                last_term: 0.0,
                converged: true,
                max_term,
            }
        }
        _ => vanishing_kernel_f64(x, c, control),
    };
    if !rep.converged {
        return Err(Error::Convergence {
            context: format!("limit_profile(i={i}, t={t}, c={c})"),
            index: rep.stopped_at,
            last_term: rep.last_term,
        });
    }
    rep.value *= b_inf;
    rep.max_term *= b_inf;
    Ok(rep)
}

/// Integrate dy_n/dt = c^{-(n-1)} y_{n-1} - c^{-n} y_n, y(0) = e_0, with
/// an adaptive embedded Runge-Kutta pair; returns y_0..y_depth_max at
/// time t. Serves as the independent oracle for `mean_occupancy`.
pub fn ode_profile(t: f64, depth_max: u32, c: f64, tol: f64) -> Result<Vec<f64>> {
    validate(&Parameters::new(c), ValidationContext::Simulate)?;
    if !(t >= 0.0) {
        return Err(Error::Validation(format!("t must be >= 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tol must be > 0, got {tol}")));
    }
    let dim = depth_max as usize + 1;
    let mut y = vec![0.0f64; dim];
    y[0] = 1.0;
    if t == 0.0 {
        return Ok(y);
    }

    let rates: Vec<f64> = (0..dim).map(|n| c.powi(-(n as i32))).collect();
    let deriv = |y: &[f64], dy: &mut [f64]| {
        dy[0] = -rates[0] * y[0];
        for n in 1..y.len() {
            dy[n] = rates[n - 1] * y[n - 1] - rates[n] * y[n];
        }
    };

    // Fehlberg 4(5) pair
    const A2: f64 = 1.0 / 4.0;
    const B31: f64 = 3.0 / 32.0;
    const B32: f64 = 9.0 / 32.0;
    const B41: f64 = 1932.0 / 2197.0;
    const B42: f64 = -7200.0 / 2197.0;
    const B43: f64 = 7296.0 / 2197.0;
    const B51: f64 = 439.0 / 216.0;
    const B52: f64 = -8.0;
    const B53: f64 = 3680.0 / 513.0;
    const B54: f64 = -845.0 / 4104.0;
    const B61: f64 = -8.0 / 27.0;
    const B62: f64 = 2.0;
    const B63: f64 = -3544.0 / 2565.0;
    const B64: f64 = 1859.0 / 4104.0;
    const B65: f64 = -11.0 / 40.0;
    const C51: f64 = 16.0 / 135.0;
    const C53: f64 = 6656.0 / 12825.0;
    const C54: f64 = 28561.0 / 56430.0;
    const C55: f64 = -9.0 / 50.0;
    const C56: f64 = 2.0 / 55.0;
    const D1: f64 = 25.0 / 216.0;
    const D3: f64 = 1408.0 / 2565.0;
    const D4: f64 = 2197.0 / 4104.0;
    const D5: f64 = -1.0 / 5.0;

    let mut stage = vec![vec![0.0f64; dim]; 6];
    let mut work = vec![0.0f64; dim];
    let mut time = 0.0f64;
    let mut h = t / 100.0;
    let mut steps = 0u64;

    while time < t {
        if steps > 20_000_000 {
            return Err(Error::Integration(format!(
                "step budget exhausted at time {time}"
            )));
        }
        if h < t * 1e-14 {
            return Err(Error::Integration(format!(
                "step size underflow at time {time}"
            )));
        }
        steps += 1;
        h = h.min(t - time);

        deriv(&y, &mut stage[0]);
        for i in 0..dim {
            work[i] = y[i] + h * A2 * stage[0][i];
        }
        deriv(&work, &mut stage[1]);
        for i in 0..dim {
            work[i] = y[i] + h * (B31 * stage[0][i] + B32 * stage[1][i]);
        }
        deriv(&work, &mut stage[2]);
        for i in 0..dim {
            work[i] = y[i] + h * (B41 * stage[0][i] + B42 * stage[1][i] + B43 * stage[2][i]);
        }
        deriv(&work, &mut stage[3]);
        for i in 0..dim {
            work[i] = y[i]
                + h * (B51 * stage[0][i] + B52 * stage[1][i] + B53 * stage[2][i]
                    + B54 * stage[3][i]);
        }
        deriv(&work, &mut stage[4]);
        for i in 0..dim {
            work[i] = y[i]
                + h * (B61 * stage[0][i]
                    + B62 * stage[1][i]
                    + B63 * stage[2][i]
                    + B64 * stage[3][i]
                    + B65 * stage[4][i]);
        }
        deriv(&work, &mut stage[5]);

        let mut err = 0.0f64;
        for i in 0..dim {
            let y5 = h
                * (C51 * stage[0][i]
                    + C53 * stage[2][i]
                    + C54 * stage[3][i]
                    + C55 * stage[4][i]
                    + C56 * stage[5][i]);
            let y4 =
                h * (D1 * stage[0][i] + D3 * stage[2][i] + D4 * stage[3][i] + D5 * stage[4][i]);
            err = err.max((y5 - y4).abs());
            work[i] = y[i] + y5;
        }

        // local tolerance is distributed per unit step so the global
        // error stays at tol
        let budget = tol * (h / t).max(1e-30);
        if err <= budget {
            y.copy_from_slice(&work);
            time += h;
        }
        let scale = if err > 0.0 {
            0.9 * (budget / err).powf(0.2)
        } else {
            4.0
        };
        h *= scale.clamp(0.1, 4.0);
    }
    Ok(y)
}

/// Shared guard for exponential underflow in double precision.
pub(crate) fn exp_neg(arg: f64) -> f64 {
    if arg > 745.0 {
        0.0
    } else {
        (-arg).exp()
    }
}

/// Arguments this large make even extended-precision exponentials
/// saturate; callers treat such terms as exactly zero.
pub(crate) fn exp_arg_saturated(arg: f64) -> bool {
    arg > EXP_ARG_LIMIT
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_occupancy_is_exponential() {
        for &t in &[0.0, 0.3, 1.0, 4.0] {
            let y = mean_occupancy(0, t, 1.7).unwrap();
            assert!((y - (-t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn depth1_closed_form() {
        // y_1(t) = c/(c-1) (e^{-t/c} - e^{-t}); at c=2, t=1
        let y = mean_occupancy(1, 1.0, 2.0).unwrap();
        let expect = 2.0 * ((-0.5f64).exp() - (-1.0f64).exp());
        assert!((y - expect).abs() < 1e-15, "{y} vs {expect}");
        assert!((y - 0.477_302_437_082_382_2).abs() < 1e-15);
    }

    #[test]
    fn occupancy_zero_at_time_zero_below_root() {
        assert_eq!(mean_occupancy(5, 0.0, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn mean_count_scales_occupancy() {
        let y = mean_occupancy(3, 2.0, 2.0).unwrap();
        assert_eq!(mean_count(3, 2.0, 2.0).unwrap(), 8.0 * y);
    }

    #[test]
    fn limit_profile_self_similarity() {
        let ctrl = SeriesControl::default();
        let x0 = limit_profile(0, 1.0, 2.0, &ctrl).unwrap().value;
        let x1 = limit_profile(1, 2.0, 2.0, &ctrl).unwrap().value;
        assert!((x0 - x1).abs() < 1e-12, "{x0} vs {x1}");
        assert!((x0 - 0.420_730_421_531_672).abs() < 1e-12);
    }

    #[test]
    fn limit_profile_vacated_behind_front() {
        let v = limit_profile(-8, 1.0, 2.0, &SeriesControl::default())
            .unwrap()
            .value;
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn limit_profile_mass_sums_to_one() {
        let ctrl = SeriesControl::default();
        let mut sum = 0.0;
        for i in -40..=40 {
            sum += limit_profile(i, 1.0, 2.0, &ctrl).unwrap().value;
        }
        assert!((sum - 1.0).abs() < 1e-8, "sum {sum}");
    }

    #[test]
    fn limit_profile_rejects_t_zero() {
        assert!(limit_profile(0, 0.0, 2.0, &SeriesControl::default()).is_err());
    }

    #[test]
    fn ode_matches_root_exponential() {
        let y = ode_profile(1.0, 6, 2.0, 1e-10).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn ode_matches_closed_form_depth1() {
        let y = ode_profile(1.0, 6, 2.0, 1e-10).unwrap();
        let exact = mean_occupancy(1, 1.0, 2.0).unwrap();
        assert!((y[1] - exact).abs() < 1e-8, "{} vs {exact}", y[1]);
    }

    #[test]
    fn ode_probabilistic_bounds() {
        let y = ode_profile(3.0, 12, 1.3, 1e-10).unwrap();
        let sum: f64 = y.iter().sum();
        for (n, v) in y.iter().enumerate() {
            assert!((-1e-9..=1.0 + 1e-9).contains(v), "y[{n}] = {v}");
        }
        assert!(sum <= 1.0 + 1e-9);
    }

    #[test]
    fn kernel_mp_agrees_with_f64() {
        let ctrl = SeriesControl::default();
        let d = vanishing_kernel_f64(0.7, 2.0, &ctrl);
        let mut ctx = MpCtx::new(60);
        let xm = ctx.num(0.7);
        let (m, _) = vanishing_kernel_mp(&mut ctx, &xm, 2.0, 200);
        assert!((d.value - ctx.to_f64(&m)).abs() < 1e-13);
    }
}
