//! Thin wrapper around `astro-float` for the extended-precision mode.
//!
//! All extended-precision arithmetic in the crate goes through `MpCtx` so
//! the precision, rounding mode and constants cache live in one place.

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

/// Arguments beyond this magnitude make exp underflow/overflow even in
/// extended precision (the binary exponent field saturates); treat the
/// result as exactly 0 or reject.
pub(crate) const EXP_ARG_LIMIT: f64 = 1.0e9;

pub(crate) struct MpCtx {
    pub p: usize,
    pub rm: RoundingMode,
    cc: Consts,
    digits: u32,
}

impl MpCtx {
    pub fn new(digits: u32) -> Self {
        let digits = digits.max(50);
        // log2(10) = 3.3219...; add guard bits for intermediate rounding.
        let p = (digits as f64 * 3.321928094887362).ceil() as usize + 32;
        MpCtx {
            p,
            rm: RoundingMode::ToEven,
            cc: Consts::new().expect("constants cache"),
            digits,
        }
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Unit roundoff of this context, for cancellation-floor estimates.
    pub fn eps(&self) -> f64 {
        10f64.powi(-(self.digits as i32))
    }

    pub fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    pub fn zero(&self) -> BigFloat {
        BigFloat::from_f64(0.0, self.p)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, self.rm)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, self.rm)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, self.rm)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, self.rm)
    }

    /// e^x; saturates to 0 for x below the representable exponent range.
    pub fn exp(&mut self, x: &BigFloat) -> BigFloat {
        if x.is_negative() && to_f64_raw(x) < -EXP_ARG_LIMIT {
            return self.zero();
        }
        x.exp(self.p, self.rm, &mut self.cc)
    }

    /// x^k for signed integer k.
    pub fn powi(&self, x: &BigFloat, k: i64) -> BigFloat {
        if k >= 0 {
            x.powi(k as usize, self.p, self.rm)
        } else {
            x.powi((-k) as usize, self.p, self.rm).reciprocal(self.p, self.rm)
        }
    }

    pub fn abs(&self, x: &BigFloat) -> BigFloat {
        let mut y = x.clone();
        y.set_sign(Sign::Pos);
        y
    }

    /// |a| > |b|
    pub fn abs_gt(&self, a: &BigFloat, b: &BigFloat) -> bool {
        matches!(a.abs_cmp(b), Some(o) if o > 0)
    }

    pub fn to_f64(&self, x: &BigFloat) -> f64 {
        to_f64_raw(x)
    }
}

/// Convert through the decimal representation; Rust's float parser is
/// correctly rounded, so this is accurate to the last f64 bit.
fn to_f64_raw(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    if x.is_zero() {
        return 0.0;
    }
    // Out-of-range binary exponents would print huge decimal strings the
    // f64 parser still handles (maps to 0 or inf).
    if let Some(e) = x.exponent() {
        if e < -1200 {
            return if x.is_negative() { -0.0 } else { 0.0 };
        }
        if e > 1200 {
            return if x.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
        }
    }
    format!("{}", x).parse::<f64>().unwrap_or(f64::NAN)
}
