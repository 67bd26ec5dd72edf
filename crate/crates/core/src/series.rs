//! Truncation and precision policy for infinite sums and products.
//!
//! Every truncated sum in the crate reports the index at which it stopped
//! and the magnitude of its last term, so callers can audit convergence.

use serde::Serialize;

/// How floating-point summation is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PrecisionMode {
    /// IEEE double with compensated (Neumaier) summation.
    DoubleCompensated,
    /// Software floats with the given number of decimal digits (>= 50).
    Extended { digits: u32 },
    /// Start in double, escalate to extended precision when the measured
    /// cancellation floor would swamp the result.
    Auto,
}

/// Truncation and precision policy for series evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesControl {
    /// Relative term tolerance for the stopping criterion.
    pub rel_tol: f64,
    /// Number of consecutive sub-tolerance terms required to stop.
    pub consec: u32,
    /// Hard cap on the summation index.
    pub k_max: u32,
    pub precision: PrecisionMode,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            rel_tol: 1e-14,
            consec: 3,
            k_max: 200,
            precision: PrecisionMode::Auto,
        }
    }
}

impl SeriesControl {
    pub fn with_precision(mut self, precision: PrecisionMode) -> Self {
        self.precision = precision;
        self
    }

    pub fn extended(digits: u32) -> Self {
        SeriesControl::default().with_precision(PrecisionMode::Extended { digits })
    }

    pub fn double() -> Self {
        SeriesControl::default().with_precision(PrecisionMode::DoubleCompensated)
    }
}

/// Outcome of one truncated sum or product.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SumReport {
    pub value: f64,
    /// Index of the last term actually added.
    pub stopped_at: u32,
    pub last_term: f64,
    pub converged: bool,
    /// Running maximum of |term|; `value` is meaningless when it is
    /// dominated by `max_term * eps * count` cancellation noise.
    pub max_term: f64,
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Consecutive-small-term stopping rule. Terms are compared against
/// `rel_tol * max(|partial sum|, scale_floor)`.
#[derive(Debug)]
pub struct StopDetector {
    rel_tol: f64,
    needed: u32,
    streak: u32,
}

impl StopDetector {
    pub fn new(control: &SeriesControl) -> Self {
        StopDetector {
            rel_tol: control.rel_tol,
            needed: control.consec.max(1),
            streak: 0,
        }
    }

    /// Feed one term; returns true once `consec` consecutive terms were
    /// below tolerance.
    pub fn should_stop(&mut self, term_abs: f64, partial_abs: f64, scale_floor: f64) -> bool {
        let threshold = self.rel_tol * partial_abs.max(scale_floor);
        if term_abs <= threshold {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.needed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_cancellation() {
        // 1 + 1e16 - 1e16 loses the 1 in naive double summation order.
        let mut k = KahanSum::new();
        k.add(1.0);
        k.add(1e16);
        k.add(-1e16);
        assert_eq!(k.value(), 1.0);
    }

    #[test]
    fn stop_detector_requires_consecutive() {
        let control = SeriesControl::default();
        let mut d = StopDetector::new(&control);
        assert!(!d.should_stop(1e-20, 1.0, 0.0));
        assert!(!d.should_stop(1.0, 1.0, 0.0)); // streak reset
        assert!(!d.should_stop(1e-20, 1.0, 0.0));
        assert!(!d.should_stop(1e-20, 1.0, 0.0));
        assert!(d.should_stop(1e-20, 1.0, 0.0));
    }

    #[test]
    fn default_policy_matches_contract() {
        let c = SeriesControl::default();
        assert_eq!(c.rel_tol, 1e-14);
        assert_eq!(c.consec, 3);
        assert_eq!(c.k_max, 200);
    }
}
