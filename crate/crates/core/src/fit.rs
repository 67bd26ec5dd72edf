//! Least-squares estimation of c (and optionally r) from empirical
//! proliferating-fraction time series against the limit curve.
//!
//! The search is derivative-free golden-section bracketing in log c (with
//! a nested log-r minimization when r is free); weighted least squares is
//! this artifact's loss choice, the source model gives no noise model.

use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::senescence::limit_fraction;
use crate::series::SeriesControl;

/// One observed point of the proliferating fraction at rescaled time t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub t: f64,
    pub l_obs: f64,
    pub weight: f64,
}

/// Parsed input plus per-row rejection diagnostics.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub observations: Vec<Observation>,
    /// (1-based line number, reason) for rows skipped by the range check.
    pub rejected: Vec<(usize, String)>,
}

/// Parse `t,L[,weight]` CSV. Comment lines (#...) and blank lines are
/// skipped; rows with L outside [0,1] are rejected with their line
/// numbers; non-positive t or malformed fields are hard errors.
pub fn ingest<R: BufRead>(reader: R) -> Result<IngestReport> {
    let mut observations = Vec::new();
    let mut rejected = Vec::new();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() < 2 || !cols[0].eq_ignore_ascii_case("t")
                || !cols[1].eq_ignore_ascii_case("l")
            {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected header 't,L[,weight]', got '{trimmed}'"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 2 or 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("cannot parse {what} '{s}'"),
            })
        };
        let t = parse(fields[0], "t")?;
        let l_obs = parse(fields[1], "L")?;
        let weight = if fields.len() == 3 {
            parse(fields[2], "weight")?
        } else {
            1.0
        };
        if !(t > 0.0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("t must be positive, got {t}"),
            });
        }
        if !(0.0..=1.0).contains(&l_obs) || !l_obs.is_finite() {
            rejected.push((lineno, format!("L={l_obs} outside [0,1]")));
            continue;
        }
        if !(weight > 0.0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("weight must be positive, got {weight}"),
            });
        }
        observations.push(Observation { t, l_obs, weight });
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 0,
            msg: "empty input: no header found".into(),
        });
    }
    if observations.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no valid observations".into(),
        });
    }
    Ok(IngestReport {
        observations,
        rejected,
    })
}

/// Whether r is pinned or jointly fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Fixed(f64),
    Free,
}

/// Bracketing-search policy over log c.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SearchOptions {
    pub c_lo: f64,
    pub c_hi: f64,
    /// Convergence tolerance on log c.
    pub tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        // lower edge sits at the analytic domain floor
        SearchOptions {
            c_lo: crate::params::ANALYTIC_C_MIN,
            c_hi: 10.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub c_hat: f64,
    pub r_hat: f64,
    pub r_fitted: bool,
    /// Sum of squared weighted residuals at the optimum.
    pub sse: f64,
    /// Objective evaluations consumed.
    pub iterations: u64,
    /// Set when the minimum sits against a bracket endpoint (no interior
    /// minimum; e.g. data without senescence signal).
    pub boundary: bool,
    pub bracket: (f64, f64),
    /// Objective evaluations that failed to converge and were treated as
    /// +inf by the bracketing search.
    pub objective_failures: u64,
    /// For free-r fits: (c, best r, sse) sampled across the bracket so
    /// c-r trade-off valleys are visible.
    pub valley: Option<Vec<(f64, f64, f64)>>,
}

struct Objective<'a> {
    obs: &'a [Observation],
    control: &'a SeriesControl,
    evals: u64,
    failures: u64,
}

impl Objective<'_> {
    fn sse(&mut self, c: f64, r: f64) -> f64 {
        self.evals += 1;
        let mut total = 0.0;
        for o in self.obs {
            match limit_fraction(o.t, c, r, self.control) {
                Ok(p) => {
                    let d = o.l_obs - p.l;
                    total += o.weight * d * d;
                }
                Err(_) => {
                    self.failures += 1;
                    return f64::INFINITY;
                }
            }
        }
        total
    }
}

/// Golden-section minimization over [a, b]; f returns +inf on failed
/// probes, which shrinks the bracket away from them.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

const R_LOG_BRACKET: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137); // ln 1e-3, ln 1e3

/// Minimize the weighted squared deviation from the limit curve over c
/// (and r when free).
pub fn fit_c(
    obs: &[Observation],
    rate: RateSpec,
    search: &SearchOptions,
    control: &SeriesControl,
) -> Result<FitResult> {
    if obs.len() < 3 {
        return Err(Error::Validation(format!(
            "a fit needs at least 3 observations, got {}",
            obs.len()
        )));
    }
    if !(search.c_lo > 1.0 && search.c_hi > search.c_lo) {
        return Err(Error::Validation(format!(
            "invalid bracket [{}, {}]: need 1 < c_lo < c_hi",
            search.c_lo, search.c_hi
        )));
    }
    if !(search.tol > 0.0) {
        return Err(Error::Validation("search tol must be positive".into()));
    }

    let mut objective = Objective {
        obs,
        control,
        evals: 0,
        failures: 0,
    };

    let (la, lb) = (search.c_lo.ln(), search.c_hi.ln());
    let best_r_at = |obj: &mut Objective, c: f64| -> (f64, f64) {
        match rate {
            RateSpec::Fixed(r) => (r, obj.sse(c, r)),
            RateSpec::Free => {
                let (lr, s) = golden_min(|lr| obj.sse(c, lr.exp()), R_LOG_BRACKET.0, R_LOG_BRACKET.1, search.tol);
                (lr.exp(), s)
            }
        }
    };

    let (lc_hat, sse) = golden_min(
        |lc| best_r_at(&mut objective, lc.exp()).1,
        la,
        lb,
        search.tol,
    );
    let c_hat = lc_hat.exp();
    let (r_hat, sse_check) = best_r_at(&mut objective, c_hat);
    let sse = sse.min(sse_check);
    let boundary = (lc_hat - la).abs() < 2.0 * search.tol || (lb - lc_hat).abs() < 2.0 * search.tol;

    let valley = match rate {
        RateSpec::Free => {
            let samples = 15;
            let mut v = Vec::with_capacity(samples);
            for i in 0..samples {
                let lc = la + (lb - la) * i as f64 / (samples - 1) as f64;
                let c = lc.exp();
                let (r, s) = best_r_at(&mut objective, c);
                v.push((c, r, s));
            }
            Some(v)
        }
        RateSpec::Fixed(_) => None,
    };

    Ok(FitResult {
        c_hat,
        r_hat,
        r_fitted: matches!(rate, RateSpec::Free),
        sse,
        iterations: objective.evals,
        boundary,
        bracket: (search.c_lo, search.c_hi),
        objective_failures: objective.failures,
        valley,
    })
}

/// Evaluate the fitted curve on the observation grid (for plot output).
pub fn fitted_curve(
    obs: &[Observation],
    c: f64,
    r: f64,
    control: &SeriesControl,
) -> Result<Vec<(f64, f64)>> {
    obs.iter()
        .map(|o| Ok((o.t, limit_fraction(o.t, c, r, control)?.l)))
        .collect()
}
