//! Replicate runner and statistical comparison against the analytic
//! engine. Replicates are embarrassingly parallel with one RNG stream per
//! replicate index; aggregation sorts by replicate id before any floating
//! summation, so reported digits do not depend on scheduling or input
//! order.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{mean_count, profile_cov_exact};
use crate::error::{Error, Result};
use crate::params::{validate_analytic_c, Parameters};
use crate::profile::SeedRecord;
use crate::senescence::limit_fraction;
use crate::series::{KahanSum, SeriesControl};
use crate::sim::{simulate_profile, simulate_senescence, StopRule};

/// One estimated quantity next to its exact value.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub quantity: String,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    /// (estimate - exact)/std_error; 0 when both error and spread vanish.
    pub z: f64,
    pub replicates: u64,
}

fn zscore(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        // degenerate sample with a real discrepancy
        f64::MAX
    }
}

/// Kahan mean/SE over (replicate id, value) pairs in id order.
fn summarize_ordered(pairs: &mut Vec<(u64, f64)>) -> (f64, f64) {
    pairs.sort_by_key(|&(j, _)| j);
    let n = pairs.len() as f64;
    let mut sum = KahanSum::new();
    for &(_, v) in pairs.iter() {
        sum.add(v);
    }
    let mean = sum.value() / n;
    let mut ss = KahanSum::new();
    for &(_, v) in pairs.iter() {
        ss.add((v - mean) * (v - mean));
    }
    let var = if pairs.len() > 1 { ss.value() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Sample mean and standard error of X_n(t) per requested depth, with the
/// exact column from the closed-form mean.
pub fn estimate_mean_profile(
    c: f64,
    t: f64,
    depths: &[u32],
    replicates: u64,
    seed: u64,
) -> Result<Vec<MomentReport>> {
    validate_analytic_c(c)?;
    if replicates < 2 {
        return Err(Error::Validation("need at least 2 replicates".into()));
    }
    let params = Parameters::new(c);
    let counts: Vec<Vec<u64>> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let traj = simulate_profile(
                &params,
                &StopRule::MaxTime(t),
                SeedRecord::with_stream(seed, j),
                &[t],
            )?;
            let profile = &traj.snapshots[0].1;
            Ok(depths.iter().map(|&n| profile.count(n)).collect())
        })
        .collect::<Result<_>>()?;

    depths
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let mut pairs: Vec<(u64, f64)> = counts
                .iter()
                .enumerate()
                .map(|(j, row)| (j as u64, row[idx] as f64))
                .collect();
            let (estimate, std_error) = summarize_ordered(&mut pairs);
            let exact = mean_count(n, t, c)?;
            // an all-zero sample against a tiny exact mean is not a
            // discrepancy; fall back to the Poisson-scale standard error
            let se_for_z = if std_error > 0.0 {
                std_error
            } else {
                (exact.abs() / replicates as f64).sqrt()
            };
            Ok(MomentReport {
                quantity: format!("mean X_{n}(t={t}) c={c}"),
                estimate,
                std_error,
                exact,
                z: zscore(estimate - exact, se_for_z),
                replicates,
            })
        })
        .collect()
}

/// Sample covariance of (X_n(t), X_n'(t)) with a jackknife standard
/// error; exact column from the closed-form covariance.
pub fn estimate_cov(
    c: f64,
    t: f64,
    n: u32,
    n_prime: u32,
    replicates: u64,
    seed: u64,
) -> Result<MomentReport> {
    validate_analytic_c(c)?;
    if replicates < 3 {
        return Err(Error::Validation("jackknife needs at least 3 replicates".into()));
    }
    let params = Parameters::new(c);
    let xy: Vec<(u64, u64)> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let traj = simulate_profile(
                &params,
                &StopRule::MaxTime(t),
                SeedRecord::with_stream(seed, j),
                &[t],
            )?;
            let p = &traj.snapshots[0].1;
            Ok((p.count(n), p.count(n_prime)))
        })
        .collect::<Result<_>>()?;

    // integer sums are exact and order-independent
    let r = replicates as f64;
    let sx: u128 = xy.iter().map(|&(x, _)| x as u128).sum();
    let sy: u128 = xy.iter().map(|&(_, y)| y as u128).sum();
    let sxy: u128 = xy.iter().map(|&(x, y)| x as u128 * y as u128).sum();
    let (sxf, syf, sxyf) = (sx as f64, sy as f64, sxy as f64);
    let estimate = (sxyf - sxf * syf / r) / (r - 1.0);

    // leave-one-out estimates from the same exact sums
    let mut loo_sum = KahanSum::new();
    let mut loo: Vec<f64> = Vec::with_capacity(xy.len());
    for &(x, y) in &xy {
        let (xf, yf) = (x as f64, y as f64);
        let est = ((sxyf - xf * yf) - (sxf - xf) * (syf - yf) / (r - 1.0)) / (r - 2.0);
        loo.push(est);
        loo_sum.add(est);
    }
    let loo_mean = loo_sum.value() / r;
    let mut dev = KahanSum::new();
    for v in &loo {
        dev.add((v - loo_mean) * (v - loo_mean));
    }
    let std_error = ((r - 1.0) / r * dev.value()).sqrt();

    let exact = profile_cov_exact(n, n_prime, t, c)?;
    Ok(MomentReport {
        quantity: format!("cov(X_{n},X_{n_prime})(t={t}) c={c}"),
        estimate,
        std_error,
        exact,
        z: zscore(estimate - exact, std_error),
        replicates,
    })
}

/// Replicate-mean proliferating fraction on a rescaled-time grid (model
/// time t c^h), with the exact column from the limit curve. The exact
/// value is an h -> infinity limit, so acceptance bands must include a
/// finite-h allowance.
pub fn estimate_l_curve(
    c: f64,
    r: f64,
    h: u32,
    grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<Vec<MomentReport>> {
    validate_analytic_c(c)?;
    if replicates < 2 {
        return Err(Error::Validation("need at least 2 replicates".into()));
    }
    let params = Parameters::new(c).with_rate(r).with_truncation(h);
    let scale = c.powi(h as i32);
    let model_grid: Vec<f64> = grid.iter().map(|&t| t * scale).collect();

    let fractions: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let states =
                simulate_senescence(&params, &model_grid, SeedRecord::with_stream(seed, j))?;
            Ok(states.iter().map(|s| s.fraction()).collect())
        })
        .collect::<Result<_>>()?;

    let control = SeriesControl::default();
    grid.iter()
        .enumerate()
        .map(|(idx, &t)| {
            let mut pairs: Vec<(u64, f64)> = fractions
                .iter()
                .enumerate()
                .map(|(j, row)| (j as u64, row[idx]))
                .collect();
            let (estimate, std_error) = summarize_ordered(&mut pairs);
            let exact = limit_fraction(t, c, r, &control)?.l;
            Ok(MomentReport {
                quantity: format!("L(t={t} c^{h}) c={c}"),
                estimate,
                std_error,
                exact,
                z: zscore(estimate - exact, std_error),
                replicates,
            })
        })
        .collect()
}
