//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with its measured numbers. Tolerances are pinned here, not
//! calibrated elsewhere.
//!
//! Criterion 6's asymptotic-consistency clause is expected to fail: the
//! exact covariance (verified against finite-state Markov oracles in
//! tests/oracles.rs and frozen unit values) grows like 2^n with a
//! different constant than the printed supercritical asymptote, so the
//! exact/asymptotic ratio converges to ~4.649 at c = 2 instead of 1.
//! The test reports the measured plateau rather than loosening the bound.

use aldous_shields::analytics::{
    limit_profile, mean_count, mean_occupancy, ode_profile, profile_cov_asymptotic,
    profile_cov_exact, profile_cov_exact_with,
};
use aldous_shields::fit::{fit_c, RateSpec, SearchOptions};
use aldous_shields::montecarlo::{estimate_cov, estimate_l_curve, estimate_mean_profile};
use aldous_shields::params::Parameters;
use aldous_shields::profile::{has_unit_mass, Profile, SeedRecord};
use aldous_shields::qseries::{eigen_residual, inverse_identity_residual};
use aldous_shields::senescence::limit_fraction;
use aldous_shields::series::SeriesControl;
use aldous_shields::sim::{
    coupled_tail_count, simulate_profile, simulate_senescence, simulate_tree, simulate_truncated,
    StopRule,
};

fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {id} {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// 1. Exact dyadic mass 1 at every event, 100 seeded runs per simulator,
/// c in {0.8, 1.05, 2, 3}. Zero tolerance.
#[test]
fn criterion_1_mass_conservation() {
    let mut checked_events = 0u64;
    let mut ok = true;
    for &c in &[0.8, 1.05, 2.0, 3.0] {
        for seed in 0..100u64 {
            // profile-level
            let traj = simulate_profile(
                &Parameters::new(c),
                &StopRule::TargetExternal(400),
                SeedRecord::new(seed),
                &[],
            )
            .unwrap();
            let mut p = Profile::initial();
            for e in &traj.events {
                p.apply_split(e.depth);
                checked_events += 1;
                ok &= has_unit_mass(&p);
            }
            // tree-level
            let (_, traj) = simulate_tree(
                &Parameters::new(c),
                &StopRule::TargetExternal(200),
                SeedRecord::new(seed),
            )
            .unwrap();
            let mut p = Profile::initial();
            for e in &traj.events {
                p.apply_split(e.depth);
                checked_events += 1;
                ok &= has_unit_mass(&p);
            }
            // senescence (depth h+1 inert), run to absorption
            let traj = simulate_truncated(
                &Parameters::new(c).with_truncation(5),
                &StopRule::Absorption,
                SeedRecord::new(seed),
                &[],
            )
            .unwrap();
            let mut p = Profile::initial();
            for e in &traj.events {
                p.apply_split(e.depth);
                checked_events += 1;
                ok &= has_unit_mass(&p);
            }
        }
    }
    assert!(report(
        1,
        "mass conservation",
        ok,
        &format!("exact unit mass at all {checked_events} events, zero tolerance"),
    ));
}

/// 2. Inverse-pair and eigenvector residuals within per-c bands.
#[test]
fn criterion_2_qseries_identities() {
    let ctrl = SeriesControl::default();
    let mut worst_tight = 0.0f64;
    let mut worst_loose = 0.0f64;
    let mut ok = true;
    for &c in &[1.5, 2.0, 3.0] {
        for n in 1..=30 {
            let r = inverse_identity_residual(n, c, &ctrl).unwrap().abs();
            worst_tight = worst_tight.max(r);
            ok &= r <= 1e-10;
        }
        let e = eigen_residual(15, c).unwrap();
        worst_tight = worst_tight.max(e);
        ok &= e <= 1e-10;
    }
    for &c in &[1.05, 1.2] {
        for n in 1..=30 {
            let r = inverse_identity_residual(n, c, &ctrl).unwrap().abs();
            worst_loose = worst_loose.max(r);
            ok &= r <= 1e-8;
        }
        let e = eigen_residual(15, c).unwrap();
        worst_loose = worst_loose.max(e);
        ok &= e <= 1e-8;
    }
    assert!(report(
        2,
        "q-series identities",
        ok,
        &format!(
            "worst residual {worst_tight:.2e} (c>=1.5, band 1e-10), {worst_loose:.2e} (c in {{1.05,1.2}}, band 1e-8)"
        ),
    ));
}

/// 3. Mean profile: closed form vs ODE within 1e-8, and a Monte Carlo
/// battery with |z| < 4 and fewer than 25% of |z| > 2.
#[test]
fn criterion_3_mean_profile_exactness() {
    let mut worst_ode = 0.0f64;
    for &c in &[1.3, 2.0, 3.0] {
        for &t in &[0.5, 1.0, 3.0] {
            let y = ode_profile(t, 12, c, 1e-10).unwrap();
            for n in 0..=12u32 {
                let exact = mean_occupancy(n, t, c).unwrap();
                worst_ode = worst_ode.max((y[n as usize] - exact).abs());
            }
        }
    }
    let ode_ok = worst_ode < 1e-8;

    let mut zs: Vec<f64> = Vec::new();
    for &c in &[1.3, 2.0] {
        for &t in &[1.0, 3.0] {
            let depths: Vec<u32> = (0..=8).collect();
            let reports =
                estimate_mean_profile(c, t, &depths, 10_000, 90_000 + (c * 10.0) as u64 + t as u64)
                    .unwrap();
            zs.extend(reports.iter().map(|r| r.z.abs()));
        }
    }
    let max_z = zs.iter().cloned().fold(0.0, f64::max);
    let frac_over_2 = zs.iter().filter(|z| **z > 2.0).count() as f64 / zs.len() as f64;
    let mc_ok = max_z < 4.0 && frac_over_2 < 0.25;

    assert!(report(
        3,
        "mean profile exactness",
        ode_ok && mc_ok,
        &format!(
            "ODE max deviation {worst_ode:.2e} (<1e-8); MC battery max|z| {max_z:.2} (<4), {:.0}% of |z|>2 (<25%)",
            frac_over_2 * 100.0
        ),
    ));
}

/// 4. Mean-profile limit: normalized mean at n=20 within 1% of the limit
/// profile; self-similarity to 1e-12 at 50 random points; unit mass of
/// the limit profile within 1e-8.
#[test]
fn criterion_4_mean_profile_limit() {
    let ctrl = SeriesControl::default();
    let (c, t, n) = (2.0f64, 1.0, 20u32);
    let mut worst_rel = 0.0f64;
    for i in -2..=2i32 {
        let depth = (n as i32 + i) as u32;
        let count = mean_count(depth, t * c.powi(n as i32), c).unwrap();
        let normalized = count / (depth as f64).exp2();
        let xi = limit_profile(i, t, c, &ctrl).unwrap().value;
        worst_rel = worst_rel.max((normalized / xi - 1.0).abs());
    }
    let limit_ok = worst_rel < 0.01;

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4040);
    let mut worst_ss = 0.0f64;
    for _ in 0..50 {
        let c: f64 = rng.gen_range(1.1..3.0);
        let t: f64 = rng.gen_range(0.1..4.0);
        let i: i32 = rng.gen_range(-5..5);
        let a = limit_profile(i, t, c, &ctrl).unwrap().value;
        let b = limit_profile(i + 1, c * t, c, &ctrl).unwrap().value;
        worst_ss = worst_ss.max((a - b).abs());
    }
    let ss_ok = worst_ss < 1e-12;

    let mut mass = 0.0;
    for i in -40..=40i32 {
        mass += limit_profile(i, 1.0, 2.0, &ctrl).unwrap().value;
    }
    let mass_ok = (mass - 1.0).abs() < 1e-8;

    assert!(report(
        4,
        "mean-profile limit",
        limit_ok && ss_ok && mass_ok,
        &format!(
            "n=20 normalized-mean ratio off by {worst_rel:.2e} (<1e-2); self-similarity {worst_ss:.2e} (<1e-12); sum_i x_i - 1 = {:.2e} (<1e-8)",
            mass - 1.0
        ),
    ));
}

/// 5. Covariance exactness: closed-form anchors to 1e-12 and the Monte
/// Carlo battery at 1e5 replicates with |z| < 5.
#[test]
fn criterion_5_covariance_exactness() {
    let t = 1.0f64;
    let var0 = profile_cov_exact(0, 0, t, 2.0).unwrap();
    let anchor0 = (-t).exp() * (1.0 - (-t).exp());
    let y0 = mean_occupancy(0, t, 2.0).unwrap();
    let y1 = mean_occupancy(1, t, 2.0).unwrap();
    let cov01 = profile_cov_exact(0, 1, t, 2.0).unwrap();
    let anchors_ok = (var0 - anchor0).abs() < 1e-12 && (cov01 + 2.0 * y0 * y1).abs() < 1e-12;

    let mut max_z = 0.0f64;
    for (i, &(n, np)) in [(2u32, 2u32), (3, 4), (4, 4)].iter().enumerate() {
        let rep = estimate_cov(2.0, 2.0, n, np, 100_000, 5_000 + i as u64).unwrap();
        max_z = max_z.max(rep.z.abs());
    }
    let mc_ok = max_z < 5.0;

    assert!(report(
        5,
        "covariance exactness",
        anchors_ok && mc_ok,
        &format!(
            "anchors |dVar0| {:.1e}, |dCov01| {:.1e} (<1e-12); MC battery max|z| {max_z:.2} (<5)",
            (var0 - anchor0).abs(),
            (cov01 + 2.0 * y0 * y1).abs()
        ),
    ));
}

/// 6. Covariance asymptotics: regime constants as printed; the
/// exact/asymptotic ratio at c = 2 is reported at the largest n double
/// precision sustains and again in extended precision at n = 20.
///
/// The ratio clause cannot pass: the exact covariance is oracle-verified
/// and the ratio converges to ~4.649, not 1 (see module docs). The test
/// asserts the criterion as stated and is expected to stay red.
#[test]
fn criterion_6_covariance_asymptotics() {
    let ctrl = SeriesControl::default();
    let (_, reg2) = profile_cov_asymptotic(0, 0, 5, 1.0, 2.0, &ctrl).unwrap();
    let (_, reg12) = profile_cov_asymptotic(0, 0, 5, 1.0, 1.2, &ctrl).unwrap();
    let constants_ok =
        (reg2.prefactor - 4.0 / 3.0).abs() < 1e-14 && (reg12.prefactor - 3.571_428_571_428_571_4).abs() < 1e-13;
    println!(
        "ACCEPTANCE 6a regime constants: {} — c=2 gives {:.12} (4/3), c=1.2 gives {:.10} (2/(2-c^2))",
        if constants_ok { "PASS" } else { "FAIL" },
        reg2.prefactor,
        reg12.prefactor
    );

    // double precision: walk n upward until the conditioning guard trips
    let double_ctrl = SeriesControl::double();
    let (c, t) = (2.0f64, 1.0);
    let mut achieved_n = 0u32;
    let mut ratio_double = f64::NAN;
    for n in 2..=24u32 {
        let tau = t * c.powi(n as i32);
        match profile_cov_exact_with(n, n, tau, c, &double_ctrl) {
            Ok(exact) => {
                let (asym, _) = profile_cov_asymptotic(0, 0, n, t, c, &ctrl).unwrap();
                achieved_n = n;
                ratio_double = exact / asym;
            }
            Err(_) => break,
        }
    }
    println!(
        "ACCEPTANCE 6b conditioning limit: double precision sustains n={achieved_n}, ratio exact/asymptotic = {ratio_double:.6}"
    );

    // extended precision lifts the limit as required
    let ext = SeriesControl::extended(60);
    let n_ext = 20u32;
    let exact = profile_cov_exact_with(n_ext, n_ext, t * c.powi(n_ext as i32), c, &ext).unwrap();
    let (asym, _) = profile_cov_asymptotic(0, 0, n_ext, t, c, &ctrl).unwrap();
    let ratio_ext = exact / asym;
    let ratio_ok = (ratio_ext - 1.0).abs() <= 0.10;
    let pass = constants_ok && ratio_ok;
    assert!(
        report(
            6,
            "covariance asymptotics",
            pass,
            &format!(
                "ratio at n={n_ext} (extended precision) = {ratio_ext:.6}, requirement |ratio-1| <= 0.10; \
                 measured plateau ~4.649 against the exact, oracle-verified covariance"
            ),
        ),
        "expected red: printed supercritical constant does not reproduce the exact covariance"
    );
}

/// 7. Limit curve: r-rescaling to 1e-13, monotone decrease on the curve
/// grid, and h=20 simulations tracking the limit within 0.05.
#[test]
fn criterion_7_limit_curve() {
    let ctrl = SeriesControl::default();

    let mut worst_rescale = 0.0f64;
    for &(t, c, r) in &[(1.3, 1.25, 3.0), (0.7, 1.5, 0.2), (2.4, 1.2, 7.5), (4.0, 1.4, 1.0)] {
        let a = limit_fraction(t, c, r, &ctrl).unwrap().l;
        let b = limit_fraction(t / r, c, 1.0, &ctrl).unwrap().l;
        worst_rescale = worst_rescale.max((a - b).abs() / b.abs().max(1.0));
    }
    let rescale_ok = worst_rescale <= 1e-13;

    // strict decrease of L on a 100-point log grid over [1e-3, 10]; at
    // saturated small t the equivalent representable statement is strict
    // growth of the senescent/proliferating ratio
    let mut monotone_ok = true;
    for &c in &[1.2, 1.3, 1.5] {
        let mut prev_ratio = -1.0f64;
        let mut prev_l = 2.0f64;
        for j in 0..100 {
            let t = 10f64.powf(-3.0 + 4.0 * j as f64 / 99.0);
            let p = limit_fraction(t, c, 1.0, &ctrl).unwrap();
            let ratio = p.senescent_sum / p.numerator;
            monotone_ok &= ratio > prev_ratio;
            monotone_ok &= p.l <= prev_l;
            prev_ratio = ratio;
            prev_l = p.l;
        }
    }

    // finite-h tracking at h = 20
    let grid: Vec<f64> = (0..12).map(|i| 0.25 * 1.34f64.powi(i)).collect();
    let mut worst_dev = 0.0f64;
    for &c in &[1.2, 1.3, 1.5] {
        let reports = estimate_l_curve(c, 1.0, 20, &grid, 50, 770_000 + (c * 100.0) as u64).unwrap();
        for r in &reports {
            worst_dev = worst_dev.max((r.estimate - r.exact).abs());
        }
    }
    let track_ok = worst_dev < 0.05;

    assert!(report(
        7,
        "limit curve",
        rescale_ok && monotone_ok && track_ok,
        &format!(
            "r-rescaling {worst_rescale:.2e} (<=1e-13); monotone decrease on 3x100-point grid: {monotone_ok}; \
             h=20 max |sim - limit| = {worst_dev:.4} (<0.05, 50 replicates, c in {{1.2,1.3,1.5}})"
        ),
    ));
}

/// 8. Coupling: the dyadic tail count is integer-valued (exact
/// arithmetic, enforced inside coupled_tail_count) and its mean matches
/// the senescence model's senescent count within 4 pooled standard errors.
#[test]
fn criterion_8_coupling() {
    let (h, c) = (4u32, 2.0f64);
    let t = 2.0 * c.powi(h as i32); // 32
    let reps = 10_000u64;

    let mut tail_sum = 0.0f64;
    let mut tail_sq = 0.0f64;
    for j in 0..reps {
        let traj = simulate_profile(
            &Parameters::new(c),
            &StopRule::MaxTime(t),
            SeedRecord::with_stream(880, j),
            &[t * 0.25, t * 0.5, t],
        )
        .unwrap();
        // integrality at every snapshot is enforced by construction:
        // a non-integer tail mass returns an error
        let tail = coupled_tail_count(&traj, h).unwrap();
        let v = tail.last().unwrap().1 as f64;
        tail_sum += v;
        tail_sq += v * v;
    }
    let n = reps as f64;
    let tail_mean = tail_sum / n;
    let tail_se = ((tail_sq / n - tail_mean * tail_mean) / (n - 1.0)).sqrt();

    let mut zs_sum = 0.0f64;
    let mut zs_sq = 0.0f64;
    for j in 0..reps {
        let states = simulate_senescence(
            &Parameters::new(c).with_truncation(h),
            &[t],
            SeedRecord::with_stream(881, j),
        )
        .unwrap();
        let v = states[0].zs as f64;
        zs_sum += v;
        zs_sq += v * v;
    }
    let zs_mean = zs_sum / n;
    let zs_se = ((zs_sq / n - zs_mean * zs_mean) / (n - 1.0)).sqrt();

    let pooled = (tail_se * tail_se + zs_se * zs_se).sqrt();
    let z = (tail_mean - zs_mean) / pooled;
    let ok = z.abs() < 4.0;
    assert!(report(
        8,
        "coupling",
        ok,
        &format!(
            "tail mean {tail_mean:.3} vs senescent mean {zs_mean:.3}, |z| = {:.2} (<4); integrality exact at all snapshots",
            z.abs()
        ),
    ));
}

/// 9. Fit recovery: noiseless within 1e-3; sigma = 0.01 noise within
/// 0.05 over 20 seeds.
#[test]
fn criterion_9_fit_recovery() {
    use rand::{Rng, SeedableRng};
    let ctrl = SeriesControl::default();
    let search = SearchOptions::default();

    let curve = |c: f64, points: usize| -> Vec<aldous_shields::fit::Observation> {
        (0..points)
            .map(|i| {
                let t = 0.25 * 1.15f64.powi(i as i32);
                aldous_shields::fit::Observation {
                    t,
                    l_obs: limit_fraction(t, c, 1.0, &ctrl).unwrap().l,
                    weight: 1.0,
                }
            })
            .collect()
    };

    let noiseless = curve(1.3, 30);
    let fit = fit_c(&noiseless, RateSpec::Fixed(1.0), &search, &ctrl).unwrap();
    let clean_ok = (fit.c_hat - 1.3).abs() < 1e-3;

    let base = curve(1.5, 30);
    let mut worst_noisy = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9_900 + seed);
        let noisy: Vec<_> = base
            .iter()
            .map(|o| {
                // Box-Muller normal draw, sigma = 0.01
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen();
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                aldous_shields::fit::Observation {
                    t: o.t,
                    l_obs: (o.l_obs + 0.01 * g).clamp(0.0, 1.0),
                    weight: 1.0,
                }
            })
            .collect();
        let fit = fit_c(&noisy, RateSpec::Fixed(1.0), &search, &ctrl).unwrap();
        worst_noisy = worst_noisy.max((fit.c_hat - 1.5).abs());
    }
    let noisy_ok = worst_noisy < 0.05;

    assert!(report(
        9,
        "fit recovery",
        clean_ok && noisy_ok,
        &format!(
            "noiseless |c_hat - 1.3| = {:.2e} (<1e-3); noisy worst |c_hat - 1.5| = {worst_noisy:.4} over 20 seeds (<0.05)",
            (fit.c_hat - 1.3).abs()
        ),
    ));
}

/// Cauchy-Schwarz and variance nonnegativity across the tested grid
/// (supporting invariants for criterion 5).
#[test]
fn criterion_5_supporting_invariants() {
    let mut ok = true;
    for &c in &[1.3, 2.0] {
        for &t in &[0.5, 1.0, 2.0, 4.0] {
            for n in 0..=4u32 {
                let vn = profile_cov_exact(n, n, t, c).unwrap();
                ok &= vn >= -1e-9 * ((2 * n) as f64).exp2();
                for np in n..=5u32 {
                    let cov = profile_cov_exact(n, np, t, c).unwrap();
                    let vp = profile_cov_exact(np, np, t, c).unwrap();
                    let bound = (vn.max(0.0) * vp.max(0.0)).sqrt();
                    ok &= cov.abs() <= bound + 1e-9 * ((n + np) as f64).exp2();
                }
            }
        }
    }
    assert!(report(
        5,
        "covariance support (Cauchy-Schwarz, nonnegativity)",
        ok,
        "all tested (n, n', t, c) triples",
    ));
}
