//! Exact event-driven simulation of the splitting process, at profile
//! level (the default engine) and tree level, plus the depth-truncated
//! senescence variant and the coupling diagnostic.
//!
//! The profile is an exact lumping of the tree dynamics: depth n fires at
//! total rate X_n c^-n r and a split moves one unit from X_n to two units
//! at X_{n+1}. Each event consumes exactly two uniform draws, waiting
//! time first, then depth selection (tree level adds a third draw for the
//! vertex identity), so trajectories are reproducible for a fixed seed
//! and insensitive to data-structure iteration order.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{validate, Parameters, ValidationContext};
use crate::profile::{Event, PathWord, Profile, SeedRecord, Trajectory};
use crate::series::KahanSum;

/// Exactly one stop criterion per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once the external-vertex count reaches this value.
    TargetExternal(u64),
    /// Stop at this model time.
    MaxTime(f64),
    /// Stop after this many split events.
    MaxEvents(u64),
    /// Run until no vertex can split (senescence variant only).
    Absorption,
}

/// Snapshot of the truncated model: profile over depths 0..h+1, the
/// proliferating count zp = sum_{n<=h} X_n and senescent count zs = X_{h+1}.
#[derive(Debug, Clone)]
pub struct SenescenceState {
    pub time: f64,
    pub profile: Profile,
    pub zp: u64,
    pub zs: u64,
}

impl SenescenceState {
    /// Proliferating fraction zp/(zp+zs); 0 once absorbed.
    pub fn fraction(&self) -> f64 {
        if self.zp + self.zs == 0 {
            return 0.0;
        }
        self.zp as f64 / (self.zp + self.zs) as f64
    }

    pub fn absorbed(&self) -> bool {
        self.zp == 0
    }
}

struct Engine {
    c: f64,
    r: f64,
    /// Depths above this never split (senescence truncation).
    max_split_depth: Option<u32>,
    counts: Vec<u64>,
    /// Cached c^-n per depth.
    pow: Vec<f64>,
    time: KahanSum,
    rng: ChaCha8Rng,
}

impl Engine {
    fn new(params: &Parameters, seed: SeedRecord, truncated: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
        rng.set_stream(seed.stream);
        Engine {
            c: params.c,
            r: params.r,
            max_split_depth: if truncated { params.h } else { None },
            counts: vec![1],
            pow: vec![1.0],
            time: KahanSum::new(),
            rng,
        }
    }

    fn depth_weight(&self, n: usize) -> f64 {
        match self.max_split_depth {
            Some(h) if n as u32 > h => 0.0,
            _ => self.counts[n] as f64 * self.pow[n],
        }
    }

    fn total_weight(&self) -> f64 {
        (0..self.counts.len()).map(|n| self.depth_weight(n)).sum()
    }

    fn total_external(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn profile(&self) -> Profile {
        Profile::from_counts(
            self.counts
                .iter()
                .enumerate()
                .map(|(n, &x)| (n as u32, x)),
        )
    }

    /// Draw the next event. Returns None when every rate is zero.
    /// Order of draws: waiting time, then depth.
    fn next_event(&mut self) -> Option<Event> {
        let w = self.total_weight();
        if w <= 0.0 {
            return None;
        }
        let u_wait: f64 = self.rng.gen();
        let tau = -(1.0 - u_wait).ln() / (w * self.r);
        let u_depth: f64 = self.rng.gen();

        let target = u_depth * w;
        let mut acc = 0.0;
        let mut depth = self.counts.len() - 1;
        for n in 0..self.counts.len() {
            acc += self.depth_weight(n);
            if target < acc {
                depth = n;
                break;
            }
        }
        // guard against rounding at the upper end: pick the deepest depth
        // that can actually split
        while self.depth_weight(depth) == 0.0 {
            depth -= 1;
        }

        self.time.add(tau);
        Some(Event {
            time: self.time.value(),
            depth: depth as u32,
        })
    }

    fn apply(&mut self, depth: u32) {
        let n = depth as usize;
        self.counts[n] -= 1;
        if self.counts.len() == n + 1 {
            self.counts.push(0);
            self.pow.push(self.c.powi(-(n as i32 + 1)));
        }
        self.counts[n + 1] += 2;
    }
}

fn validate_stop(stop: &StopRule, params: &Parameters) -> Result<()> {
    match stop {
        StopRule::MaxTime(t) if !(*t >= 0.0) => Err(Error::Validation(format!(
            "stop time must be >= 0, got {t}"
        ))),
        StopRule::Absorption if params.h.is_none() => Err(Error::Validation(
            "absorption stop rule requires a truncation depth h".into(),
        )),
        _ => Ok(()),
    }
}

/// Exact simulation at profile level by the direct method. Snapshot times
/// must be sorted ascending; each records the profile at that model time
/// (times beyond a MaxTime stop are dropped, times after absorption
/// record the frozen state).
pub fn simulate_profile(
    params: &Parameters,
    stop: &StopRule,
    seed: SeedRecord,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    run_profile(params, stop, seed, snapshot_times, false)
}

fn run_profile(
    params: &Parameters,
    stop: &StopRule,
    seed: SeedRecord,
    snapshot_times: &[f64],
    truncated: bool,
) -> Result<Trajectory> {
    validate(params, ValidationContext::Simulate)?;
    validate_stop(stop, params)?;
    debug_assert!(snapshot_times.windows(2).all(|w| w[0] <= w[1]));

    let mut engine = Engine::new(params, seed, truncated);
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending = snapshot_times.iter().copied().peekable();
    let mut absorbed = false;

    loop {
        match stop {
            StopRule::TargetExternal(n) if engine.total_external() >= *n => break,
            StopRule::MaxEvents(n) if events.len() as u64 >= *n => break,
            _ => {}
        }
        let next = engine.next_event();
        let event = match next {
            Some(e) => e,
            None => {
                absorbed = true;
                break;
            }
        };
        while let Some(&s) = pending.peek() {
            let within_stop = match stop {
                StopRule::MaxTime(t_max) => s <= *t_max,
                _ => true,
            };
            if s < event.time && within_stop {
                snapshots.push((s, engine.profile()));
                pending.next();
            } else {
                break;
            }
        }
        if let StopRule::MaxTime(t_max) = stop {
            if event.time > *t_max {
                break;
            }
        }
        engine.apply(event.depth);
        events.push(event);
    }

    // flush: absorbed state is frozen forever; a MaxTime stop covers
    // exactly the requested horizon
    while let Some(&s) = pending.peek() {
        let record = absorbed
            || match stop {
                StopRule::MaxTime(t_max) => s <= *t_max,
                _ => false,
            };
        if record {
            snapshots.push((s, engine.profile()));
            pending.next();
        } else {
            break;
        }
    }

    let diagnostic = if events.is_empty() {
        Some(match stop {
            StopRule::MaxEvents(0) => "stop rule allows no events".to_string(),
            _ => "no events occurred before the stop rule triggered".to_string(),
        })
    } else {
        None
    };

    Ok(Trajectory {
        events,
        snapshots,
        seed,
        diagnostic,
    })
}

/// Depth-truncated run with the full event log: vertices deeper than h
/// never split. Supports every stop rule including absorption.
pub fn simulate_truncated(
    params: &Parameters,
    stop: &StopRule,
    seed: SeedRecord,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    if params.h.is_none() {
        return Err(Error::Validation(
            "simulate_truncated requires the truncation depth h".into(),
        ));
    }
    run_profile(params, stop, seed, snapshot_times, true)
}

/// Tree-level simulation: same law as `simulate_profile`, but a uniformly
/// random external vertex of the firing depth splits, so vertex identities
/// are retained. Returns the external-vertex set and the trajectory.
pub fn simulate_tree(
    params: &Parameters,
    stop: &StopRule,
    seed: SeedRecord,
) -> Result<(Vec<PathWord>, Trajectory)> {
    validate(params, ValidationContext::Simulate)?;
    validate_stop(stop, params)?;
    if matches!(stop, StopRule::Absorption) {
        return Err(Error::Validation(
            "tree-level absorption runs are not supported; use simulate_senescence".into(),
        ));
    }

    let mut engine = Engine::new(params, seed, false);
    let mut registry: Vec<Vec<PathWord>> = vec![vec![PathWord::root()]];
    let mut events = Vec::new();

    loop {
        match stop {
            StopRule::TargetExternal(n) if engine.total_external() >= *n => break,
            StopRule::MaxEvents(n) if events.len() as u64 >= *n => break,
            _ => {}
        }
        let event = match engine.next_event() {
            Some(e) => e,
            None => break,
        };
        if let StopRule::MaxTime(t_max) = stop {
            if event.time > *t_max {
                break;
            }
        }
        let n = event.depth as usize;
        let u_vertex: f64 = engine.rng.gen();
        let idx = ((u_vertex * registry[n].len() as f64) as usize).min(registry[n].len() - 1);
        let parent = registry[n].swap_remove(idx);
        if registry.len() == n + 1 {
            registry.push(Vec::new());
        }
        registry[n + 1].push(parent.child(0));
        registry[n + 1].push(parent.child(1));
        engine.apply(event.depth);
        events.push(event);
    }

    debug_assert!(registry
        .iter()
        .enumerate()
        .all(|(n, v)| v.len() as u64 == engine.counts.get(n).copied().unwrap_or(0)));

    let external: Vec<PathWord> = registry.into_iter().flatten().collect();
    let diagnostic = if events.is_empty() {
        Some("no events occurred before the stop rule triggered".to_string())
    } else {
        None
    };
    Ok((
        external,
        Trajectory {
            events,
            snapshots: Vec::new(),
            seed,
            diagnostic,
        },
    ))
}

/// Depth-truncated run observed on a grid of model times: depth h+1 is
/// inert, so the process absorbs in the all-senescent state. Grid points
/// after absorption report the frozen state (zs = 2^{h+1}, fraction 0).
pub fn simulate_senescence(
    params: &Parameters,
    grid: &[f64],
    seed: SeedRecord,
) -> Result<Vec<SenescenceState>> {
    let h = params.h.ok_or_else(|| {
        Error::Validation("simulate_senescence requires the truncation depth h".into())
    })?;
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation("grid times must be sorted".into()));
    }
    let traj = simulate_truncated(params, &StopRule::Absorption, seed, grid)?;
    let states = traj
        .snapshots
        .into_iter()
        .map(|(time, profile)| {
            let zs = profile.count(h + 1);
            let zp = profile.total_external() - zs;
            SenescenceState {
                time,
                profile,
                zp,
                zs,
            }
        })
        .collect();
    Ok(states)
}

/// Number of depth-(h+1) vertices with an external descendant-or-self in a
/// full-model trajectory: sum_{n >= h+1} 2^{h+1-n} X_n, evaluated in exact
/// dyadic arithmetic at every snapshot. Always a nonnegative integer; it
/// couples the full model to the senescent count of the truncated one.
pub fn coupled_tail_count(traj: &Trajectory, h: u32) -> Result<Vec<(f64, u64)>> {
    let boundary = h + 1;
    traj.snapshots
        .iter()
        .map(|(time, profile)| {
            let max_depth = profile.max_depth().unwrap_or(0).max(boundary);
            // common denominator 2^(max_depth - boundary)
            let shift_den = max_depth - boundary;
            let mut acc = BigUint::zero();
            for (depth, count) in profile.iter() {
                if depth >= boundary {
                    acc += BigUint::from(count) << (max_depth - depth);
                }
            }
            if shift_den > 0 {
                let den = BigUint::one() << shift_den;
                if (&acc % &den) != BigUint::zero() {
                    return Err(Error::Validation(format!(
                        "tail mass at t={time} is not an integer; profile not reachable \
                         from the root state"
                    )));
                }
                acc >>= shift_den;
            }
            let v = acc.to_u64().ok_or_else(|| {
                Error::Validation("tail count exceeds u64; h too large".into())
            })?;
            Ok((*time, v))
        })
        .collect()
}
