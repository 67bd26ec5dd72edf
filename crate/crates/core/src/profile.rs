//! Profile, path words, trajectories and the exact dyadic mass accountant.
//!
//! The profile (external-vertex counts by depth) is the canonical process
//! state: the dynamics depend on depths only. Full tree structure is kept
//! only by the tree-level simulator.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};

/// Exact rational with arbitrary-width terms, used for dyadic accounting.
pub type DyadicRational = Ratio<BigUint>;

/// External-vertex counts per depth. Absent depths have count zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    counts: BTreeMap<u32, u64>,
}

impl Profile {
    /// The root-only initial state {0: 1}.
    pub fn initial() -> Self {
        Profile {
            counts: BTreeMap::from([(0, 1)]),
        }
    }

    pub fn from_counts(pairs: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let counts = pairs.into_iter().filter(|&(_, x)| x > 0).collect();
        Profile { counts }
    }

    pub fn count(&self, depth: u32) -> u64 {
        self.counts.get(&depth).copied().unwrap_or(0)
    }

    /// Non-zero (depth, count) pairs in depth order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&d, &x)| (d, x))
    }

    pub fn max_depth(&self) -> Option<u32> {
        self.counts.keys().next_back().copied()
    }

    pub fn total_external(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Apply one split at `depth`: X_n -= 1, X_{n+1} += 2.
    /// Panics if no external vertex exists at `depth`.
    pub fn apply_split(&mut self, depth: u32) {
        let x = self
            .counts
            .get_mut(&depth)
            .expect("split at depth with no external vertex");
        *x -= 1;
        if *x == 0 {
            self.counts.remove(&depth);
        }
        *self.counts.entry(depth + 1).or_insert(0) += 2;
    }
}

/// Exact dyadic mass sum of X_n * 2^-n over all depths, as a rational.
/// No floating point is involved, so the conservation invariant is exact
/// at any depth.
pub fn dyadic_mass(profile: &Profile) -> DyadicRational {
    let max_depth = match profile.max_depth() {
        Some(d) => d,
        None => return DyadicRational::zero(),
    };
    // sum X_n 2^(D-n) over a common denominator 2^D
    let mut numer = BigUint::zero();
    for (depth, count) in profile.iter() {
        numer += BigUint::from(count) << (max_depth - depth);
    }
    DyadicRational::new(numer, BigUint::one() << max_depth)
}

/// True when the profile carries exactly unit dyadic mass, the invariant
/// of every state reachable from the root-only initial state.
pub fn has_unit_mass(profile: &Profile) -> bool {
    dyadic_mass(profile) == DyadicRational::one()
}

/// A vertex identified by its root path as a word over {0,1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathWord {
    bits: Vec<u8>,
}

impl PathWord {
    pub fn root() -> Self {
        PathWord { bits: Vec::new() }
    }

    pub fn depth(&self) -> u32 {
        self.bits.len() as u32
    }

    pub fn child(&self, bit: u8) -> Self {
        debug_assert!(bit <= 1);
        let mut bits = self.bits.clone();
        bits.push(bit);
        PathWord { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// True when `self` is a strict ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &PathWord) -> bool {
        self.bits.len() < other.bits.len() && other.bits[..self.bits.len()] == self.bits[..]
    }
}

impl fmt::Display for PathWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// RNG provenance of one run: base seed plus the stream index, so
/// replicate j of a battery is reproducible in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(seed: u64) -> Self {
        SeedRecord { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        SeedRecord { seed, stream }
    }
}

/// One split event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub depth: u32,
}

/// Time-stamped event log of one run plus profile snapshots at requested
/// times. Replaying `events` from the initial profile reproduces every
/// snapshot bit for bit.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub snapshots: Vec<(f64, Profile)>,
    pub seed: SeedRecord,
    /// Set when the run ended without doing anything useful (for example
    /// an unreachable stop rule).
    pub diagnostic: Option<String>,
}

impl Trajectory {
    /// Final profile implied by the event log.
    pub fn final_profile(&self) -> Profile {
        let mut p = Profile::initial();
        for e in &self.events {
            p.apply_split(e.depth);
        }
        p
    }

    /// Replay the event log and check that every stored snapshot is
    /// reproduced exactly.
    pub fn replay_matches_snapshots(&self) -> bool {
        let mut p = Profile::initial();
        let mut ei = 0;
        for (time, snap) in &self.snapshots {
            while ei < self.events.len() && self.events[ei].time <= *time {
                p.apply_split(self.events[ei].depth);
                ei += 1;
            }
            if p != *snap {
                return false;
            }
        }
        true
    }

    pub fn times_strictly_increasing(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time < w[1].time)
    }
}
