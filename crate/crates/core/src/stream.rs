//! Seeded random streams.
//!
//! Every run starts from a single master seed. Child streams are derived by
//! hashing the parent seed together with an integer key, so any component can
//! obtain an independent, reproducible stream without sharing mutable state.
//!
//! Splitting rule used throughout the crate:
//!
//! - `master.child(r)` is the stream of repeat `r`.
//! - `stream.base_phase()` / `stream.abstract_phase()` separate the base and
//!   abstract interaction phases of a run.
//! - `phase.pull(t, a)` is the generator for the reward of arm `a` at step `t`.
//!   Two learners that pull the same arm at the same step from the same phase
//!   stream observe the same reward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandit::ArmId;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const BASE_PHASE: u64 = 0xBA5E;
const ABSTRACT_PHASE: u64 = 0xAB57;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream {
    seed: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, key: u64) -> Stream {
        Stream {
            seed: splitmix64(self.seed ^ splitmix64(key.wrapping_mul(GOLDEN).wrapping_add(1))),
        }
    }

    pub fn base_phase(&self) -> Stream {
        self.child(BASE_PHASE)
    }

    pub fn abstract_phase(&self) -> Stream {
        self.child(ABSTRACT_PHASE)
    }

    /// Generator for the reward of `arm` at time step `step`.
    pub fn pull(&self, step: u64, arm: ArmId) -> StreamRng {
        self.child(step).child(arm.index() as u64).rng()
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}
