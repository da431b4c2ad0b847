//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream keyed by
//! `(seed, purpose, worker, round)`. The key is hashed with SplitMix64 into a
//! ChaCha8 seed, so the values a worker sees in a round do not depend on
//! which thread evaluated it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ProblemBuild = 1,
    GradientNoise = 2,
    LabelFlipNoise = 3,
    Attack = 4,
    TrialSamples = 5,
    TrialProbes = 6,
    ByzantineSchedule = 7,
    Participation = 8,
    Zeta = 9,
    InitialPoint = 10,
    Audit = 11,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub worker: u64,
    pub round: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, worker: usize, round: u64) -> Self {
        Self {
            seed,
            purpose,
            worker: worker as u64,
            round,
        }
    }

    /// A 64-bit digest of the key, usable as a seed for nested streams.
    pub fn rng_seed(&self) -> u64 {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ (self.purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        h = splitmix64(h ^ self.worker.wrapping_mul(0x9FB2_1C65_1E98_DF25));
        splitmix64(h ^ self.round.wrapping_mul(0xD6E8_FEB8_6659_FD93))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let h = self.rng_seed();
        let mut seed = [0u8; 32];
        let mut s = h;
        for chunk in seed.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `d` i.i.d. `N(0, std^2)` values.
pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R, d: usize, std: f64) -> Vec<f64> {
    (0..d).map(|_| std * standard_normal(rng)).collect()
}
