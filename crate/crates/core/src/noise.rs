//! Seeded random streams and discretised space-time white noise.
//!
//! Every stochastic draw in the crate comes from a stream keyed by
//! `(master seed, tag, outer index, member index, time index)`. A stream is
//! owned by exactly one logical task, so results do not depend on execution
//! order or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Component that owns a family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    TruthModel = 1,
    Observation = 2,
    EnsembleModel = 3,
    EnsemblePerturbation = 4,
    Proposal = 5,
    Acceptance = 6,
    DualInit = 7,
    TruthCoefficients = 8,
    Auxiliary = 9,
}

/// Key of one derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub tag: StreamTag,
    pub outer: u64,
    pub member: u64,
    pub time: u64,
}

impl StreamKey {
    pub fn new(seed: u64, tag: StreamTag) -> Self {
        Self {
            seed,
            tag,
            outer: 0,
            member: 0,
            time: 0,
        }
    }

    pub fn outer(mut self, outer: usize) -> Self {
        self.outer = outer as u64;
        self
    }

    pub fn member(mut self, member: usize) -> Self {
        self.member = member as u64;
        self
    }

    pub fn time(mut self, time: usize) -> Self {
        self.time = time as u64;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = splitmix64(self.seed);
        for word in [self.tag as u64, self.outer, self.member, self.time] {
            h = splitmix64(h ^ word);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fills `out` with independent standard-normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// One time step of discretised space-time white noise on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub values: Vec<f64>,
    pub dt: f64,
    pub dx: f64,
    pub sigma: f64,
}

impl NoiseIncrement {
    pub fn zeros(n: usize, dt: f64, dx: f64) -> Self {
        Self {
            values: vec![0.0; n],
            dt,
            dx,
            sigma: 0.0,
        }
    }

    /// Per-entry standard deviation `sigma * sqrt(dt / dx)`.
    pub fn std(&self) -> f64 {
        increment_std(self.sigma, self.dt, self.dx)
    }
}

pub(crate) fn increment_std(sigma: f64, dt: f64, dx: f64) -> f64 {
    sigma * (dt / dx).sqrt()
}

/// `n` independent `N(0, sigma^2 dt / dx)` draws.
pub fn spacetime_noise_increment<R: Rng + ?Sized>(
    n: usize,
    sigma: f64,
    dt: f64,
    dx: f64,
    rng: &mut R,
) -> NoiseIncrement {
    let scale = increment_std(sigma, dt, dx);
    let mut values = vec![0.0; n];
    if scale != 0.0 {
        fill_standard_normal(rng, &mut values);
        for v in &mut values {
            *v *= scale;
        }
    }
    NoiseIncrement {
        values,
        dt,
        dx,
        sigma,
    }
}
