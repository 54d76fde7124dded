//! Keyed, counter-based random streams.
//!
//! A stream is a ChaCha8 keystream: the 256-bit key is expanded from the
//! master seed with SplitMix64, and the 64-bit ChaCha stream id packs the
//! `(phase, date_index, task_id)` triple. Distinct triples therefore read
//! disjoint keystreams, and creating a stream is O(1).
//!
//! Normal variates use the trigonometric Box–Muller transform on pairs of
//! 53-bit uniforms, consumed in the order `(r cos θ, r sin θ)`. Results are
//! bitwise reproducible for a given key on a given platform's libm.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Algorithm phase a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Glp,
    IzCalc,
    CmcCalc,
    Pricing,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::Glp => 1,
            Phase::IzCalc => 2,
            Phase::CmcCalc => 3,
            Phase::Pricing => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Glp => "glp",
            Phase::IzCalc => "calc",
            Phase::CmcCalc => "calc",
            Phase::Pricing => "mc",
        }
    }
}

const TASK_BITS: u32 = 40;
const DATE_BITS: u32 = 16;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub phase: Phase,
    pub task_id: u64,
    pub date_index: u32,
}

impl StreamKey {
    pub fn new(master_seed: u64, phase: Phase, task_id: u64, date_index: u32) -> Self {
        Self { master_seed, phase, task_id, date_index }
    }

    fn stream_id(&self) -> u64 {
        assert!(self.task_id < 1 << TASK_BITS, "task id {} out of range", self.task_id);
        assert!(self.date_index < 1 << DATE_BITS, "date index {} out of range", self.date_index);
        (self.phase.tag() << (TASK_BITS + DATE_BITS)) | ((self.date_index as u64) << TASK_BITS) | self.task_id
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source of i.i.d. standard normal (and uniform) variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

/// Opens the stream identified by `key`.
pub fn make_stream(key: StreamKey) -> NormalStream {
    let mut sm = key.master_seed;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(key.stream_id());
    NormalStream { rng, spare: None }
}

impl NormalStream {
    /// Uniform on `(0, 1]`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_normal();
        }
    }
}
