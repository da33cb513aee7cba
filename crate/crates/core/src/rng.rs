//! Keyed random streams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream whose key is
//! derived from `(master_seed, purpose, s, i, c, r)`. A task therefore owns its
//! randomness outright: results do not depend on execution order or thread count,
//! and changing one knob (say, sigma) leaves every unrelated stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for. The tag value is part of the key and must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Topology,
    ClassDelay,
    InstanceTau,
    InstanceDelay,
    Challenge,
    Noise,
}

impl Purpose {
    pub const ALL: [Purpose; 6] = [
        Purpose::Topology,
        Purpose::ClassDelay,
        Purpose::InstanceTau,
        Purpose::InstanceDelay,
        Purpose::Challenge,
        Purpose::Noise,
    ];

    pub fn tag(self) -> u64 {
        match self {
            Purpose::Topology => 1,
            Purpose::ClassDelay => 2,
            Purpose::InstanceTau => 3,
            Purpose::InstanceDelay => 4,
            Purpose::Challenge => 5,
            Purpose::Noise => 6,
        }
    }
}

/// Index tuple `(s, i, c, r)`; unused positions are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StreamIndex {
    pub class: u64,
    pub instance: u64,
    pub challenge: u64,
    pub repeat: u64,
}

impl StreamIndex {
    pub fn class(s: usize) -> Self {
        StreamIndex {
            class: s as u64,
            ..Default::default()
        }
    }

    pub fn instance(s: usize, i: usize) -> Self {
        StreamIndex {
            class: s as u64,
            instance: i as u64,
            ..Default::default()
        }
    }

    pub fn crp(s: usize, i: usize, c: usize, r: usize) -> Self {
        StreamIndex {
            class: s as u64,
            instance: i as u64,
            challenge: c as u64,
            repeat: r as u64,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit ChaCha key for a stream. Each key word is absorbed through SplitMix64,
/// so nearby index tuples give unrelated keys.
pub fn stream_key(master_seed: u64, purpose: Purpose, idx: StreamIndex) -> [u8; 32] {
    let words = [
        master_seed,
        purpose.tag(),
        idx.class,
        idx.instance,
        idx.challenge,
        idx.repeat,
    ];
    let mut state = 0u64;
    for w in words {
        let mut absorbed = state ^ w;
        state = splitmix64(&mut absorbed);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

pub fn stream(master_seed: u64, purpose: Purpose, idx: StreamIndex) -> Stream {
    ChaCha8Rng::from_seed(stream_key(master_seed, purpose, idx))
}
