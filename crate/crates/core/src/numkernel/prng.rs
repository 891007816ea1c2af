//! xorshift64* generator, bit-exact so initialisation and synthetic
//! workloads reproduce across implementations.

use super::KernelError;

const MULTIPLIER: u64 = 2_685_821_657_736_338_717;
const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    /// The state must be non-zero; xorshift has an absorbing zero state.
    pub fn new(seed: u64) -> Result<Self, KernelError> {
        if seed == 0 {
            return Err(KernelError::ZeroSeed);
        }
        Ok(Self { state: seed })
    }

    /// Accepts any seed, including 0, by xoring in a fixed constant.
    pub fn from_any_seed(seed: u64) -> Self {
        let state = seed ^ SEED_MIX;
        Self {
            state: if state == 0 { SEED_MIX } else { state },
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(MULTIPLIER)
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
