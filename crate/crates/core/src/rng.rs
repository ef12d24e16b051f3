//! Counter-based, splittable 64-bit generator.
//!
//! Output `i` of a stream with key `K` is `mix(K + i * 0x9E3779B97F4A7C15)`,
//! where `mix` is the SplitMix64 finalizer (Steele, Lea and Flood, 2014):
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! All arithmetic is wrapping `u64`, so streams are bit-identical on every
//! platform. `fork(id)` derives an independent key `mix(K ^ mix(id + C))`,
//! which lets each experiment component own its stream without coordination.
//! Floats in `[0, 1)` take the top 53 bits of the output.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FORK_SALT: u64 = 0xD1B5_4A32_D192_ED03;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix(seed ^ FORK_SALT),
            counter: 0,
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(stream.wrapping_add(FORK_SALT))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    pub fn next_f64_open_closed(&mut self) -> f64 {
        1.0 - self.next_f64()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
