//! SplitMix64, the fixed generator behind every randomized operation.
//!
//! Kept in-crate so datasets are reproducible from a seed in any language:
//!
//! * `next_u64`: `state += 0x9E3779B97F4A7C15`, then the standard
//!   SplitMix64 finalizer on the new state.
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `range(lo, hi)`: `lo + (hi - lo) * uniform`.
//! * `gaussian`: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` from two
//!   consecutive uniforms; the sine branch is discarded.
//! * `stream(seed, index)`: a generator seeded with
//!   `seed ^ mix(index + 1)`, where `mix` is the finalizer.
//!
//! Seed 1234567 produces 6457827717110365317, 3203168211198807973,
//! 9817491932198370423, ...

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for item `index` of a seeded batch.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::new(seed ^ mix(index.wrapping_add(1)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniformly distributed unit vector.
    pub fn unit_vector3(&mut self) -> [f64; 3] {
        loop {
            let v = [self.gaussian(), self.gaussian(), self.gaussian()];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-12 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }
}
