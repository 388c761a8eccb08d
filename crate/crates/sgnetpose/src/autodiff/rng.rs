//! Deterministic PRNG used everywhere randomness is needed.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit
//! counter advanced by the golden-gamma constant, mixed through two
//! xor-shift-multiply rounds. It is platform independent, so an identical
//! seed yields an identical stream on every machine, which is what the
//! reproducibility contract of this crate rests on.

/// Deterministic random stream. `Clone` gives an independent copy that
/// continues from the same point.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a child stream from this generator's construction seed and
    /// a label. The child depends only on (seed, label) — not on how many
    /// draws the parent has made — so substreams keyed by stable labels
    /// (epoch index, sample hash) are order independent.
    pub fn fork(&self, label: u64) -> RngState {
        RngState::new(mix(self.seed ^ mix(label.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is negligible for the desk-scale n used here.
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller. One value per call; the cosine
    /// branch is recomputed rather than cached so the stream position is
    /// a simple function of the call count.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Stable 64-bit FNV-1a hash of a byte string; used to derive
/// order-independent per-sample streams from identity strings.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn fork_is_independent_of_parent_position() {
        let parent = RngState::new(7);
        let mut c1 = parent.fork(3);
        let mut parent2 = RngState::new(7);
        parent2.next_u64();
        let mut c2 = parent2.fork(3);
        assert_eq!(c1.next_u64(), c2.next_u64());
    }

    #[test]
    fn uniform_in_range() {
        let mut rng = RngState::new(1);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn normal_moments_roughly_standard() {
        let mut rng = RngState::new(9);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = rng.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
