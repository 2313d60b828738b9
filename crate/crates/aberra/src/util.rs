//! Small numeric helpers shared across modules: stable hashing, counter-based
//! random draws, and compensated summation.

/// SplitMix64 step. Stateless: returns the mixed value for a given state.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream seed from a base seed and two lane indices.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ b)
}

/// Maps 64 random bits to a uniform double in (0, 1].
pub(crate) fn unit_open_closed(bits: u64) -> f64 {
    (((bits >> 11) + 1) as f64) / (1u64 << 53) as f64
}

/// Standard-normal draw keyed by (seed, index); Box-Muller on two
/// SplitMix64 streams so any pixel's noise is independent of evaluation order.
pub(crate) fn gauss_at(seed: u64, index: u64) -> f64 {
    let u1 = unit_open_closed(splitmix64(mix_seed(seed, index, 0)));
    let u2 = unit_open_closed(splitmix64(mix_seed(seed, index, 1)));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// FNV-1a 64-bit hash. Used where hashes must be stable across runs and
/// platforms (std's default hasher is randomized).
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Neumaier compensated summation; order-deterministic and accurate for the
/// long reductions used in spot statistics and metric aggregation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums a slice with compensation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_is_deterministic_per_index() {
        let a = gauss_at(42, 7);
        let b = gauss_at(42, 7);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(gauss_at(42, 8).to_bits(), a.to_bits());
        assert_ne!(gauss_at(43, 7).to_bits(), a.to_bits());
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let s = compensated_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn fnv_matches_reference_vector() {
        // Published FNV-1a test vector: "a" -> 0xaf63dc4c8601ec8c.
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
