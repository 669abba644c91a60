//! Polynomial rolling hash over a fixed-size window.

/// Odd 64-bit multiplier for the polynomial.
const BASE: u64 = 0x0000_0100_0000_01b3;
/// Mixing constant used when folding the state down to a bucket index.
const FOLD: u64 = 0x9e37_79b9_7f4a_7c15;

/// Rabin-Karp style hash of the last `window` bytes, arithmetic mod 2^64.
#[derive(Debug, Clone)]
pub struct RollingHash {
    window: usize,
    /// BASE^(window-1), the weight of the byte leaving the window.
    out_weight: u64,
    state: u64,
}

impl RollingHash {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must be non-empty");
        let out_weight = (1..window).fold(1u64, |acc, _| acc.wrapping_mul(BASE));
        Self {
            window,
            out_weight,
            state: 0,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Hash of a full window computed from scratch.
    pub fn full(bytes: &[u8]) -> u64 {
        bytes
            .iter()
            .fold(0u64, |h, &b| h.wrapping_mul(BASE).wrapping_add(u64::from(b)))
    }

    /// Resets the state to the hash of `bytes`, which must be one window long.
    pub fn reset(&mut self, bytes: &[u8]) {
        debug_assert_eq!(bytes.len(), self.window);
        self.state = Self::full(bytes);
    }

    /// Slides the window one byte: `leaving` drops out, `entering` comes in.
    #[inline]
    pub fn roll(&mut self, leaving: u8, entering: u8) {
        self.state = self
            .state
            .wrapping_sub(u64::from(leaving).wrapping_mul(self.out_weight))
            .wrapping_mul(BASE)
            .wrapping_add(u64::from(entering));
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.state
    }
}

/// Folds a hash into `bits` bits, taking the high bits of a multiplicative mix
/// since the low bits of the polynomial only see the low bits of each byte.
#[inline]
pub fn bucket(hash: u64, bits: u32) -> usize {
    (hash.wrapping_mul(FOLD) >> (64 - bits)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rolling_agrees_with_recomputation_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<u8> = (0..4096).map(|_| rng.gen()).collect();
        for window in [1usize, 16, 64, 255] {
            let mut h = RollingHash::new(window);
            h.reset(&data[..window]);
            for i in 0..data.len() - window {
                assert_eq!(h.value(), RollingHash::full(&data[i..i + window]), "pos {i}");
                h.roll(data[i], data[i + window]);
            }
        }
    }

    #[test]
    fn bucket_stays_in_range() {
        for bits in 16..=28 {
            for h in [0u64, 1, u64::MAX, 0xdead_beef] {
                assert!(bucket(h, bits) < 1 << bits);
            }
        }
    }
}
