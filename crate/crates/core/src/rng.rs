//! Deterministic random number streams for the simulation harness.
//!
//! Every replication draws from its own ChaCha8 stream whose 256-bit seed is
//! derived from `(master seed, stream index)` with SplitMix64. Streams are
//! independent of scheduling, so replications can run on any number of
//! threads and still reproduce bit-identical results.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::num::normal_quantile;

/// Generator algorithm pinned for reproducibility.
pub const RNG_ALGORITHM: &str = "chacha8-splitmix64-streams";

fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
}

fn splitmix64_next(state: &mut u64) -> u64 {
    splitmix64(state);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64_next(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn uniform_open01<R: RngCore>(rng: &mut R) -> f64 {
    // 53 random bits, offset by half an ulp so 0 and 1 are excluded.
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw by inverse transform.
#[inline]
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    normal_quantile(uniform_open01(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream_rng(7, 3);
        let mut b = stream_rng(7, 3);
        let mut c = stream_rng(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn normal_draws_have_sane_moments() {
        let mut rng = stream_rng(42, 0);
        let n = 200_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let x = standard_normal(&mut rng);
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn uniform_stays_inside_open_interval() {
        let mut rng = stream_rng(1, 1);
        for _ in 0..10_000 {
            let u = uniform_open01(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
