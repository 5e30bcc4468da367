//! Deterministic randomness with a frozen byte-level contract.
//!
//! Every seeded computation in this crate flows through these helpers so
//! that identical seeds reproduce identical outputs across platforms and
//! dependency upgrades. The contract is pinned at the byte level:
//!
//! * seeds and labels hash with 64-bit FNV-1a, parts separated by a `0xff`
//!   fold step;
//! * generators are ChaCha8 keyed by the seed and three successors in
//!   little-endian lanes;
//! * bounded integers come from rejection sampling on `next_u64`;
//! * floats take the top 53 bits of a `u64`, giving uniforms in `[0, 1)`;
//! * shuffles are Fisher-Yates swapping from the back;
//! * normal deviates use the Box-Muller transform, one deviate per draw
//!   pair.
//!
//! Regression tests pin first outputs for fixed seeds; any change to these
//! routines is a breaking change to stored seeds.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const FNV_OFFSET_BASIS: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// 64-bit FNV-1a over the concatenation of `parts`, folding a `0xff`
/// separator between consecutive parts so that part boundaries matter.
///
/// A single part hashes identically to plain FNV-1a, which keeps the
/// published FNV test vectors valid.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for (index, part) in parts.iter().enumerate() {
        if index > 0 {
            hash ^= 0xff;
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        for &byte in *part {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

/// Child seed derived from a parent seed and a textual label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    stable_hash(&[&seed.to_le_bytes(), label.as_bytes()])
}

/// ChaCha8 generator keyed by `seed`, `seed + 1`, `seed + 2`, `seed + 3` in
/// little-endian 64-bit lanes.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (lane, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&seed.wrapping_add(lane as u64).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Generator for a labelled sub-stream of a parent seed.
pub fn rng_for_label(seed: u64, label: &str) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, label))
}

/// Uniform integer in `[0, bound)` by rejection sampling.
///
/// Panics if `bound` is zero.
pub fn bounded_u64(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    assert!(bound > 0, "bound must be positive");
    // rem = 2^64 mod bound; values at or above 2^64 - rem are rejected so
    // the remainder map is exactly uniform.
    let rem = ((u64::MAX % bound) + 1) % bound;
    loop {
        let x = rng.next_u64();
        if rem == 0 || x <= u64::MAX - rem {
            return x % bound;
        }
    }
}

/// Uniform `f64` in `[0, 1)` from the top 53 bits of one `u64` draw.
pub fn uniform_f64(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// In-place Fisher-Yates shuffle, swapping from the back of the slice.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = bounded_u64(rng, (i + 1) as u64) as usize;
        items.swap(i, j);
    }
}

/// First `k` positions of a Fisher-Yates pass over `0..n`, giving a uniform
/// sample of `k` distinct indices in draw order.
///
/// Panics if `k > n`.
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n} indices");
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + bounded_u64(rng, (n - i) as u64) as usize;
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// Standard normal deviate via the Box-Muller transform.
///
/// Consumes exactly two uniform draws and keeps only the cosine branch, so
/// the stream position never depends on caller state. Zero first uniforms
/// are redrawn to keep the logarithm finite.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = loop {
        let u = uniform_f64(rng);
        if u > 0.0 {
            break u;
        }
    };
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Index sampled from a probability vector by inverse CDF on one uniform.
///
/// Assumes the vector sums to one; accumulated rounding that leaves the
/// final cumulative sum slightly below the draw resolves to the last index.
pub fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    assert!(!probs.is_empty(), "cannot sample from an empty vector");
    let u = uniform_f64(rng);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn stable_hash_matches_published_fnv1a_vectors() {
        assert_eq!(stable_hash(&[]), 0xcbf29ce484222325);
        assert_eq!(stable_hash(&[b"a"]), 0xaf63dc4c8601ec8c);
        assert_eq!(stable_hash(&[b"foobar"]), 0x85944171f73967e8);
    }

    #[test]
    fn stable_hash_distinguishes_part_boundaries() {
        assert_ne!(stable_hash(&[b"ab", b"c"]), stable_hash(&[b"a", b"bc"]));
        assert_ne!(stable_hash(&[b"a"]), stable_hash(&[b"a", b""]));
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        let a = derive_seed(42, "pool");
        let b = derive_seed(42, "world");
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(42, "pool"));
    }

    #[test]
    fn same_seed_reproduces_the_stream() {
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(7);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(8);
        let differs = (0..16).any(|_| a.next_u64() != b.next_u64());
        assert!(differs);
    }

    #[test]
    fn first_outputs_are_pinned_for_seed_42() {
        let mut rng = rng_from_seed(42);
        let first: Vec<u64> = (0..4).map(|_| rng.next_u64()).collect();
        assert_eq!(
            first,
            vec![
                0xb6e6e36089a6d87e,
                0x6a8f83b2d1e0ca64,
                0x86f9e9480369c0e0,
                0x8f8b40a370ab3378,
            ]
        );
    }

    #[test]
    fn bounded_draws_and_shuffle_are_pinned_for_seed_42() {
        let mut rng = rng_from_seed(42);
        let draws: Vec<u64> = (0..5).map(|_| bounded_u64(&mut rng, 10)).collect();
        assert_eq!(draws, vec![0, 8, 2, 8, 0]);

        let mut rng = rng_from_seed(42);
        let mut items: Vec<u32> = (0..8).collect();
        shuffle(&mut rng, &mut items);
        assert_eq!(items, vec![7, 4, 1, 2, 3, 0, 5, 6]);

        let mut rng = rng_from_seed(42);
        assert_eq!(sample_indices(&mut rng, 10, 4), vec![0, 4, 2, 1]);
    }

    #[test]
    fn uniform_and_normal_are_pinned_for_seed_42() {
        let mut rng = rng_from_seed(42);
        let u = uniform_f64(&mut rng);
        assert!((u - 0.7144605742156743).abs() < 1e-15);
        let mut rng = rng_from_seed(42);
        let z = standard_normal(&mut rng);
        assert!((z - (-0.7091000795499546)).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn prop_bounded_u64_stays_in_range(seed in any::<u64>(), bound in 1u64..10_000) {
            let mut rng = rng_from_seed(seed);
            for _ in 0..32 {
                prop_assert!(bounded_u64(&mut rng, bound) < bound);
            }
        }

        #[test]
        fn prop_uniform_f64_stays_in_unit_interval(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            for _ in 0..64 {
                let u = uniform_f64(&mut rng);
                prop_assert!((0.0..1.0).contains(&u));
            }
        }

        #[test]
        fn prop_shuffle_is_a_permutation(seed in any::<u64>(), n in 0usize..64) {
            let mut rng = rng_from_seed(seed);
            let mut items: Vec<usize> = (0..n).collect();
            shuffle(&mut rng, &mut items);
            let mut sorted = items.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn prop_sample_indices_are_distinct_and_in_range(
            seed in any::<u64>(),
            n in 1usize..64,
            frac in 0.0f64..=1.0,
        ) {
            let k = ((n as f64) * frac) as usize;
            let mut rng = rng_from_seed(seed);
            let sample = sample_indices(&mut rng, n, k);
            prop_assert_eq!(sample.len(), k);
            let mut sorted = sample.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
            prop_assert!(sample.iter().all(|&i| i < n));
        }

        #[test]
        fn prop_categorical_respects_support(seed in any::<u64>()) {
            let probs = [0.0, 0.35, 0.0, 0.65, 0.0];
            let mut rng = rng_from_seed(seed);
            for _ in 0..64 {
                let idx = sample_categorical(&mut rng, &probs);
                prop_assert!(idx == 1 || idx == 3);
            }
        }
    }
}
