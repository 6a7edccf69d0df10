//! Seed derivation shared by the noise streams and the Monte Carlo harness.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a child seed of `parent`.
///
/// The result depends only on the inputs, never on call order elsewhere, so
/// independent runs can derive their seeds without coordination.
pub fn derive(parent: u64, words: &[u64]) -> u64 {
    let mut acc = mix64(parent.wrapping_add(GOLDEN));
    for (n, &w) in words.iter().enumerate() {
        acc = mix64(acc ^ mix64(w.wrapping_add(GOLDEN.wrapping_mul(n as u64 + 2))));
    }
    acc
}

/// Seed of Monte Carlo run `run_index` under `master`.
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    derive(master, &[0x72_75_6e, run_index])
}
