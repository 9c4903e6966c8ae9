//! Counter-based uniforms for replayable sampling.
//!
//! `counter_uniform` hashes a key tuple with a splitmix64-style mixer and
//! maps the top 53 bits to `[0, 1)`. The same key always yields the same
//! uniform, so every Monte-Carlo run is reproducible from its seed.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a sequence of words into one 64-bit value.
pub fn mix_key(words: &[u64]) -> u64 {
    let mut acc = 0x243f_6a88_85a3_08d3u64;
    for &w in words {
        acc = splitmix64(acc ^ w);
    }
    acc
}

/// Deterministic uniform in `[0, 1)` keyed on the given words.
pub fn counter_uniform(words: &[u64]) -> f64 {
    (mix_key(words) >> 11) as f64 / (1u64 << 53) as f64
}
