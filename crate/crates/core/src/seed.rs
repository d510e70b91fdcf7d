//! Deterministic derivation of sub-seeds from a master seed.

/// Mixes `parts` into `master` with splitmix64 finalization, so every
/// (purpose, epoch, index) combination gets an independent, reproducible,
/// platform-stable stream seed.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    for &p in parts {
        state = state
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD134_2543_DE82_EF95));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}
