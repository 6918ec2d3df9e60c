//! Deterministic seed derivation.

/// Namespaces for derived seeds, so training and evaluation streams never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedDomain {
    TrainEpisode = 1,
    EvalTrial = 2,
    Agent = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `(base, domain, index)`.
pub fn derive_seed(base: u64, domain: SeedDomain, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ domain as u64) ^ index)
}
