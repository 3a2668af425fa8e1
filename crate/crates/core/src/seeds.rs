//! Seed derivation. Every random stream in a run is a pure function of the
//! global seed, so runs and resumed runs replay exactly.

/// Offsets added to the global seed for each component.
pub const DATA_OFFSET: u64 = 0;
pub const SVFP_INIT_OFFSET: u64 = 1_000;
pub const BASELINE_INIT_OFFSET: u64 = 2_000;
pub const TRAIN_OFFSET: u64 = 3_000;
pub const FORECAST_OFFSET: u64 = 4_000;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of stream `stream` under `base`.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ stream) ^ index)
}
