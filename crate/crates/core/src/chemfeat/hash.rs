//! Stable 64-bit mixing used for atom invariants. Unlike `std::hash`, the
//! output is fixed across platforms and toolchain versions.

const SEED: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(SEED);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a.rotate_left(17) ^ splitmix(b))
}

pub fn hash_seq(values: &[u64]) -> u64 {
    values
        .iter()
        .fold(splitmix(values.len() as u64), |h, &v| mix(h, v))
}
