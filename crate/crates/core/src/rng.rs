//! Counter-based seeding: every path draws from its own generator keyed by
//! `(master_seed, stream, index)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in stream `stream` under `master`.
pub fn path_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn path_rng(master: u64, stream: u64, index: u64) -> PathRng {
    PathRng::seed_from_u64(path_seed(master, stream, index))
}

/// Stream tags used across the crate.
pub mod stream {
    pub const PRM: u64 = 1;
    pub const STABLE: u64 = 2;
    pub const SIGNAL: u64 = 3;
    pub const OBSERVATION: u64 = 4;
    pub const PARTICLES: u64 = 5;
    pub const RESAMPLE: u64 = 6;
    pub const INITIAL: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        let a = path_seed(7, stream::PRM, 0);
        assert_eq!(a, path_seed(7, stream::PRM, 0));
        assert_ne!(a, path_seed(7, stream::PRM, 1));
        assert_ne!(a, path_seed(8, stream::PRM, 0));
        assert_ne!(a, path_seed(7, stream::STABLE, 0));
        let x: f64 = path_rng(1, 2, 3).gen();
        let y: f64 = path_rng(1, 2, 3).gen();
        assert_eq!(x, y);
    }
}
