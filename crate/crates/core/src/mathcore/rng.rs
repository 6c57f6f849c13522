use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one generator used everywhere: ChaCha8, seeded explicitly, identical
/// streams on every platform.
pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mix a base seed with stream tags (epoch, batch index, ...) into an
/// independent child seed. SplitMix64 finalizer over the concatenation.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(t);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}
