use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reproducible random stream identified by `(seed, stream)`.
///
/// Backed by ChaCha8, a counter-based generator, so distinct stream ids give
/// independent sequences and identical ids replay identical draws.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derive an independent source for a sub-task. The child depends only on
    /// this source's identity and `tag`, never on how many draws were made.
    pub fn split(&self, tag: u64) -> RandomSource {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ self.stream.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ tag;
        RandomSource::new(mixed, tag.wrapping_add(self.stream << 20))
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
