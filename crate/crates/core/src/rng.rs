use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Deterministic, seedable, splittable random stream.
///
/// Backed by ChaCha12, whose output is identical across platforms for a given
/// seed and stream index. Sample generation is always sequential from one
/// stream, so every stochastic result is pinned by `(seed, split path)` alone;
/// model evaluation over the drawn samples may still run in parallel.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    /// Root stream for a seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(0);
        Self {
            seed,
            stream: 0,
            inner,
        }
    }

    /// Derive an independent child stream.
    ///
    /// Children of distinct `(parent stream, child)` pairs are distinct for the
    /// shallow split trees used here (one or two levels, small indices); the
    /// child starts at position zero of its own ChaCha stream.
    pub fn split(&self, child: u64) -> Self {
        let stream = self
            .stream
            .wrapping_mul(0x1_0001)
            .wrapping_add(child)
            .wrapping_add(1);
        let mut inner = ChaCha12Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Self {
            seed: self.seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
