use crate::Vector;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator family used by every stochastic routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngAlgorithm {
    Xoshiro256PlusPlus,
}

impl RngAlgorithm {
    /// Identifier written into output metadata.
    pub const fn id(self) -> &'static str {
        match self {
            RngAlgorithm::Xoshiro256PlusPlus => "xoshiro256++",
        }
    }
}

/// Seeded, single-owner random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> RngAlgorithm {
        RngAlgorithm::Xoshiro256PlusPlus
    }

    /// `count` non-overlapping streams: stream `i` is the seeded generator
    /// advanced by `i` jumps of 2^128 draws.
    pub fn substreams(seed: u64, count: usize) -> alloc::vec::Vec<RngStream> {
        Self::substream_range(seed, 0, count)
    }

    /// Substreams `first..first + count` of [`RngStream::substreams`].
    pub fn substream_range(seed: u64, first: usize, count: usize) -> alloc::vec::Vec<RngStream> {
        let mut base = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..first {
            base.jump();
        }
        let mut out = alloc::vec::Vec::with_capacity(count);
        for _ in 0..count {
            out.push(RngStream {
                seed,
                rng: base.clone(),
            });
            base.jump();
        }
        out
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        use rand_core::RngCore;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `n` i.i.d. standard normal samples.
pub fn sample_standard_normal(stream: &mut RngStream, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| stream.standard_normal())
}
