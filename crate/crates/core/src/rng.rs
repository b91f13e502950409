//! Counter-based, splittable random streams.
//!
//! A [`RandomSource`] is just a 64-bit master seed. Each path (or quadrature
//! node, or grid node) asks for its own stream by integer id; the stream is a
//! ChaCha8 keystream keyed by the master seed with the id as the stream
//! nonce, so any stream can be regenerated in isolation and in any order.

use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Identifier recorded in run metadata. Bump on any change to how streams or
/// normals are derived.
pub const RNG_ALGORITHM: &str = "chacha8-stream+ziggurat-normal/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub master_seed: u64,
}

impl RandomSource {
    pub fn new(master_seed: u64) -> Self {
        RandomSource { master_seed }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Derive an independent child source, e.g. one per time step.
    pub fn split(&self, tag: u64) -> RandomSource {
        RandomSource {
            master_seed: splitmix64(self.master_seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    pub fn stream(&self, stream_id: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(stream_id);
        Stream { rng }
    }
}

/// One deterministic stream of standard normals.
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn normal_vector<const D: usize>(&mut self) -> SVector<f64, D> {
        SVector::from_fn(|_, _| self.normal())
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Brownian increments for one path, optionally mirrored for antithetic
/// pairs.
pub struct IncrementStream {
    stream: Stream,
    sign: f64,
}

impl IncrementStream {
    pub fn new(stream: Stream, mirrored: bool) -> Self {
        IncrementStream {
            stream,
            sign: if mirrored { -1.0 } else { 1.0 },
        }
    }

    /// A `N(0, dt I)` increment.
    #[inline]
    pub fn next<const M: usize>(&mut self, sqrt_dt: f64) -> SVector<f64, M> {
        let z: SVector<f64, M> = self.stream.normal_vector();
        z * (self.sign * sqrt_dt)
    }
}

/// Stream id and mirroring flag for path `index` out of a block starting at
/// `offset`. With antithetic sampling consecutive paths share a stream.
#[inline]
pub(crate) fn path_stream(offset: u64, index: usize, antithetic: bool) -> (u64, bool) {
    if antithetic {
        (offset + (index / 2) as u64, index % 2 == 1)
    } else {
        (offset + index as u64, false)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_in_any_order() {
        let src = RandomSource::new(42);
        let a: Vec<f64> = {
            let mut s = src.stream(7);
            (0..16).map(|_| s.normal()).collect()
        };
        let _ = src.stream(3).normal();
        let b: Vec<f64> = {
            let mut s = src.stream(7);
            (0..16).map(|_| s.normal()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_differ() {
        let src = RandomSource::new(42);
        assert_ne!(src.stream(0).normal(), src.stream(1).normal());
        assert_ne!(src.split(1).master_seed, src.split(2).master_seed);
    }

    #[test]
    fn antithetic_pairs_share_a_stream() {
        assert_eq!(path_stream(10, 4, true), (12, false));
        assert_eq!(path_stream(10, 5, true), (12, true));
        assert_eq!(path_stream(10, 5, false), (15, false));
    }
}
