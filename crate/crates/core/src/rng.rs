//! Reproducible, splittable random streams.
//!
//! Every random quantity in the crate is drawn from an [`RngStream`] identified
//! by `(seed, stream_id)`. The stream is a ChaCha8 keystream keyed by the seed,
//! with the stream id selecting an independent 64-bit nonce, so replicas can be
//! generated in any order on any number of threads and still reproduce.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bits reserved for the replica index inside a stream id; the remaining high
/// bits name the estimator ("lane") that owns the stream.
const LANE_SHIFT: u32 = 40;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream for replica `index` of the estimator identified by `lane`.
    pub fn for_replica(seed: u64, lane: Lane, index: u64) -> Self {
        debug_assert!(index < (1 << LANE_SHIFT));
        Self::new(seed, ((lane as u64) << LANE_SHIFT) | index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.open01() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Estimator namespaces. Distinct lanes never share a stream, which keeps
/// e.g. the two independent renewal samples of the TV estimator independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Coupling = 1,
    RenewalDelayed = 2,
    RenewalUndelayed = 3,
    Step1 = 4,
    Step2 = 5,
    Supermartingale = 6,
    GeometricSum = 7,
    Split = 8,
    RenewalMeasure = 9,
    Auxiliary = 10,
}
