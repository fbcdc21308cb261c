//! Deterministic per-replica random streams.
//!
//! Every replica draws from its own ChaCha stream selected by
//! `(seed, group, replica)`, so results do not depend on how replicas are
//! scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;

const GROUP_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream for replica `replica` of sweep group `group` (e.g. an epsilon index).
pub fn replica_rng(seed: u64, group: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ group.wrapping_add(1).wrapping_mul(GROUP_MIX));
    rng.set_stream(replica);
    rng
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

#[inline]
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}
