//! Random streams for replicated runs.
//!
//! Every replication owns a ChaCha8 stream selected by `(master_seed,
//! replication)`. ChaCha is counter based, so streams never overlap and a
//! replication's draws do not depend on how replications are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for replication `replication` under `master_seed`.
pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}

/// Uniform index in `0..n` by the multiply-high mapping of a 64-bit draw.
///
/// No rejection loop; the bias is at most `n / 2^64`.
#[inline]
pub fn sample_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}
