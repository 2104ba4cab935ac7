//! Keyed random substreams.
//!
//! Every stochastic draw in the pipeline comes from a ChaCha8 stream selected
//! by `(base seed, purpose, index)`. ChaCha is counter based, so a stream is a
//! pure function of its key: cascade `n` of feature vector `m` sees the same
//! arc and symptom uniforms whatever order the work is scheduled in, and
//! whatever parameter values are being simulated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ArcFiring = 1,
    Symptom = 2,
    Split = 3,
    Training = 4,
    Bootstrap = 5,
    GraphGen = 6,
    Market = 7,
    Replicate = 8,
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a single 64-bit key.
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(mix64(base ^ 0x9e37_79b9_7f4a_7c15), |h, &w| {
        mix64(h.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix64(w))
    })
}

/// Opens the substream for `(base, purpose, index)`.
pub fn substream(base: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, &[purpose as u64]));
    rng.set_stream(index);
    rng
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Index of cascade `n` within feature vector `m`, used as a stream index.
#[inline]
pub fn cascade_index(m: usize, n: usize) -> u64 {
    ((m as u64) << 32) | n as u64
}
