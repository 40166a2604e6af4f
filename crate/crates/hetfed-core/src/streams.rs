//! Deterministic random-stream derivation.
//!
//! Every random decision in the toolkit draws from a ChaCha12 generator keyed
//! by the experiment seed plus a short list of purpose tags, e.g.
//! `(seed, [LOCAL_TRAIN, round, client])`. Two consequences:
//!
//! * a single seed pins an entire experiment, and
//! * independent components (clients in a round, classes in a partition) own
//!   disjoint streams, so results do not depend on execution order or on how
//!   work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Well-known first tags. The remaining tag words identify the instance
/// (round, client id, cluster index, class index) as documented per use.
pub mod tag {
    /// Model initialization; second word = model index (global = 0, IFCA
    /// cluster j = j).
    pub const MODEL_INIT: u64 = 0x01;
    /// Per-round client sampling; second word = round index.
    pub const CLIENT_SAMPLE: u64 = 0x02;
    /// Local-training batch order; words = round index, client id.
    pub const LOCAL_TRAIN: u64 = 0x03;
    /// Per-client train/test split; word = client id.
    pub const SPLIT: u64 = 0x04;
    /// Fine-tuning batch order; word = client id.
    pub const FINETUNE: u64 = 0x05;
    /// Partition generation; words = method id, then method-specific.
    pub const PARTITION: u64 = 0x06;
    /// Synthetic dataset generation.
    pub const SYNTH: u64 = 0x07;
    /// Subsampling for measures that need equal client sample counts; word =
    /// client id.
    pub const SUBSAMPLE: u64 = 0x08;
}

/// SplitMix64 finalizer; also used for deterministic non-stream scrambling.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Absorbs the seed and tags into a 256-bit ChaCha key.
pub fn derive_key(seed: u64, tags: &[u64]) -> [u8; 32] {
    let mut h = mix64(seed);
    for &t in tags {
        h = mix64(h ^ mix64(t));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(h ^ (i as u64 + 1)).to_le_bytes());
    }
    key
}

/// The stream for `(seed, tags)`. Streams with different tag lists are
/// statistically independent.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_key(seed, tags))
}
