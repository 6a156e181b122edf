//! Deterministic random number generation.
//!
//! All randomness flows from a single `u64` seed through ChaCha8, which
//! supports cheap independent substreams. Each randomized stage draws from
//! its own stream so that adding or reordering stages never perturbs the
//! draws of another stage, and parallel consumers can be handed disjoint
//! streams instead of sharing one generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream used for embedding initialization.
pub const STREAM_INIT: u64 = 1;
/// Substream used for the coarse quantizer's k-means.
pub const STREAM_COARSE_KMEANS: u64 = 2;
/// Base substream for product-quantizer training; sub-quantizer `s` uses
/// `STREAM_PQ_BASE + s`.
pub const STREAM_PQ_BASE: u64 = 100;
/// Substream used for synthetic cluster centers.
pub const STREAM_SYNTH_CENTERS: u64 = 3;
/// Substream used for synthetic point noise.
pub const STREAM_SYNTH_POINTS: u64 = 4;
/// Substream used by k-means invoked on embeddings for quality metrics.
pub const STREAM_METRIC_KMEANS: u64 = 5;

/// Root generator for `seed`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for an independent substream of `seed`.
///
/// Streams with different `stream` values never overlap, so stages seeded
/// this way are mutually independent while remaining reproducible.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}
