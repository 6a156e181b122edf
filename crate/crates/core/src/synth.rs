//! Synthetic clustered datasets for benchmarks and tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DataMatrix, LabeledDataset};
use crate::rng::{stream_rng, STREAM_SYNTH_CENTERS, STREAM_SYNTH_POINTS};

/// Draws `n` points in `d` dimensions around `clusters` Gaussian blobs and
/// labels each point with its blob id.
///
/// Cluster centers are uniform in a hypercube of side `10 * spread` (side 10
/// when `spread` is zero, so centers stay distinct and the points — which
/// then carry no noise — sit exactly on them). Points add independent
/// `N(0, spread^2)` noise per axis. Cluster sizes are `n / clusters`, with
/// the remainder absorbed by the last cluster. Generation is sequential and
/// fully determined by `seed`.
pub fn clustered_dataset(
    n: usize,
    d: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
) -> LabeledDataset {
    assert!(n >= 2, "need at least 2 points, got {n}");
    assert!(d >= 1, "need at least 1 dimension");
    assert!(
        (1..=n).contains(&clusters),
        "cluster count {clusters} must lie in 1..={n}"
    );
    assert!(spread >= 0.0 && spread.is_finite(), "bad spread {spread}");

    let side = if spread > 0.0 { 10.0 * spread } else { 10.0 };
    let mut center_rng = stream_rng(seed, STREAM_SYNTH_CENTERS);
    let centers: Vec<f64> = (0..clusters * d)
        .map(|_| (center_rng.random::<f64>() - 0.5) * side)
        .collect();

    let mut point_rng = stream_rng(seed, STREAM_SYNTH_POINTS);
    let noise = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).expect("finite spread");
    let per_cluster = n / clusters;

    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..clusters {
        let count = if c + 1 == clusters {
            n - per_cluster * c
        } else {
            per_cluster
        };
        let center = &centers[c * d..(c + 1) * d];
        for _ in 0..count {
            for &axis in center.iter() {
                let wobble = if spread > 0.0 {
                    noise.sample(&mut point_rng)
                } else {
                    0.0
                };
                values.push((axis + wobble) as f32);
            }
            labels.push(c as i32);
        }
    }

    let data = DataMatrix::new(n, d, values).expect("generated data is finite");
    LabeledDataset::new(data, Some(labels)).expect("one label per row")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels_line_up() {
        let ds = clustered_dataset(103, 7, 4, 1.0, 5);
        assert_eq!(ds.data.n(), 103);
        assert_eq!(ds.data.d(), 7);
        let labels = ds.labels.unwrap();
        assert_eq!(labels.len(), 103);
        // 25 + 25 + 25 + 28: the last cluster absorbs the remainder.
        assert_eq!(labels.iter().filter(|&&l| l == 3).count(), 28);
    }

    #[test]
    fn zero_spread_gives_one_distinct_point_per_cluster() {
        let ds = clustered_dataset(4, 3, 4, 0.0, 9);
        let labels = ds.labels.unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert_ne!(ds.data.row(a), ds.data.row(b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = clustered_dataset(50, 5, 3, 2.0, 1234);
        let b = clustered_dataset(50, 5, 3, 2.0, 1234);
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn different_seeds_differ() {
        let a = clustered_dataset(50, 5, 3, 2.0, 1);
        let b = clustered_dataset(50, 5, 3, 2.0, 2);
        assert_ne!(a.data, b.data);
    }
}
