//! Embedding quality measures: neighborhood preservation, label agreement
//! under a leave-one-out 1-NN rule, cluster/label accuracy, and rigid
//! alignment between two embeddings.
//!
//! All measures run in `f64` and are deterministic: parallel loops write
//! per-point results and every reduction is sequential.

use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Result, TsneError};
use crate::knn;
use crate::rng::{stream_rng, STREAM_METRIC_KMEANS};

/// Fraction of each point's `k` nearest neighbors in the original space that
/// remain among its `k` nearest in the embedding, averaged over points.
pub fn knn_preservation(data: &DataMatrix<f32>, coords: &[f32], k: usize) -> Result<f64> {
    let n = data.n();
    if coords.len() != 2 * n {
        return Err(TsneError::InvalidParameter(format!(
            "embedding has {} coordinates, expected {}",
            coords.len(),
            2 * n
        )));
    }
    let planar = DataMatrix::new(n, 2, coords.to_vec())?;
    let original = knn::knn_exact(data, k)?;
    let embedded = knn::knn_exact(&planar, k)?;
    Ok(knn::recall(&original, &embedded))
}

/// Leave-one-out 1-NN label accuracy in the embedding: each point votes its
/// nearest other point's label; ties on distance go to the lower index.
pub fn nn_label_agreement(coords: &[f32], labels: &[i32]) -> Result<f64> {
    let n = coords.len() / 2;
    if !coords.len().is_multiple_of(2) || labels.len() != n {
        return Err(TsneError::InvalidParameter(format!(
            "{} coordinates do not pair with {} labels",
            coords.len(),
            labels.len()
        )));
    }
    if n < 2 {
        return Err(TsneError::InvalidParameter(
            "leave-one-out needs at least 2 points".into(),
        ));
    }

    let hits: Vec<u8> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = (coords[2 * i] as f64, coords[2 * i + 1] as f64);
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dx = xi - coords[2 * j] as f64;
                let dy = yi - coords[2 * j + 1] as f64;
                let d2 = dx * dx + dy * dy;
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            u8::from(labels[best.1] == labels[i])
        })
        .collect();
    Ok(hits.iter().map(|&h| h as f64).sum::<f64>() / n as f64)
}

/// Clusters the embedding with k-means and scores the best cluster-to-label
/// assignment.
///
/// When the requested cluster count is at most 8 and matches the number of
/// distinct labels, all assignments are tried for an exact one-to-one
/// matching; otherwise each cluster votes its majority label (labels may
/// repeat across clusters).
pub fn kmeans_label_accuracy(
    coords: &[f32],
    labels: &[i32],
    clusters: usize,
    seed: u64,
) -> Result<f64> {
    let n = coords.len() / 2;
    if !coords.len().is_multiple_of(2) || labels.len() != n {
        return Err(TsneError::InvalidParameter(format!(
            "{} coordinates do not pair with {} labels",
            coords.len(),
            labels.len()
        )));
    }
    if clusters == 0 || clusters > n {
        return Err(TsneError::InvalidParameter(format!(
            "cannot form {clusters} clusters from {n} points"
        )));
    }

    // k-means++ still lands in poor optima on blob-plus-stragglers
    // geometries; restarts sharing one sequential stream keep the result
    // deterministic while making that rare.
    let mut rng = stream_rng(seed, STREAM_METRIC_KMEANS);
    let km = (0..8)
        .map(|_| knn::kmeans::train(coords, n, 2, clusters, &mut rng, 100))
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
        .expect("at least one restart");
    log::debug!("embedding k-means inertia {:.4}", km.inertia);

    let mut distinct: Vec<i32> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let l = distinct.len();
    let label_index = |lab: i32| distinct.binary_search(&lab).unwrap();

    // counts[c][j]: points of cluster c carrying the j-th distinct label.
    let mut counts = vec![vec![0usize; l]; clusters];
    for (i, &c) in km.assignments.iter().enumerate() {
        counts[c as usize][label_index(labels[i])] += 1;
    }

    let matched = if clusters == l && clusters <= 8 {
        best_permutation_score(&counts)
    } else {
        counts
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .sum()
    };
    Ok(matched as f64 / n as f64)
}

/// Maximum matched count over all one-to-one cluster/label assignments.
fn best_permutation_score(counts: &[Vec<usize>]) -> usize {
    fn go(counts: &[Vec<usize>], cluster: usize, used: &mut [bool], acc: usize, best: &mut usize) {
        if cluster == counts.len() {
            *best = (*best).max(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(counts, cluster + 1, used, acc + counts[cluster][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = 0;
    let mut used = vec![false; counts.len()];
    go(counts, 0, &mut used, 0, &mut best);
    best
}

/// Largest per-coordinate deviation between two planar embeddings after the
/// best rigid alignment (translation, rotation, optionally reflection) of
/// the second onto the first.
pub fn procrustes_max_deviation(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || !a.len().is_multiple_of(2) || a.is_empty() {
        return Err(TsneError::InvalidParameter(format!(
            "embeddings of {} and {} coordinates cannot be aligned",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() / 2;
    let center = |v: &[f32]| -> (Vec<f64>, [f64; 2]) {
        let mut mean = [0f64; 2];
        for (e, &c) in v.iter().enumerate() {
            mean[e % 2] += c as f64;
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        let centered = v
            .iter()
            .enumerate()
            .map(|(e, &c)| c as f64 - mean[e % 2])
            .collect();
        (centered, mean)
    };
    let (ca, _) = center(a);
    let (cb, _) = center(b);

    // Optimal rotation for fixed handedness comes from the cross/dot sums;
    // reflection is handled by flipping the second cloud's y and retrying.
    let deviation = |cb: &[f64]| -> f64 {
        let mut dot = 0f64;
        let mut cross = 0f64;
        for i in 0..n {
            let (ax, ay) = (ca[2 * i], ca[2 * i + 1]);
            let (bx, by) = (cb[2 * i], cb[2 * i + 1]);
            dot += ax * bx + ay * by;
            cross += ay * bx - ax * by;
        }
        let theta = cross.atan2(dot);
        let (s, c) = theta.sin_cos();
        let mut worst = 0f64;
        for i in 0..n {
            let (bx, by) = (cb[2 * i], cb[2 * i + 1]);
            let rx = c * bx - s * by;
            let ry = s * bx + c * by;
            worst = worst
                .max((rx - ca[2 * i]).abs())
                .max((ry - ca[2 * i + 1]).abs());
        }
        worst
    };

    let direct = deviation(&cb);
    let flipped: Vec<f64> = cb
        .iter()
        .enumerate()
        .map(|(e, &c)| if e % 2 == 1 { -c } else { c })
        .collect();
    Ok(direct.min(deviation(&flipped)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    /// Four tight, well-separated planar blobs with the given labels.
    fn blobs(per: usize, labels: [i32; 4], seed: u64) -> (Vec<f32>, Vec<i32>) {
        let centers = [(-10.0, -10.0), (10.0, -10.0), (-10.0, 10.0), (10.0, 10.0)];
        let mut rng = seeded_rng(seed);
        let mut coords = Vec::new();
        let mut labs = Vec::new();
        for (b, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per {
                coords.push(cx + rng.random_range(-0.5..0.5));
                coords.push(cy + rng.random_range(-0.5..0.5));
                labs.push(labels[b]);
            }
        }
        (coords, labs)
    }

    #[test]
    fn isometry_preserves_all_neighborhoods() {
        let (coords, _) = blobs(15, [0, 1, 2, 3], 11);
        let data = DataMatrix::new(60, 2, coords.clone()).unwrap();
        // Rotate by 90 degrees: (x, y) -> (-y, x). Distances are unchanged.
        let rotated: Vec<f32> = coords
            .chunks_exact(2)
            .flat_map(|p| [-p[1], p[0]])
            .collect();
        assert_eq!(knn_preservation(&data, &rotated, 10).unwrap(), 1.0);

        // A scrambled embedding preserves almost nothing.
        let mut rng = seeded_rng(3);
        let random: Vec<f32> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(knn_preservation(&data, &random, 10).unwrap() < 0.6);
    }

    #[test]
    fn separated_blobs_agree_on_labels() {
        let (coords, labels) = blobs(10, [0, 1, 2, 3], 21);
        assert_eq!(nn_label_agreement(&coords, &labels).unwrap(), 1.0);

        // One point labeled against its whole blob is always outvoted, and
        // it flips exactly one of its neighbors' votes at most.
        let mut bad = labels.clone();
        bad[0] = 9;
        let score = nn_label_agreement(&coords, &bad).unwrap();
        assert!((1.0 - 2.0 / 40.0..1.0).contains(&score));
    }

    #[test]
    fn cluster_accuracy_matches_permuted_labels() {
        // Labels are a nontrivial permutation of blob order: only the
        // exhaustive assignment finds the perfect matching.
        let (coords, labels) = blobs(12, [2, 0, 3, 1], 31);
        let acc = kmeans_label_accuracy(&coords, &labels, 4, 7).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn majority_vote_handles_mismatched_counts() {
        // Two distinct labels across four blobs: one-to-one matching is
        // impossible, so clusters vote. With four clusters every cluster is
        // label-pure; with three, k-means merges two differently-labeled
        // blobs and that cluster can only get half its points right.
        let (coords, labels) = blobs(12, [0, 1, 0, 1], 41);
        assert_eq!(kmeans_label_accuracy(&coords, &labels, 4, 7).unwrap(), 1.0);
        let merged = kmeans_label_accuracy(&coords, &labels, 3, 7).unwrap();
        assert!((0.7..1.0).contains(&merged), "accuracy {merged}");
    }

    #[test]
    fn rigid_motions_align_exactly() {
        let (coords, _) = blobs(8, [0, 1, 2, 3], 51);
        let (s, c) = 0.7f64.sin_cos();
        let moved: Vec<f32> = coords
            .chunks_exact(2)
            .flat_map(|p| {
                let (x, y) = (p[0] as f64, p[1] as f64);
                [(c * x - s * y + 25.0) as f32, (s * x + c * y - 4.0) as f32]
            })
            .collect();
        assert!(procrustes_max_deviation(&coords, &moved).unwrap() < 1e-4);

        // Reflection composed with rotation is also rigid.
        let mirrored: Vec<f32> = moved
            .chunks_exact(2)
            .flat_map(|p| [p[0], -p[1]])
            .collect();
        assert!(procrustes_max_deviation(&coords, &mirrored).unwrap() < 1e-4);

        // A genuine distortion does not align.
        let stretched: Vec<f32> = coords
            .chunks_exact(2)
            .flat_map(|p| [p[0] * 2.0, p[1]])
            .collect();
        assert!(procrustes_max_deviation(&coords, &stretched).unwrap() > 1.0);
    }

    #[test]
    fn input_validation() {
        assert!(knn_preservation(
            &DataMatrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap(),
            &[0.0; 4],
            1
        )
        .is_err());
        assert!(nn_label_agreement(&[0.0; 6], &[0, 1]).is_err());
        assert!(kmeans_label_accuracy(&[0.0; 6], &[0, 1, 2], 4, 1).is_err());
        assert!(procrustes_max_deviation(&[0.0; 4], &[0.0; 6]).is_err());
    }
}
