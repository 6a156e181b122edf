//! Lloyd's k-means with k-means++ seeding.
//!
//! Shared by the coarse quantizer, the product-quantizer codebooks, and the
//! embedding-quality metrics. Assignment scans run in parallel over points
//! (each point writes only its own slot); every reduction — seeding scans,
//! centroid sums, inertia — is sequential, so results are identical for any
//! worker count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dist2_f32;

/// Relative inertia improvement below which iteration stops.
const REL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct KMeans {
    /// `k x d`, row-major.
    pub centroids: Vec<f32>,
    /// Cluster of each point under the final centroids.
    pub assignments: Vec<u32>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
}

/// Runs k-means++ seeding followed by at most `max_iters` Lloyd iterations,
/// stopping early once the inertia improvement falls below 1e-4 relative.
///
/// Panics if `k == 0` or `k > n`; callers validate against their own inputs.
pub(crate) fn train(
    data: &[f32],
    n: usize,
    d: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iters: usize,
) -> KMeans {
    assert!(k >= 1 && k <= n, "k = {k} must lie in 1..={n}");
    assert_eq!(data.len(), n * d);

    let mut centroids = seed_plus_plus(data, n, d, k, rng);
    let mut assignments = vec![0u32; n];
    let mut d2 = vec![0f64; n];
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..max_iters {
        assign(data, n, d, &centroids, k, &mut assignments, &mut d2);
        let inertia: f64 = d2.iter().sum();
        if prev_inertia - inertia <= REL_TOLERANCE * inertia.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_inertia = inertia;
        update_centroids(data, n, d, k, &assignments, &d2, &mut centroids);
    }

    // One closing scan so the reported assignments match the final centroids
    // (the last update may have moved them).
    assign(data, n, d, &centroids, k, &mut assignments, &mut d2);
    let inertia = d2.iter().sum();

    KMeans {
        centroids,
        assignments,
        inertia,
    }
}

/// k-means++: the first center uniform, each further center sampled with
/// probability proportional to its squared distance from the chosen set.
fn seed_plus_plus(data: &[f32], n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut centroids = vec![0f32; k * d];
    let first = rng.random_range(0..n);
    centroids[..d].copy_from_slice(&data[first * d..(first + 1) * d]);

    let mut min_d2 = vec![0f64; n];
    min_d2
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, slot)| *slot = dist2_f32(&data[i * d..(i + 1) * d], &centroids[..d]) as f64);

    for c in 1..k {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass is zero (duplicated points); fall back to
            // the first index, which keeps seeding deterministic.
            c % n
        };
        centroids[c * d..(c + 1) * d].copy_from_slice(&data[chosen * d..(chosen + 1) * d]);

        let new_center = &centroids[c * d..(c + 1) * d];
        min_d2.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let cand = dist2_f32(&data[i * d..(i + 1) * d], new_center) as f64;
            if cand < *slot {
                *slot = cand;
            }
        });
    }
    centroids
}

/// Nearest-centroid assignment; ties go to the lower centroid index.
fn assign(
    data: &[f32],
    n: usize,
    d: usize,
    centroids: &[f32],
    k: usize,
    assignments: &mut [u32],
    d2: &mut [f64],
) {
    assignments
        .par_iter_mut()
        .zip(d2.par_iter_mut())
        .enumerate()
        .for_each(|(i, (slot, dist_slot))| {
            let point = &data[i * d..(i + 1) * d];
            let mut best = 0u32;
            let mut best_d = f32::INFINITY;
            for c in 0..k {
                let dist = dist2_f32(point, &centroids[c * d..(c + 1) * d]);
                if dist < best_d {
                    best_d = dist;
                    best = c as u32;
                }
            }
            *slot = best;
            *dist_slot = best_d as f64;
        });
    let _ = n;
}

/// Moves each centroid to the mean of its points; an empty centroid is
/// reseeded at the point currently farthest from its own centroid.
fn update_centroids(
    data: &[f32],
    n: usize,
    d: usize,
    k: usize,
    assignments: &[u32],
    d2: &[f64],
    centroids: &mut [f32],
) {
    let mut sums = vec![0f64; k * d];
    let mut counts = vec![0u64; k];
    for i in 0..n {
        let c = assignments[i] as usize;
        counts[c] += 1;
        let row = &data[i * d..(i + 1) * d];
        let acc = &mut sums[c * d..(c + 1) * d];
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }

    let mut taken = vec![false; n];
    for c in 0..k {
        if counts[c] == 0 {
            let mut far = 0usize;
            let mut far_d = -1.0f64;
            for i in 0..n {
                if !taken[i] && d2[i] > far_d {
                    far_d = d2[i];
                    far = i;
                }
            }
            taken[far] = true;
            centroids[c * d..(c + 1) * d].copy_from_slice(&data[far * d..(far + 1) * d]);
        } else {
            let inv = 1.0 / counts[c] as f64;
            for j in 0..d {
                centroids[c * d + j] = (sums[c * d + j] * inv) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn two_blobs() -> (Vec<f32>, usize) {
        // Ten points near (0, 0), ten near (10, 10).
        let mut data = Vec::new();
        for i in 0..10 {
            data.extend([0.1 * i as f32, 0.05 * i as f32]);
        }
        for i in 0..10 {
            data.extend([10.0 + 0.1 * i as f32, 10.0 - 0.05 * i as f32]);
        }
        (data, 20)
    }

    #[test]
    fn separates_two_blobs() {
        let (data, n) = two_blobs();
        let mut rng = stream_rng(7, 0);
        let km = train(&data, n, 2, 2, &mut rng, 25);
        let first = km.assignments[0];
        assert!(km.assignments[..10].iter().all(|&a| a == first));
        assert!(km.assignments[10..].iter().all(|&a| a != first));
        assert!(km.inertia < 10.0, "inertia {}", km.inertia);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (data, n) = two_blobs();
        let a = train(&data, n, 2, 5, &mut stream_rng(3, 1), 25);
        let b = train(&data, n, 2, 5, &mut stream_rng(3, 1), 25);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let data = vec![0.0f32, 0.0, 1.0, 0.0, 0.0, 1.0];
        let km = train(&data, 3, 2, 3, &mut stream_rng(1, 0), 25);
        assert!(km.inertia < 1e-12, "inertia {}", km.inertia);
    }

    #[test]
    fn survives_duplicate_points() {
        // More centers than distinct points: reseeding must not loop or panic.
        let data = vec![1.0f32; 8 * 2];
        let km = train(&data, 8, 2, 4, &mut stream_rng(5, 0), 25);
        assert_eq!(km.assignments.len(), 8);
        assert!(km.inertia < 1e-12);
    }
}
