//! Gradient assembly for the embedding objective.
//!
//! The Kullback-Leibler gradient splits into an attractive term over the
//! sparse affinity support and a repulsive term over all pairs:
//!
//! ```text
//! grad_i = 4 * (attr_i + rep_i)
//! attr_i =   sum_j  P_ij * w_ij        * (y_i - y_j)   (sparse support)
//! rep_i  = - sum_j (w_ij^2 / Z)        * (y_i - y_j)   (all pairs)
//! w_ij   = 1 / (1 + ||y_i - y_j||^2),  Z = sum_{k != l} w_kl
//! ```
//!
//! The attractive term is evaluated as a sparse-matrix decomposition: with
//! `PQ` holding `P_ij * w_ij` on the affinity support, `O` the all-ones
//! matrix, and `Y` the coordinates,
//!
//! ```text
//! attr = (PQ * O) .* Y - PQ * Y
//! ```
//!
//! which turns the edge loop into two sparse-dense products. The repulsive
//! term and `Z` come from one Barnes-Hut traversal per point; every point's
//! contributions are divided by the shared `Z` afterwards. All accumulation
//! happens in `f64`; parallel loops write per-point slots only.

use rayon::prelude::*;

use crate::affinity::SparseAffinities;
use crate::error::Result;
use crate::quadtree::QuadTree;
use crate::scalar::Scalar;

/// Reusable per-iteration buffers; allocate once per run.
#[derive(Debug, Clone)]
pub struct GradientBuffers<T> {
    /// `P_ij * w_ij` per stored affinity.
    pub pq: Vec<T>,
    /// Attractive force, `n x 2`.
    pub attractive: Vec<T>,
    /// Repulsive force, `n x 2`.
    pub repulsive: Vec<T>,
    /// Combined gradient `4 * (attractive + repulsive)`, `n x 2`.
    pub gradient: Vec<T>,
    /// Normalizer from the latest repulsive evaluation.
    pub z_estimate: f64,
    // Scratch below: unnormalized traversal sums and decomposition
    // temporaries.
    raw_force: Vec<f64>,
    z_points: Vec<f64>,
    row_sums: Vec<T>,
    weighted: Vec<T>,
    ones: Vec<T>,
}

impl<T: Scalar> GradientBuffers<T> {
    pub fn new(n: usize, nnz: usize) -> Self {
        GradientBuffers {
            pq: vec![T::zero(); nnz],
            attractive: vec![T::zero(); 2 * n],
            repulsive: vec![T::zero(); 2 * n],
            gradient: vec![T::zero(); 2 * n],
            z_estimate: 0.0,
            raw_force: vec![0f64; 2 * n],
            z_points: vec![0f64; n],
            row_sums: vec![T::zero(); 2 * n],
            weighted: vec![T::zero(); 2 * n],
            ones: vec![T::one(); 2 * n],
        }
    }

    pub fn n(&self) -> usize {
        self.z_points.len()
    }

    /// Largest gradient component magnitude.
    pub fn max_gradient(&self) -> f64 {
        self.gradient
            .iter()
            .map(|g| g.as_f64().abs())
            .fold(0.0, f64::max)
    }
}

/// Fills `bufs.pq` with `P_ij / (1 + ||y_i - y_j||^2)` for every stored
/// affinity, in parallel over rows.
pub fn compute_pq<T: Scalar>(p: &SparseAffinities<T>, coords: &[T], bufs: &mut GradientBuffers<T>) {
    let matrix = p.matrix();
    let n = matrix.rows();
    assert_eq!(coords.len(), 2 * n, "coordinate buffer shape");
    assert_eq!(bufs.pq.len(), matrix.nnz(), "pq buffer shape");

    // Carve the value buffer into per-row slices so rows fill in parallel.
    let offsets = matrix.row_offsets();
    let mut row_slices: Vec<&mut [T]> = Vec::with_capacity(n);
    let mut rest: &mut [T] = &mut bufs.pq;
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(offsets[i + 1] - offsets[i]);
        row_slices.push(head);
        rest = tail;
    }

    let cols = matrix.col_indices();
    let vals = matrix.values();
    row_slices.into_par_iter().enumerate().for_each(|(i, out)| {
        let lo = offsets[i];
        let xi = coords[2 * i].as_f64();
        let yi = coords[2 * i + 1].as_f64();
        for (slot, e) in out.iter_mut().zip(lo..offsets[i + 1]) {
            let j = cols[e] as usize;
            let dx = xi - coords[2 * j].as_f64();
            let dy = yi - coords[2 * j + 1].as_f64();
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            *slot = T::from_f64(vals[e].as_f64() * w);
        }
    });
}

/// Evaluates the attractive term via the two-product decomposition,
/// consuming the `pq` weights prepared by [`compute_pq`].
pub fn attractive_forces<T: Scalar>(
    p: &SparseAffinities<T>,
    coords: &[T],
    bufs: &mut GradientBuffers<T>,
) {
    let matrix = p.matrix();
    let n = matrix.rows();
    assert_eq!(coords.len(), 2 * n);

    // (PQ * O): each output row repeats the row sum, matching Y's shape.
    matrix.mul_dense_with_into(&bufs.pq, &bufs.ones, 2, &mut bufs.row_sums);
    // PQ * Y.
    matrix.mul_dense_with_into(&bufs.pq, coords, 2, &mut bufs.weighted);

    bufs.attractive
        .par_iter_mut()
        .enumerate()
        .for_each(|(e, slot)| {
            let s = bufs.row_sums[e].as_f64();
            let w = bufs.weighted[e].as_f64();
            *slot = T::from_f64(s * coords[e].as_f64() - w);
        });
}

/// Evaluates the repulsive term with one Barnes-Hut traversal per point and
/// the shared normalizer `Z = sum_i z_i`. Returns `Z`, which is also left in
/// `bufs.z_estimate`.
///
/// `Z` is strictly positive for any tree of two or more points (coincident
/// pairs contribute 1 each), so the division is always defined.
pub fn repulsive_forces<T: Scalar>(
    tree: &QuadTree,
    coords: &[T],
    theta: f64,
    bufs: &mut GradientBuffers<T>,
) -> f64 {
    let n = tree.n();
    assert_eq!(coords.len(), 2 * n);
    assert!(n >= 2, "repulsion needs at least two points");

    let raw = &mut bufs.raw_force;
    let z_points = &mut bufs.z_points;
    raw.par_chunks_mut(2)
        .zip(z_points.par_iter_mut())
        .enumerate()
        .for_each_init(
            || Vec::with_capacity(64),
            |stack, (i, (force_slot, z_slot))| {
                let (force, z) = tree.traverse_into(
                    coords[2 * i].as_f64(),
                    coords[2 * i + 1].as_f64(),
                    Some(i as u32),
                    theta,
                    stack,
                );
                force_slot[0] = force[0];
                force_slot[1] = force[1];
                *z_slot = z;
            },
        );

    let z: f64 = z_points.iter().sum();
    assert!(z > 0.0, "kernel normalizer must be positive, got {z}");
    bufs.z_estimate = z;

    let inv = 1.0 / z;
    bufs.repulsive
        .par_iter_mut()
        .enumerate()
        .for_each(|(e, slot)| {
            *slot = T::from_f64(-raw[e] * inv);
        });
    z
}

/// Combines the two force buffers into `gradient = 4 * (attr + rep)`.
pub fn combine_gradient<T: Scalar>(bufs: &mut GradientBuffers<T>) {
    let attr = &bufs.attractive;
    let rep = &bufs.repulsive;
    bufs.gradient
        .par_iter_mut()
        .enumerate()
        .for_each(|(e, slot)| {
            *slot = T::from_f64(4.0 * (attr[e].as_f64() + rep[e].as_f64()));
        });
}

/// One-shot gradient: builds the tree, runs all stages, and returns the
/// gradient with the normalizer estimate. Convenience for tests and
/// small-scale callers; the optimizer drives the stages itself.
pub fn full_gradient<T: Scalar>(
    p: &SparseAffinities<T>,
    coords: &[T],
    theta: f64,
) -> Result<(Vec<T>, f64)> {
    let tree = QuadTree::build(coords)?;
    let mut bufs = GradientBuffers::new(p.n(), p.matrix().nnz());
    let z = repulsive_forces(&tree, coords, theta, &mut bufs);
    compute_pq(p, coords, &mut bufs);
    attractive_forces(p, coords, &mut bufs);
    combine_gradient(&mut bufs);
    Ok((bufs.gradient, z))
}

/// Exact pairwise normalizer `Z = sum_{k != l} 1 / (1 + ||y_k - y_l||^2)`.
pub fn exact_normalizer<T: Scalar>(coords: &[T]) -> f64 {
    let n = coords.len() / 2;
    let mut parts = vec![0f64; n];
    parts.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let xi = coords[2 * i].as_f64();
        let yi = coords[2 * i + 1].as_f64();
        let mut acc = 0f64;
        for j in 0..n {
            if j == i {
                continue;
            }
            let dx = xi - coords[2 * j].as_f64();
            let dy = yi - coords[2 * j + 1].as_f64();
            acc += 1.0 / (1.0 + dx * dx + dy * dy);
        }
        *slot = acc;
    });
    parts.iter().sum()
}

/// Kullback-Leibler divergence with the exact `O(n^2)` normalizer. The
/// reference diagnostic; use [`kl_divergence_sparse`] with a traversal
/// estimate when quadratic work is too slow.
pub fn kl_divergence<T: Scalar>(p: &SparseAffinities<T>, coords: &[T]) -> f64 {
    kl_divergence_sparse(p, coords, exact_normalizer(coords))
}

/// Kullback-Leibler divergence over the sparse support, with the caller
/// supplying the normalizer (exact or Barnes-Hut estimate).
///
/// Terms outside the support are dropped; since they carry `p = 0`, the sum
/// is exact for the given normalizer — its bias is entirely the
/// normalizer's.
pub fn kl_divergence_sparse<T: Scalar>(
    p: &SparseAffinities<T>,
    coords: &[T],
    normalizer: f64,
) -> f64 {
    let matrix = p.matrix();
    let n = matrix.rows();
    assert_eq!(coords.len(), 2 * n);
    let mut parts = vec![0f64; n];
    parts.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let (cols, vals) = matrix.row(i);
        let xi = coords[2 * i].as_f64();
        let yi = coords[2 * i + 1].as_f64();
        let mut acc = 0f64;
        for (&j_u32, &p_ij) in cols.iter().zip(vals) {
            let p_ij = p_ij.as_f64();
            if p_ij <= 0.0 {
                continue;
            }
            let j = j_u32 as usize;
            let dx = xi - coords[2 * j].as_f64();
            let dy = yi - coords[2 * j + 1].as_f64();
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            acc += p_ij * (p_ij / (w / normalizer)).ln();
        }
        *slot = acc;
    });
    parts.iter().sum()
}
