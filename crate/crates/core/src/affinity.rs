//! Neighborhood affinities: per-row Gaussian calibration to a target
//! perplexity, then symmetrization onto a sparse support.
//!
//! Each point's neighbor distances are converted to conditional
//! probabilities `p(j|i) = exp(-d_ij^2 / 2 sigma_i^2) / Z_i`, with `sigma_i`
//! chosen so the distribution's perplexity `2^H` hits the requested value.
//! The directed rows are then averaged with their transposes and scaled by
//! `1 / 2n`, producing a symmetric matrix whose entries sum to one.

use rayon::prelude::*;

use crate::error::{Result, TsneError};
use crate::knn::KnnGraph;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Bisection search bounds, as powers of two of sigma.
const LOG2_SIGMA_MIN: f64 = -40.0;
const LOG2_SIGMA_MAX: f64 = 40.0;
/// Tolerance on the entropy (base-2) against `log2(perplexity)`.
const ENTROPY_TOLERANCE: f64 = 1e-4;
/// Bisection iteration cap; on hitting it the best iterate is accepted.
const MAX_BISECTIONS: usize = 200;

/// Calibration result for one point.
#[derive(Debug, Clone)]
pub struct AffinityRow<T> {
    /// Bandwidth that met (or came closest to) the target perplexity.
    pub sigma: T,
    /// Conditional probabilities, aligned with the neighbor order of the
    /// k-NN row they were computed from. Sums to one.
    pub conditional: Vec<T>,
    /// True when every distance was zero, making the bandwidth meaningless;
    /// the conditionals fall back to uniform.
    pub degenerate: bool,
}

/// Entropy (bits) and conditional probabilities at a given bandwidth.
///
/// Distances are shifted by their minimum before exponentiation; the shift
/// cancels in the normalization, so the probabilities are unchanged while
/// the largest exponent is pinned at zero.
fn entropy_at(shifted: &[f64], sigma: f64, probs: &mut [f64]) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut total = 0.0;
    for (p, &d) in probs.iter_mut().zip(shifted) {
        *p = (-d * inv).exp();
        total += *p;
    }
    let mut entropy = 0.0;
    for p in probs.iter_mut() {
        *p /= total;
        if *p > 0.0 {
            entropy -= *p * p.log2();
        }
    }
    entropy
}

/// Finds the Gaussian bandwidth whose neighborhood distribution over
/// `distances` (squared, to a point's k nearest neighbors) has the requested
/// perplexity, and returns the distribution.
///
/// The search bisects `log2(sigma)` over `[-40, 40]` until the entropy is
/// within 1e-4 bits of `log2(perplexity)`, for at most 200 halvings; if the
/// cap is hit the closest iterate is kept and a warning logged.
pub fn calibrate_row<T: Scalar>(distances: &[T], perplexity: f64) -> Result<AffinityRow<T>> {
    let k = distances.len();
    if k < 2 {
        return Err(TsneError::InvalidParameter(format!(
            "calibration needs at least 2 neighbors, got {k}"
        )));
    }
    if !(perplexity > 0.0 && perplexity.is_finite()) {
        return Err(TsneError::InvalidParameter(format!(
            "perplexity must be positive and finite, got {perplexity}"
        )));
    }
    if perplexity >= k as f64 {
        return Err(TsneError::InvalidParameter(format!(
            "perplexity {perplexity} needs more than {k} neighbors per point; \
             raise k_neighbors or lower the perplexity"
        )));
    }
    let mut shifted = vec![0f64; k];
    let mut min = f64::INFINITY;
    for (slot, d) in shifted.iter_mut().zip(distances) {
        let v = d.as_f64();
        if v < 0.0 || !v.is_finite() {
            return Err(TsneError::InvalidParameter(format!(
                "neighbor distances must be finite and non-negative, got {v}"
            )));
        }
        *slot = v;
        min = min.min(v);
    }

    if shifted.iter().all(|&d| d == 0.0) {
        // Coincident neighborhood: every bandwidth yields the same uniform
        // distribution, so report it and flag the bandwidth as meaningless.
        let uniform = T::from_f64(1.0 / k as f64);
        return Ok(AffinityRow {
            sigma: T::one(),
            conditional: vec![uniform; k],
            degenerate: true,
        });
    }
    for d in shifted.iter_mut() {
        *d -= min;
    }

    let target = perplexity.log2();
    let mut lo = LOG2_SIGMA_MIN;
    let mut hi = LOG2_SIGMA_MAX;
    let mut probs = vec![0f64; k];
    let mut best_probs = vec![0f64; k];
    let mut best_sigma = 1.0;
    let mut best_gap = f64::INFINITY;

    for iteration in 0..MAX_BISECTIONS {
        let t = 0.5 * (lo + hi);
        let sigma = t.exp2();
        let entropy = entropy_at(&shifted, sigma, &mut probs);
        let gap = entropy - target;
        if gap.abs() < best_gap {
            best_gap = gap.abs();
            best_sigma = sigma;
            best_probs.copy_from_slice(&probs);
        }
        if gap.abs() <= ENTROPY_TOLERANCE {
            break;
        }
        // Entropy grows with sigma: overshoot means the bandwidth is too
        // wide.
        if gap > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if iteration + 1 == MAX_BISECTIONS {
            log::warn!(
                "perplexity calibration hit the {MAX_BISECTIONS}-step cap \
                 (entropy gap {best_gap:.2e} bits); keeping the best iterate"
            );
        }
    }

    Ok(AffinityRow {
        sigma: T::from_f64(best_sigma),
        conditional: best_probs.iter().map(|&p| T::from_f64(p)).collect(),
        degenerate: false,
    })
}

/// Symmetric affinities on a sparse support, plus their cached total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinities<T> {
    matrix: SparseMatrix<T>,
    sum: f64,
}

impl<T: Scalar> SparseAffinities<T> {
    /// Wraps a symmetric nonnegative matrix; computed once, reused by the
    /// optimizer every iteration.
    pub fn new(matrix: SparseMatrix<T>) -> Self {
        let sum = matrix.sum();
        SparseAffinities { matrix, sum }
    }

    pub fn matrix(&self) -> &SparseMatrix<T> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// Total stored mass; 1.0 (up to rounding) right after symmetrization,
    /// the exaggeration factor times that during the exaggerated phase.
    pub fn sum(&self) -> f64 {
        self.sum
    }
}

/// Calibrates every row of a k-NN graph in parallel.
pub fn calibrate_rows<T: Scalar>(
    graph: &KnnGraph<T>,
    perplexity: f64,
) -> Result<Vec<AffinityRow<T>>> {
    let rows: Vec<Result<AffinityRow<T>>> = (0..graph.n())
        .into_par_iter()
        .map(|i| calibrate_row(graph.neighbors(i).1, perplexity))
        .collect();
    rows.into_iter().collect()
}

/// Averages each directed conditional with its transpose and scales by
/// `1 / 2n`, yielding a symmetric matrix with unit total mass.
///
/// Every unordered pair is computed exactly once and written to both
/// triangles, so symmetry is bitwise and the support has at most `2 n k`
/// nonzeros, none on the diagonal.
pub fn symmetrize<T: Scalar>(
    rows: &[AffinityRow<T>],
    graph: &KnnGraph<T>,
) -> Result<SparseAffinities<T>> {
    let n = graph.n();
    let k = graph.k();
    if rows.len() != n {
        return Err(TsneError::InvalidParameter(format!(
            "{} calibrated rows for a {n}-point graph",
            rows.len()
        )));
    }

    // Directed conditionals on the k-NN support.
    let mut directed_triplets = Vec::with_capacity(n * k);
    for (i, row) in rows.iter().enumerate() {
        let (ids, _) = graph.neighbors(i);
        if row.conditional.len() != k {
            return Err(TsneError::InvalidParameter(format!(
                "row {i} holds {} conditionals for k = {k}",
                row.conditional.len()
            )));
        }
        for (&j, &p) in ids.iter().zip(&row.conditional) {
            directed_triplets.push((i, j as usize, p));
        }
    }
    let directed = SparseMatrix::from_triplets(n, n, &directed_triplets)?;

    let scale = 1.0 / (2.0 * n as f64);
    let mut triplets = Vec::with_capacity(2 * n * k);
    for i in 0..n {
        let (cols, vals) = directed.row(i);
        for (&j_u32, &v) in cols.iter().zip(vals) {
            let j = j_u32 as usize;
            if j == i {
                return Err(TsneError::InvalidParameter(format!(
                    "self-neighbor in k-NN row {i}"
                )));
            }
            let (j_cols, _) = directed.row(j);
            let reverse_exists = j_cols.binary_search(&(i as u32)).is_ok();
            // Each unordered pair is owned by exactly one directed edge: the
            // (i < j) edge when it exists, otherwise the lone (i > j) edge.
            let owned = if j > i { true } else { !reverse_exists };
            if !owned {
                continue;
            }
            let reverse = if reverse_exists { directed.get(j, i) } else { T::zero() };
            let value = T::from_f64((v.as_f64() + reverse.as_f64()) * scale);
            triplets.push((i, j, value));
            triplets.push((j, i, value));
        }
    }

    let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok(SparseAffinities::new(matrix))
}

/// Scaled copy used during the early-exaggeration phase; the original stays
/// untouched for the later phase, so "restoring" it is exact.
pub fn exaggerate<T: Scalar>(p: &SparseAffinities<T>, factor: f64) -> Result<SparseAffinities<T>> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(TsneError::InvalidParameter(format!(
            "exaggeration factor must be at least 1, got {factor}"
        )));
    }
    let mut matrix = p.matrix().clone();
    matrix.scale(T::from_f64(factor));
    Ok(SparseAffinities::new(matrix))
}

/// Full affinity pipeline: calibrate every row, then symmetrize.
pub fn affinities_from_knn<T: Scalar>(
    graph: &KnnGraph<T>,
    perplexity: f64,
) -> Result<SparseAffinities<T>> {
    let rows = calibrate_rows(graph, perplexity)?;
    symmetrize(&rows, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;
    use crate::knn::knn_exact;
    use crate::synth;
    use proptest::prelude::*;

    /// Independent perplexity evaluation straight from the definition.
    fn perplexity_of(distances: &[f64], sigma: f64) -> f64 {
        let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = distances
            .iter()
            .map(|d| (-(d - min) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let entropy: f64 = weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| {
                let p = w / total;
                -p * p.log2()
            })
            .sum();
        entropy.exp2()
    }

    #[test]
    fn two_neighbor_row_hits_target() {
        let row = calibrate_row::<f64>(&[0.0, 1.0], 1.5).unwrap();
        assert!(!row.degenerate);
        let reached = perplexity_of(&[0.0, 1.0], row.sigma);
        assert!(
            (reached - 1.5).abs() / 1.5 <= 1e-4,
            "perplexity {reached} at sigma {}",
            row.sigma
        );
        let total: f64 = row.conditional.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // The closer neighbor gets more mass.
        assert!(row.conditional[0] > row.conditional[1]);
    }

    #[test]
    fn sigma_grows_with_perplexity() {
        let distances: Vec<f64> = (0..32).map(|i| (i as f64) * 0.7 + 0.1).collect();
        let narrow = calibrate_row(&distances, 2.0).unwrap();
        let wide = calibrate_row(&distances, 20.0).unwrap();
        assert!(wide.sigma > narrow.sigma);
    }

    #[test]
    fn coincident_row_is_degenerate_uniform() {
        let row = calibrate_row::<f32>(&[0.0; 5], 3.0).unwrap();
        assert!(row.degenerate);
        for &p in &row.conditional {
            assert!((p - 0.2).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_invalid_rows() {
        assert!(calibrate_row::<f64>(&[1.0], 0.5).is_err());
        assert!(calibrate_row::<f64>(&[1.0, 2.0], 2.0).is_err());
        assert!(calibrate_row::<f64>(&[1.0, 2.0], -1.0).is_err());
        assert!(calibrate_row::<f64>(&[1.0, -2.0, 3.0], 2.0).is_err());
        assert!(calibrate_row::<f64>(&[1.0, f64::NAN, 3.0], 2.0).is_err());
    }

    #[test]
    fn symmetrize_averages_mutual_and_one_way_edges() {
        // Three points on a line: 0 and 1 pick each other; 2 picks 1 and is
        // picked by nobody.
        let data = DataMatrix::new(3, 1, vec![0.0f64, 1.0, 3.0]).unwrap();
        let graph = knn_exact(&data, 1).unwrap();
        let rows = vec![
            AffinityRow {
                sigma: 1.0,
                conditional: vec![1.0],
                degenerate: false,
            };
            3
        ];
        let p = symmetrize(&rows, &graph).unwrap();
        // Mutual pair: (1 + 1) / 6; one-way pair: (1 + 0) / 6.
        assert_eq!(p.matrix().get(0, 1), 2.0 / 6.0);
        assert_eq!(p.matrix().get(1, 0), 2.0 / 6.0);
        assert_eq!(p.matrix().get(1, 2), 1.0 / 6.0);
        assert_eq!(p.matrix().get(2, 1), 1.0 / 6.0);
        assert_eq!(p.matrix().get(0, 2), 0.0);
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pipeline_mass_symmetry_and_support() {
        let dataset = synth::clustered_dataset(120, 8, 3, 1.0, 21);
        let graph = knn_exact(&dataset.data, 10).unwrap();
        let p = affinities_from_knn(&graph, 5.0).unwrap();

        assert!((p.sum() - 1.0).abs() <= 1e-6, "mass {}", p.sum());
        assert!(p.matrix().nnz() <= 2 * 120 * 10);
        for i in 0..120 {
            let (cols, vals) = p.matrix().row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!(v >= 0.0);
                assert_ne!(i, j as usize, "diagonal entry at {i}");
                // Bitwise symmetry: the shared value was computed once.
                let mirrored = p.matrix().get(j as usize, i);
                assert_eq!(v.to_bits(), mirrored.to_bits(), "({i}, {j})");
            }
        }
    }

    #[test]
    fn exaggerate_scales_values_and_mass() {
        let dataset = synth::clustered_dataset(40, 4, 2, 1.0, 2);
        let graph = knn_exact(&dataset.data, 5).unwrap();
        let p = affinities_from_knn(&graph, 3.0).unwrap();
        let boosted = exaggerate(&p, 12.0).unwrap();
        // Each value rounds to f32 after scaling, so the sum drifts by at
        // most a few ulps per entry.
        assert!((boosted.sum() - 12.0 * p.sum()).abs() < 1e-5);
        assert_eq!(boosted.matrix().nnz(), p.matrix().nnz());
        assert!(exaggerate(&p, 0.5).is_err());
    }

    proptest! {
        /// The achieved perplexity matches the request to 1e-4 relative, for
        /// arbitrary well-posed rows, judged by an independent evaluation.
        #[test]
        fn calibration_reaches_requested_perplexity(
            distances in prop::collection::vec(0.0f64..50.0, 2..64),
            perp_frac in 0.05f64..0.95,
        ) {
            prop_assume!(distances.iter().any(|&d| d > 0.0));
            let k = distances.len();
            let perplexity = (1.0 + perp_frac * (k as f64 - 1.0)).min(k as f64 * 0.99);
            let row = calibrate_row(&distances, perplexity).unwrap();
            let reached = perplexity_of(&distances, row.sigma);
            prop_assert!(
                (reached - perplexity).abs() / perplexity <= 1e-4,
                "requested {perplexity}, reached {reached}, sigma {}", row.sigma
            );
            let total: f64 = row.conditional.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
