//! Product quantization of residual vectors.
//!
//! A vector is split into `m` contiguous sub-vectors; each sub-vector is
//! quantized independently against its own codebook of `2^bits` centers, so a
//! `d`-dimensional float vector compresses to `m` one-byte codes. Distances
//! from an uncompressed query to compressed vectors are evaluated
//! asymmetrically: one lookup table of query-to-center distances per
//! sub-quantizer, then a table sum per code word.

use rayon::prelude::*;

use super::kmeans;
use crate::error::{Result, TsneError};
use crate::rng::{stream_rng, STREAM_PQ_BASE};

/// Lloyd iterations per codebook.
const TRAIN_ITERS: usize = 25;

/// Codebooks of an `m`-way product quantizer.
///
/// Vectors whose dimension is not divisible by `m` are implicitly zero-padded
/// to the next multiple; encoding and lookup tables apply the same padding,
/// so the extra dimensions contribute nothing to distances.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebooks {
    d: usize,
    m: usize,
    bits: u8,
    /// Sub-vector length after padding (`ceil(d / m)`).
    dsub: usize,
    /// Centers actually trained; `min(2^bits, n)` when built from `n` points.
    codes_per_sub: usize,
    /// `m x codes_per_sub x dsub`, row-major.
    centers: Vec<f32>,
}

impl PqCodebooks {
    /// Trains one codebook per sub-vector on `vectors` (`n x d`, row-major).
    pub fn train(vectors: &[f32], n: usize, d: usize, m: usize, bits: u8, seed: u64) -> Result<Self> {
        if m == 0 || m > d {
            return Err(TsneError::InvalidParameter(format!(
                "sub-quantizer count must lie in 1..={d} for {d}-dimensional data, got {m}"
            )));
        }
        if bits == 0 || bits > 8 {
            return Err(TsneError::InvalidParameter(format!(
                "codebook bits must lie in 1..=8, got {bits}"
            )));
        }
        if n == 0 {
            return Err(TsneError::InvalidParameter(
                "cannot train a quantizer on zero vectors".into(),
            ));
        }
        assert_eq!(vectors.len(), n * d);

        let dsub = d.div_ceil(m);
        let codes_per_sub = (1usize << bits).min(n);
        let mut centers = vec![0f32; m * codes_per_sub * dsub];

        for s in 0..m {
            // Gather this sub-vector from every point, zero-padded past d.
            let mut slab = vec![0f32; n * dsub];
            for i in 0..n {
                for j in 0..dsub {
                    let col = s * dsub + j;
                    if col < d {
                        slab[i * dsub + j] = vectors[i * d + col];
                    }
                }
            }
            let mut rng = stream_rng(seed, STREAM_PQ_BASE + s as u64);
            let km = kmeans::train(&slab, n, dsub, codes_per_sub, &mut rng, TRAIN_ITERS);
            centers[s * codes_per_sub * dsub..(s + 1) * codes_per_sub * dsub]
                .copy_from_slice(&km.centroids);
        }

        Ok(PqCodebooks {
            d,
            m,
            bits,
            dsub,
            codes_per_sub,
            centers,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sub_quantizers(&self) -> usize {
        self.m
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn codes_per_sub(&self) -> usize {
        self.codes_per_sub
    }

    pub fn sub_dim(&self) -> usize {
        self.dsub
    }

    pub(crate) fn centers(&self) -> &[f32] {
        &self.centers
    }

    /// Rebuilds codebooks from raw parts (used by index deserialization).
    pub(crate) fn from_parts(
        d: usize,
        m: usize,
        bits: u8,
        codes_per_sub: usize,
        centers: Vec<f32>,
    ) -> Result<Self> {
        let dsub = d.div_ceil(m.max(1));
        if m == 0 || bits == 0 || bits > 8 || codes_per_sub == 0 {
            return Err(TsneError::InvalidParameter(
                "corrupt quantizer geometry".into(),
            ));
        }
        if codes_per_sub > (1usize << bits) || centers.len() != m * codes_per_sub * dsub {
            return Err(TsneError::InvalidParameter(
                "quantizer center block does not match its header".into(),
            ));
        }
        Ok(PqCodebooks {
            d,
            m,
            bits,
            dsub,
            codes_per_sub,
            centers,
        })
    }

    fn sub_centers(&self, s: usize) -> &[f32] {
        let step = self.codes_per_sub * self.dsub;
        &self.centers[s * step..(s + 1) * step]
    }

    /// Distance from `vector[s]`'s sub-vector (zero-padded) to a center.
    fn sub_dist2(&self, vector: &[f32], s: usize, center: &[f32]) -> f32 {
        let mut acc = 0f32;
        for (j, &c) in center.iter().enumerate() {
            let col = s * self.dsub + j;
            let v = if col < self.d { vector[col] } else { 0.0 };
            let diff = v - c;
            acc += diff * diff;
        }
        acc
    }

    /// Quantizes one `d`-dimensional vector into `m` code bytes.
    pub fn encode_into(&self, vector: &[f32], out: &mut [u8]) {
        assert_eq!(vector.len(), self.d);
        assert_eq!(out.len(), self.m);
        for (s, slot) in out.iter_mut().enumerate() {
            let centers = self.sub_centers(s);
            let mut best = 0u8;
            let mut best_d = f32::INFINITY;
            for c in 0..self.codes_per_sub {
                let dist = self.sub_dist2(vector, s, &centers[c * self.dsub..(c + 1) * self.dsub]);
                if dist < best_d {
                    best_d = dist;
                    best = c as u8;
                }
            }
            *slot = best;
        }
    }

    /// Decompresses `m` code bytes back into a `d`-dimensional vector.
    pub fn reconstruct_into(&self, codes: &[u8], out: &mut [f32]) {
        assert_eq!(codes.len(), self.m);
        assert_eq!(out.len(), self.d);
        for (s, &code) in codes.iter().enumerate() {
            let centers = self.sub_centers(s);
            let c = code as usize;
            let center = &centers[c * self.dsub..(c + 1) * self.dsub];
            for (j, &value) in center.iter().enumerate() {
                let col = s * self.dsub + j;
                if col < self.d {
                    out[col] = value;
                }
            }
        }
    }

    /// Fills the asymmetric-distance lookup table for one query: entry
    /// `s * codes_per_sub + c` holds the squared distance from the query's
    /// sub-vector `s` to center `c`.
    pub fn lookup_table_into(&self, query: &[f32], table: &mut [f32]) {
        assert_eq!(query.len(), self.d);
        assert_eq!(table.len(), self.m * self.codes_per_sub);
        for s in 0..self.m {
            let centers = self.sub_centers(s);
            for c in 0..self.codes_per_sub {
                table[s * self.codes_per_sub + c] =
                    self.sub_dist2(query, s, &centers[c * self.dsub..(c + 1) * self.dsub]);
            }
        }
    }

    /// Query-side half of the decomposed lookup table: entry
    /// `s * codes_per_sub + c` holds `-2 * <query_s, center_c>`.
    ///
    /// Together with [`Self::center_bias_into`] this splits the residual
    /// table `||(query - coarse)_s - center_c||^2` into a part that depends
    /// only on the query (computed once per query), a part that depends only
    /// on the coarse centroid (computed once at build time), and the residual
    /// sub-norms (cheap per probe). Summing the three parts per entry
    /// replaces the full quadratic-form evaluation per probed list.
    pub(crate) fn query_dot_into(&self, query: &[f32], out: &mut [f64]) {
        assert_eq!(query.len(), self.d);
        assert_eq!(out.len(), self.m * self.codes_per_sub);
        for s in 0..self.m {
            let centers = self.sub_centers(s);
            for c in 0..self.codes_per_sub {
                let center = &centers[c * self.dsub..(c + 1) * self.dsub];
                let mut acc = 0f64;
                for (j, &value) in center.iter().enumerate() {
                    let col = s * self.dsub + j;
                    if col < self.d {
                        acc += query[col] as f64 * value as f64;
                    }
                }
                out[s * self.codes_per_sub + c] = -2.0 * acc;
            }
        }
    }

    /// Centroid-side half of the decomposed lookup table: entry
    /// `s * codes_per_sub + c` holds `||center_c||^2 + 2 * <coarse_s, center_c>`.
    pub(crate) fn center_bias_into(&self, coarse: &[f32], out: &mut [f64]) {
        assert_eq!(coarse.len(), self.d);
        assert_eq!(out.len(), self.m * self.codes_per_sub);
        for s in 0..self.m {
            let centers = self.sub_centers(s);
            for c in 0..self.codes_per_sub {
                let center = &centers[c * self.dsub..(c + 1) * self.dsub];
                let mut norm = 0f64;
                let mut dot = 0f64;
                for (j, &value) in center.iter().enumerate() {
                    let v = value as f64;
                    norm += v * v;
                    let col = s * self.dsub + j;
                    if col < self.d {
                        dot += coarse[col] as f64 * v;
                    }
                }
                out[s * self.codes_per_sub + c] = norm + 2.0 * dot;
            }
        }
    }

    /// Squared norm of each sub-vector of `query - coarse` (zero past `d`),
    /// accumulated in 64-bit without rounding the residual itself.
    pub(crate) fn residual_sub_norms_into(&self, query: &[f32], coarse: &[f32], out: &mut [f64]) {
        assert_eq!(query.len(), self.d);
        assert_eq!(coarse.len(), self.d);
        assert_eq!(out.len(), self.m);
        for (s, slot) in out.iter_mut().enumerate() {
            let lo = (s * self.dsub).min(self.d);
            let hi = ((s + 1) * self.dsub).min(self.d);
            *slot = query[lo..hi]
                .iter()
                .zip(&coarse[lo..hi])
                .map(|(&q, &c)| {
                    let r = q as f64 - c as f64;
                    r * r
                })
                .sum();
        }
    }

    /// Squared distance from the table's query to one compressed vector.
    #[inline]
    pub fn table_distance(&self, table: &[f32], codes: &[u8]) -> f32 {
        let mut acc = 0f32;
        for s in 0..self.m {
            acc += table[s * self.codes_per_sub + codes[s] as usize];
        }
        acc
    }

    /// Encodes a batch of vectors in parallel (`n x d` in, `n x m` out).
    pub fn encode_batch(&self, vectors: &[f32], n: usize) -> Vec<u8> {
        assert_eq!(vectors.len(), n * self.d);
        let mut codes = vec![0u8; n * self.m];
        codes
            .par_chunks_mut(self.m)
            .enumerate()
            .for_each(|(i, out)| self.encode_into(&vectors[i * self.d..(i + 1) * self.d], out));
        codes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<f32> {
        let mut rng = stream_rng(seed, 9999);
        (0..n * d).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()
    }

    /// The lookup-table sum must equal the directly expanded distance to the
    /// reconstructed vector: both evaluate ||query - q(x)||^2.
    #[test]
    fn table_distance_matches_direct_expansion() {
        for d in [8usize, 10, 16] {
            let n = 300;
            let vectors = random_vectors(n, d, d as u64);
            let pq = PqCodebooks::train(&vectors, n, d, 4, 6, 11).unwrap();
            let codes = pq.encode_batch(&vectors, n);

            let query = &vectors[5 * d..6 * d];
            let mut table = vec![0f32; pq.sub_quantizers() * pq.codes_per_sub()];
            pq.lookup_table_into(query, &mut table);

            let mut recon = vec![0f32; d];
            for i in (0..n).step_by(37) {
                let code = &codes[i * pq.sub_quantizers()..(i + 1) * pq.sub_quantizers()];
                pq.reconstruct_into(code, &mut recon);
                let direct: f32 = query
                    .iter()
                    .zip(&recon)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let via_table = pq.table_distance(&table, code);
                let scale = direct.abs().max(1e-6);
                assert!(
                    (direct - via_table).abs() <= 1e-5 * scale,
                    "d={d} i={i}: direct {direct} vs table {via_table}"
                );
            }
        }
    }

    /// Quantization must beat the trivial all-zeros reconstruction.
    #[test]
    fn reconstruction_reduces_error() {
        let (n, d) = (400, 12);
        let vectors = random_vectors(n, d, 3);
        let pq = PqCodebooks::train(&vectors, n, d, 3, 8, 5).unwrap();
        let codes = pq.encode_batch(&vectors, n);

        let mut recon = vec![0f32; d];
        let mut err = 0f64;
        let mut base = 0f64;
        for i in 0..n {
            pq.reconstruct_into(&codes[i * 3..(i + 1) * 3], &mut recon);
            for j in 0..d {
                let v = vectors[i * d + j];
                err += ((v - recon[j]) as f64).powi(2);
                base += (v as f64).powi(2);
            }
        }
        assert!(err < 0.2 * base, "quantization error {err} vs baseline {base}");
    }

    /// Dimensions that do not divide evenly are padded; distances must still
    /// be consistent between encode and lookup paths.
    #[test]
    fn uneven_dimension_is_padded() {
        let (n, d, m) = (200, 7, 3);
        let vectors = random_vectors(n, d, 8);
        let pq = PqCodebooks::train(&vectors, n, d, m, 5, 2).unwrap();
        assert_eq!(pq.sub_dim(), 3); // ceil(7 / 3)
        let codes = pq.encode_batch(&vectors, n);
        let mut table = vec![0f32; m * pq.codes_per_sub()];
        pq.lookup_table_into(&vectors[..d], &mut table);
        let dist = pq.table_distance(&table, &codes[..m]);
        assert!(dist.is_finite());
    }

    #[test]
    fn rejects_bad_geometry() {
        let vectors = random_vectors(10, 4, 1);
        assert!(PqCodebooks::train(&vectors, 10, 4, 0, 8, 1).is_err());
        assert!(PqCodebooks::train(&vectors, 10, 4, 5, 8, 1).is_err());
        assert!(PqCodebooks::train(&vectors, 10, 4, 2, 0, 1).is_err());
        assert!(PqCodebooks::train(&vectors, 10, 4, 2, 9, 1).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let vectors = random_vectors(150, 8, 4);
        let a = PqCodebooks::train(&vectors, 150, 8, 4, 6, 77).unwrap();
        let b = PqCodebooks::train(&vectors, 150, 8, 4, 6, 77).unwrap();
        assert_eq!(a, b);
    }
}
