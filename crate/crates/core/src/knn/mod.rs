//! Nearest-neighbor search: exact brute force and an inverted-file index
//! with product-quantized residuals.
//!
//! The approximate index follows the classic two-level scheme: a coarse
//! k-means quantizer partitions the dataset into inverted lists, and each
//! point's residual from its coarse centroid is product-quantized. A query
//! probes the `tau` nearest lists and ranks candidates by asymmetric distance
//! (uncompressed query against compressed points). Raising `tau` trades speed
//! for recall and reaches the whole index at `tau = centroid count`.
//!
//! All returned distances are **squared** Euclidean — exact for
//! [`knn_exact`], quantizer approximations for [`ann_search`] (exact again
//! with [`SearchOptions::rerank`]).

pub(crate) mod kmeans;
mod pq;

pub use pq::PqCodebooks;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Result, TsneError};
use crate::rng::{stream_rng, STREAM_COARSE_KMEANS};
use crate::scalar::Scalar;

/// Squared Euclidean distance with four independent accumulators so the
/// compiler can vectorize the reduction. The lane split is fixed, so results
/// are deterministic.
pub(crate) fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (lane, slot) in acc.iter_mut().enumerate() {
            let idx = i * 4 + lane;
            let diff = a[idx] - b[idx];
            *slot = *slot + diff * diff;
        }
    }
    for idx in chunks * 4..a.len() {
        let diff = a[idx] - b[idx];
        acc[0] = acc[0] + diff * diff;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn dist2_f32(a: &[f32], b: &[f32]) -> f32 {
    dist2::<f32>(a, b)
}

/// k nearest neighbors of every point: row `i` holds `k` neighbor ids
/// (ascending by distance, ties to the lower id, never `i` itself) and the
/// matching squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph<T> {
    n: usize,
    k: usize,
    indices: Vec<u32>,
    distances: Vec<T>,
}

impl<T: Scalar> KnnGraph<T> {
    fn new(n: usize, k: usize, indices: Vec<u32>, distances: Vec<T>) -> Self {
        debug_assert_eq!(indices.len(), n * k);
        debug_assert_eq!(distances.len(), n * k);
        KnnGraph {
            n,
            k,
            indices,
            distances,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbor ids and squared distances of row `i`.
    pub fn neighbors(&self, i: usize) -> (&[u32], &[T]) {
        let lo = i * self.k;
        let hi = lo + self.k;
        (&self.indices[lo..hi], &self.distances[lo..hi])
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn distances(&self) -> &[T] {
        &self.distances
    }
}

/// Candidate ordered so a max-heap keeps the worst on top: greater distance
/// is greater, equal distances order by id (evicting the higher id first).
#[derive(PartialEq)]
struct Cand<T>(T, u32);

impl<T: Scalar> Eq for Cand<T> {}

impl<T: Scalar> PartialOrd for Cand<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Cand<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Distances are finite by construction.
        self.0
            .partial_cmp(&other.0)
            .expect("finite distance")
            .then(self.1.cmp(&other.1))
    }
}

/// Pushes into a heap bounded at `k` elements, evicting the worst.
fn bounded_push<T: Scalar>(heap: &mut BinaryHeap<Cand<T>>, k: usize, cand: Cand<T>) {
    if heap.len() < k {
        heap.push(cand);
    } else if let Some(worst) = heap.peek() {
        if cand < *worst {
            heap.pop();
            heap.push(cand);
        }
    }
}

/// Drains a candidate heap into `(ids, distances)` slices sorted ascending.
fn drain_sorted<T: Scalar>(heap: &mut BinaryHeap<Cand<T>>, ids: &mut [u32], dists: &mut [T]) {
    debug_assert_eq!(heap.len(), ids.len());
    for slot in (0..ids.len()).rev() {
        let Cand(d, id) = heap.pop().expect("heap holds k candidates");
        ids[slot] = id;
        dists[slot] = d;
    }
}

/// Exact k nearest neighbors by brute force, parallel over query points.
///
/// The `O(n^2 d)` cost makes this the reference implementation; it is also
/// the practical choice up to tens of thousands of points.
pub fn knn_exact<T: Scalar>(data: &DataMatrix<T>, k: usize) -> Result<KnnGraph<T>> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(TsneError::InvalidParameter(format!(
            "k must lie in 1..{n}, got {k}"
        )));
    }
    let mut indices = vec![0u32; n * k];
    let mut distances = vec![T::zero(); n * k];

    indices
        .par_chunks_mut(k)
        .zip(distances.par_chunks_mut(k))
        .enumerate()
        .for_each(|(i, (ids, dists))| {
            let query = data.row(i);
            let mut heap: BinaryHeap<Cand<T>> = BinaryHeap::with_capacity(k + 1);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = dist2(query, data.row(j));
                bounded_push(&mut heap, k, Cand(d, j as u32));
            }
            drain_sorted(&mut heap, ids, dists);
        });

    Ok(KnnGraph::new(n, k, indices, distances))
}

/// Fraction of true neighbors the approximate graph recovered, averaged over
/// rows. Both graphs must cover the same points with the same `k`.
pub fn recall<T: Scalar>(approx: &KnnGraph<T>, exact: &KnnGraph<T>) -> f64 {
    assert_eq!(approx.n(), exact.n());
    assert_eq!(approx.k(), exact.k());
    let k = exact.k();
    let mut hits = 0usize;
    for i in 0..exact.n() {
        let (approx_ids, _) = approx.neighbors(i);
        let (exact_ids, _) = exact.neighbors(i);
        let mut sorted: Vec<u32> = approx_ids.to_vec();
        sorted.sort_unstable();
        hits += exact_ids
            .iter()
            .filter(|id| sorted.binary_search(id).is_ok())
            .count();
    }
    hits as f64 / (exact.n() * k) as f64
}

/// Inverted-file index with product-quantized residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnIndex {
    n: usize,
    d: usize,
    /// Coarse centroids, `n_centroids x d` row-major.
    centroids: Vec<f32>,
    n_centroids: usize,
    pq: PqCodebooks,
    /// Point ids per coarse cell, ascending.
    list_ids: Vec<Vec<u32>>,
    /// Code bytes per coarse cell, `len * m`, aligned with `list_ids`.
    list_codes: Vec<Vec<u8>>,
    /// Centroid-side halves of the decomposed lookup tables,
    /// `n_centroids x (m * codes_per_sub)` row-major. Derived from the
    /// centroids and codebooks; rebuilt on load rather than serialized.
    list_bias: Vec<f64>,
}

/// Precomputes `||center_c||^2 + 2 <coarse_s, center_c>` for every coarse
/// cell, the probe-independent part of the asymmetric-distance tables.
fn build_list_bias(centroids: &[f32], n_centroids: usize, d: usize, pq: &PqCodebooks) -> Vec<f64> {
    let stride = pq.sub_quantizers() * pq.codes_per_sub();
    let mut bias = vec![0f64; n_centroids * stride];
    bias.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(c, out)| pq.center_bias_into(&centroids[c * d..(c + 1) * d], out));
    bias
}

/// Knobs for [`ann_search_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOptions {
    /// Treat query row `i` as indexed point `i` and never return it for
    /// itself. Requires the query set to be the indexed set.
    pub exclude_self: bool,
    /// Re-score the top `4k` quantized candidates with exact distances
    /// against the query rows. Only valid together with `exclude_self`,
    /// since only then are the query rows the indexed vectors.
    pub rerank: bool,
}

/// Default number of coarse cells: `round(sqrt(n))`.
pub fn default_centroid_count(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// Default sub-quantizer count: half the dimensions, capped at 32.
pub fn default_sub_quantizers(d: usize) -> usize {
    (d / 2).clamp(1, 32)
}

/// Trains an index with `round(sqrt(n))` coarse cells.
pub fn ann_train(data: &DataMatrix<f32>, m: usize, bits: u8, seed: u64) -> Result<AnnIndex> {
    ann_train_with(data, m, bits, seed, default_centroid_count(data.n()))
}

/// Trains an index with an explicit coarse-cell count.
pub fn ann_train_with(
    data: &DataMatrix<f32>,
    m: usize,
    bits: u8,
    seed: u64,
    n_centroids: usize,
) -> Result<AnnIndex> {
    let (n, d) = (data.n(), data.d());
    if n_centroids == 0 || n_centroids > n {
        return Err(TsneError::InvalidParameter(format!(
            "centroid count must lie in 1..={n}, got {n_centroids}"
        )));
    }

    let mut rng = stream_rng(seed, STREAM_COARSE_KMEANS);
    let coarse = kmeans::train(data.values(), n, d, n_centroids, &mut rng, 25);

    // Residual of every point from its coarse centroid.
    let mut residuals = vec![0f32; n * d];
    residuals
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, out)| {
            let c = coarse.assignments[i] as usize;
            let point = data.row(i);
            let center = &coarse.centroids[c * d..(c + 1) * d];
            for j in 0..d {
                out[j] = point[j] - center[j];
            }
        });

    let pq = PqCodebooks::train(&residuals, n, d, m, bits, seed)?;
    let codes = pq.encode_batch(&residuals, n);

    let mut list_ids: Vec<Vec<u32>> = vec![Vec::new(); n_centroids];
    let mut list_codes: Vec<Vec<u8>> = vec![Vec::new(); n_centroids];
    for i in 0..n {
        let c = coarse.assignments[i] as usize;
        list_ids[c].push(i as u32);
        list_codes[c].extend_from_slice(&codes[i * m..(i + 1) * m]);
    }

    let list_bias = build_list_bias(&coarse.centroids, n_centroids, d, &pq);

    Ok(AnnIndex {
        n,
        d,
        centroids: coarse.centroids,
        n_centroids,
        pq,
        list_ids,
        list_codes,
        list_bias,
    })
}

impl AnnIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_centroids(&self) -> usize {
        self.n_centroids
    }

    pub fn quantizer(&self) -> &PqCodebooks {
        &self.pq
    }
}

/// Searches with default options (no self-exclusion, no re-ranking).
pub fn ann_search(
    index: &AnnIndex,
    queries: &DataMatrix<f32>,
    k: usize,
    tau: usize,
) -> Result<KnnGraph<f32>> {
    ann_search_with(index, queries, k, tau, SearchOptions::default())
}

/// Probes the `tau` nearest inverted lists per query and ranks candidates by
/// asymmetric quantized distance.
///
/// When the probed lists hold fewer than `k` candidates the probe count
/// doubles (up to every list) so each row always returns exactly `k`
/// neighbors.
pub fn ann_search_with(
    index: &AnnIndex,
    queries: &DataMatrix<f32>,
    k: usize,
    tau: usize,
    opts: SearchOptions,
) -> Result<KnnGraph<f32>> {
    let nq = queries.n();
    let d = index.d;
    if queries.d() != d {
        return Err(TsneError::InvalidParameter(format!(
            "query dimension {} does not match index dimension {d}",
            queries.d()
        )));
    }
    if tau == 0 || tau > index.n_centroids {
        return Err(TsneError::InvalidParameter(format!(
            "tau must lie in 1..={}, got {tau}",
            index.n_centroids
        )));
    }
    let max_k = if opts.exclude_self { index.n - 1 } else { index.n };
    if k == 0 || k > max_k {
        return Err(TsneError::InvalidParameter(format!(
            "k must lie in 1..={max_k}, got {k}"
        )));
    }
    if opts.exclude_self && nq != index.n {
        return Err(TsneError::InvalidParameter(format!(
            "self-exclusion requires the {} indexed points as queries, got {nq}",
            index.n
        )));
    }
    if opts.rerank && !opts.exclude_self {
        return Err(TsneError::InvalidParameter(
            "re-ranking needs the original vectors, so it requires self-exclusion mode".into(),
        ));
    }

    let m = index.pq.sub_quantizers();
    let table_len = m * index.pq.codes_per_sub();
    let pool = if opts.rerank { 4 * k } else { k };

    let mut indices = vec![0u32; nq * k];
    let mut distances = vec![0f32; nq * k];

    indices
        .par_chunks_mut(k)
        .zip(distances.par_chunks_mut(k))
        .enumerate()
        .for_each(|(qi, (ids, dists))| {
            let query = queries.row(qi);
            let exclude = if opts.exclude_self { qi as u32 } else { u32::MAX };

            // Probe order: every coarse cell sorted by distance to the query.
            let mut order: Vec<(f32, u32)> = (0..index.n_centroids)
                .map(|c| {
                    (
                        dist2_f32(query, &index.centroids[c * d..(c + 1) * d]),
                        c as u32,
                    )
                })
                .collect();
            order.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distance"));

            // Widen until the probed lists can satisfy k.
            let mut probes = tau;
            loop {
                let available: usize = order[..probes]
                    .iter()
                    .map(|&(_, c)| index.list_ids[c as usize].len())
                    .sum::<usize>()
                    - order[..probes]
                        .iter()
                        .any(|&(_, c)| {
                            index.list_ids[c as usize].binary_search(&exclude).is_ok()
                        }) as usize;
                if available >= pool.min(max_k) || probes == index.n_centroids {
                    break;
                }
                probes = (probes * 2).min(index.n_centroids);
            }

            // Decomposed asymmetric-distance tables: the query-center dot
            // products are probe-independent, the codebook norms and
            // coarse-center dot products are precomputed per cell, so each
            // probed cell only pays for residual sub-norms plus one add per
            // table entry.
            let mut query_dot = vec![0f64; table_len];
            index.pq.query_dot_into(query, &mut query_dot);
            let m_subs = index.pq.sub_quantizers();
            let cps = index.pq.codes_per_sub();

            let mut sub_norms = vec![0f64; m_subs];
            let mut table = vec![0f32; table_len];
            let mut heap: BinaryHeap<Cand<f32>> = BinaryHeap::with_capacity(pool + 1);
            for &(_, c) in &order[..probes] {
                let c = c as usize;
                let center = &index.centroids[c * d..(c + 1) * d];
                index.pq.residual_sub_norms_into(query, center, &mut sub_norms);
                let bias = &index.list_bias[c * table_len..(c + 1) * table_len];
                for (s, &norm) in sub_norms.iter().enumerate() {
                    for e in s * cps..(s + 1) * cps {
                        table[e] = (norm + query_dot[e] + bias[e]) as f32;
                    }
                }
                let ids_in_list = &index.list_ids[c];
                let codes_in_list = &index.list_codes[c];
                for (slot, &id) in ids_in_list.iter().enumerate() {
                    if id == exclude {
                        continue;
                    }
                    let dist = index
                        .pq
                        .table_distance(&table, &codes_in_list[slot * m..(slot + 1) * m]);
                    bounded_push(&mut heap, pool, Cand(dist, id));
                }
            }

            if opts.rerank {
                // Re-score the surviving pool exactly; queries are the
                // indexed vectors in this mode.
                let mut exact: BinaryHeap<Cand<f32>> = BinaryHeap::with_capacity(k + 1);
                for Cand(_, id) in heap.drain() {
                    let dist = dist2_f32(query, queries.row(id as usize));
                    bounded_push(&mut exact, k, Cand(dist, id));
                }
                drain_sorted(&mut exact, ids, dists);
            } else {
                // The pool may exceed k only in rerank mode; here it is k.
                drain_sorted(&mut heap, ids, dists);
            }
        });

    Ok(KnnGraph::new(nq, k, indices, distances))
}

const INDEX_MAGIC: &[u8; 8] = b"TSNEIVF1";

impl AnnIndex {
    /// Serializes the index. Little-endian layout:
    ///
    /// ```text
    /// magic "TSNEIVF1"
    /// u32: n, d, n_centroids, m, bits, codes_per_sub
    /// f32 * n_centroids * d          coarse centroids
    /// f32 * m * codes_per_sub * dsub product-quantizer centers
    /// per cell: u32 len, u32 * len point ids, u8 * len * m codes
    /// ```
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(INDEX_MAGIC)?;
        for v in [
            self.n as u32,
            self.d as u32,
            self.n_centroids as u32,
            self.pq.sub_quantizers() as u32,
            self.pq.bits() as u32,
            self.pq.codes_per_sub() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.centroids {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.pq.centers() {
            w.write_all(&v.to_le_bytes())?;
        }
        for c in 0..self.n_centroids {
            w.write_all(&(self.list_ids[c].len() as u32).to_le_bytes())?;
            for id in &self.list_ids[c] {
                w.write_all(&id.to_le_bytes())?;
            }
            w.write_all(&self.list_codes[c])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Deserializes an index written by [`AnnIndex::save`], validating the
    /// magic, geometry, and list sizes.
    pub fn load(path: &Path) -> Result<AnnIndex> {
        let display = path.display().to_string();
        let bad = |message: String| TsneError::Malformed {
            path: display.clone(),
            message,
        };
        let mut r = BufReader::new(File::open(path)?);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| bad("file shorter than its magic header".into()))?;
        if &magic != INDEX_MAGIC {
            return Err(bad(format!(
                "bad magic {magic:?}; not an index file or an incompatible version"
            )));
        }

        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>, what: &str| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|_| TsneError::Malformed {
                path: display.clone(),
                message: format!("truncated while reading {what}"),
            })?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let n = read_u32(&mut r, "point count")? as usize;
        let d = read_u32(&mut r, "dimension")? as usize;
        let n_centroids = read_u32(&mut r, "centroid count")? as usize;
        let m = read_u32(&mut r, "sub-quantizer count")? as usize;
        let bits = read_u32(&mut r, "bit width")?;
        let codes_per_sub = read_u32(&mut r, "codes per sub-quantizer")? as usize;
        if d == 0 || n_centroids == 0 || n_centroids > n || bits > 8 {
            return Err(bad(format!(
                "implausible geometry: n={n} d={d} centroids={n_centroids} bits={bits}"
            )));
        }

        let read_f32s = |r: &mut BufReader<File>, count: usize, what: &str| -> Result<Vec<f32>> {
            let mut bytes = vec![0u8; count * 4];
            r.read_exact(&mut bytes).map_err(|_| TsneError::Malformed {
                path: display.clone(),
                message: format!("truncated while reading {what}"),
            })?;
            Ok(bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect())
        };
        let centroids = read_f32s(&mut r, n_centroids * d, "coarse centroids")?;
        let dsub = d.div_ceil(m.max(1));
        let centers = read_f32s(&mut r, m * codes_per_sub * dsub, "quantizer centers")?;
        let pq = PqCodebooks::from_parts(d, m, bits as u8, codes_per_sub, centers)?;

        let mut list_ids = Vec::with_capacity(n_centroids);
        let mut list_codes = Vec::with_capacity(n_centroids);
        let mut total = 0usize;
        for c in 0..n_centroids {
            let len = read_u32(&mut r, &format!("length of list {c}"))? as usize;
            total += len;
            if total > n {
                return Err(bad(format!("inverted lists hold more than {n} points")));
            }
            let mut ids = Vec::with_capacity(len);
            for i in 0..len {
                let id = read_u32(&mut r, &format!("id {i} of list {c}"))?;
                if id as usize >= n {
                    return Err(bad(format!("point id {id} out of range in list {c}")));
                }
                ids.push(id);
            }
            let mut codes = vec![0u8; len * m];
            r.read_exact(&mut codes).map_err(|_| TsneError::Malformed {
                path: display.clone(),
                message: format!("truncated while reading codes of list {c}"),
            })?;
            if let Some(bad_code) = codes.iter().position(|&b| b as usize >= codes_per_sub) {
                return Err(bad(format!(
                    "code byte {bad_code} of list {c} exceeds the codebook size"
                )));
            }
            list_ids.push(ids);
            list_codes.push(codes);
        }
        if total != n {
            return Err(bad(format!("inverted lists cover {total} of {n} points")));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after the last inverted list".into()));
        }

        let list_bias = build_list_bias(&centroids, n_centroids, d, &pq);

        Ok(AnnIndex {
            n,
            d,
            centroids,
            n_centroids,
            pq,
            list_ids,
            list_codes,
            list_bias,
        })
    }
}
