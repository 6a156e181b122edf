//! Independent 64-bit oracles shared by the integration tests. Everything
//! here is written from the defining formulas as plain loops, deliberately
//! sharing no code with the library paths under test.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random planar cloud in `[-scale, scale]^2`.
pub fn random_coords(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Direct quadratic evaluation of the repulsive field: returns the
/// normalizer `Z = sum_{k != l} w_kl` and, per point, the normalized force
/// `-(1/Z) * sum_j w_ij^2 (y_i - y_j)` with `w = 1/(1 + d^2)`.
pub fn direct_repulsion(coords: &[f64]) -> (Vec<f64>, f64) {
    let n = coords.len() / 2;
    let mut raw = vec![0f64; 2 * n];
    let mut z = 0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = coords[2 * i] - coords[2 * j];
            let dy = coords[2 * i + 1] - coords[2 * j + 1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            z += w;
            raw[2 * i] += w * w * dx;
            raw[2 * i + 1] += w * w * dy;
        }
    }
    let force = raw.iter().map(|f| -f / z).collect();
    (force, z)
}

/// KL divergence of the Student-t similarities from a dense `n x n`
/// affinity matrix (row-major, zero diagonal), straight from the
/// definition.
pub fn kl_reference(p_dense: &[f64], coords: &[f64]) -> f64 {
    let n = coords.len() / 2;
    assert_eq!(p_dense.len(), n * n);
    let mut z = 0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = coords[2 * i] - coords[2 * j];
            let dy = coords[2 * i + 1] - coords[2 * j + 1];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    let mut kl = 0f64;
    for i in 0..n {
        for j in 0..n {
            let p = p_dense[i * n + j];
            if i == j || p <= 0.0 {
                continue;
            }
            let dx = coords[2 * i] - coords[2 * j];
            let dy = coords[2 * i + 1] - coords[2 * j + 1];
            let q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
            kl += p * (p / q).ln();
        }
    }
    kl
}

/// Attractive force by naive summation over stored entries:
/// `sum_j p_ij w_ij (y_i - y_j)`.
pub fn naive_attraction(triplets: &[(usize, usize, f64)], coords: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0f64; 2 * n];
    for &(i, j, p) in triplets {
        let dx = coords[2 * i] - coords[2 * j];
        let dy = coords[2 * i + 1] - coords[2 * j + 1];
        let w = 1.0 / (1.0 + dx * dx + dy * dy);
        out[2 * i] += p * w * dx;
        out[2 * i + 1] += p * w * dy;
    }
    out
}

/// Shannon entropy in bits, from the definition.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Locates the MNIST idx files: `TSNE_MNIST_DIR`, then `data/mnist` under
/// the workspace root, then a `data/mnist` sibling of the workspace.
pub fn mnist_dir() -> Option<PathBuf> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Ok(dir) = std::env::var("TSNE_MNIST_DIR") {
        candidates.push(PathBuf::from(dir));
    }
    let workspace = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .ok()?;
    candidates.push(workspace.join("data/mnist"));
    candidates.push(workspace.join("../data/mnist"));
    candidates
        .into_iter()
        .find(|dir| dir.join("train-images-idx3-ubyte").exists())
}
