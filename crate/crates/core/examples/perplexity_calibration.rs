//! Show the per-row bandwidth search hitting its perplexity target and the
//! global normalization of the symmetrized affinity matrix.
//!
//! Usage: `cargo run --release --example perplexity_calibration`

use tsne_rs::{affinity, knn, synth};

fn main() -> tsne_rs::Result<()> {
    // One row: squared distances to 64 neighbors at wildly different scales.
    let distances: Vec<f64> = (0..64).map(|i| 0.5 + 3.0 * (i as f64).sqrt()).collect();
    println!("single row, 64 neighbors:");
    for perplexity in [2.0, 5.0, 10.0, 20.0, 40.0] {
        let row = affinity::calibrate_row(&distances, perplexity)?;
        let entropy: f64 = -row
            .conditional
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>();
        println!(
            "  target {perplexity:5.1} -> achieved 2^H = {:8.4}  (bandwidth sigma = {:.4})",
            entropy.exp2(),
            row.sigma
        );
    }

    // Whole matrix: symmetrized affinities over a k-NN graph sum to one and
    // stay within the doubled-support bound.
    let dataset = synth::clustered_dataset(3000, 20, 6, 1.0, 11);
    let graph = knn::knn_exact(&dataset.data, 48)?;
    let p = affinity::affinities_from_knn(&graph, 15.0)?;
    println!(
        "symmetrized matrix over 3000 points, k = 48: total mass {:.9}, {} stored entries (bound {})",
        p.sum(),
        p.matrix().nnz(),
        2 * 3000 * 48
    );
    Ok(())
}
