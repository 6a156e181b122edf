//! Sweep the tree-approximation knob and compare the repulsive field against
//! the exact quadratic sum: accuracy degrades and speed improves as theta
//! grows; theta = 0 reproduces the exact field to rounding.
//!
//! Usage: `cargo run --release --example barnes_hut_accuracy [n]`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsne_rs::forces::{self, GradientBuffers};
use tsne_rs::quadtree::QuadTree;

fn main() -> tsne_rs::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map_or(20_000, |a| a.parse().expect("n"));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coords: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-30.0..30.0)).collect();

    // Exact field, directly from the definition.
    let t = Instant::now();
    let mut z_exact = 0f64;
    let mut exact = vec![0f64; 2 * n];
    for i in 0..n {
        let (xi, yi) = (coords[2 * i], coords[2 * i + 1]);
        for j in 0..n {
            if j == i {
                continue;
            }
            let dx = xi - coords[2 * j];
            let dy = yi - coords[2 * j + 1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            z_exact += w;
            exact[2 * i] += w * w * dx;
            exact[2 * i + 1] += w * w * dy;
        }
    }
    let direct_s = t.elapsed().as_secs_f64();
    println!("n = {n}: direct quadratic sum {direct_s:.2}s");

    // Scale per-point errors by the typical force magnitude; individual
    // components cancel to near zero, which would make plain relative error
    // meaningless.
    let rms: f64 = (exact
        .chunks_exact(2)
        .map(|f| (f[0] * f[0] + f[1] * f[1]) / z_exact / z_exact)
        .sum::<f64>()
        / n as f64)
        .sqrt();

    let tree = QuadTree::build(&coords)?;
    for theta in [0.0, 0.2, 0.5, 0.8, 1.2] {
        let mut bufs = GradientBuffers::<f64>::new(n, 0);
        let t = Instant::now();
        let z = forces::repulsive_forces(&tree, &coords, theta, &mut bufs);
        let elapsed = t.elapsed().as_secs_f64();

        let mut worst = 0f64;
        let mut mean = 0f64;
        for (i, f) in bufs.repulsive.chunks_exact(2).enumerate() {
            let ex = -exact[2 * i] / z_exact;
            let ey = -exact[2 * i + 1] / z_exact;
            let err = ((f[0] - ex).powi(2) + (f[1] - ey).powi(2)).sqrt() / rms;
            worst = worst.max(err);
            mean += err;
        }
        mean /= n as f64;
        println!(
            "  theta {theta:.1}: {elapsed:6.3}s ({:5.1}x), force error mean {mean:.2e} / worst \
             {worst:.2e} of rms, normalizer error {:.2e}",
            direct_s / elapsed,
            (z - z_exact).abs() / z_exact
        );
    }
    Ok(())
}
