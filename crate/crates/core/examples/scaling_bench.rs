//! Run the doubling-size scaling benchmark on a reduced schedule and print
//! the per-stage table; per-iteration time should grow well under 4x per
//! doubling (the hallmark of the tree-based pipeline).
//!
//! Usage: `cargo run --release --example scaling_bench [base_n]`

use tsne_rs::bench::{self, BenchConfig};

fn main() -> tsne_rs::Result<()> {
    let base: usize = std::env::args()
        .nth(1)
        .map_or(2500, |a| a.parse().expect("base_n"));
    let config = BenchConfig {
        sizes: vec![base, base * 2, base * 4],
        iters: 200,
        exaggeration_iters: 60,
        ..BenchConfig::default()
    };
    let rows = bench::run_scaling(&config)?;
    print!("{}", bench::render_table(&rows));
    Ok(())
}
