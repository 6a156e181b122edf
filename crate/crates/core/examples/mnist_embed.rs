//! Embed raw MNIST pixels with the quantized-index pipeline.
//!
//! Expects the standard idx files (`train-images-idx3-ubyte` plus the
//! matching label file) in the directory given as the first argument, or in
//! `$TSNE_MNIST_DIR`, or in `./data/mnist`. Embeds a subset with approximate
//! neighbors and writes `mnist_embedding.svg` colored by digit.
//!
//! Usage: `cargo run --release --example mnist_embed [dir] [n]`

use std::path::PathBuf;

use tsne_rs::{io, metrics, optimizer, AnnMode, DataMatrix, TsneConfig};

fn main() -> tsne_rs::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("TSNE_MNIST_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"));
    let n: usize = args.next().map_or(10_000, |a| a.parse().expect("n"));

    let images = dir.join("train-images-idx3-ubyte");
    if !images.exists() {
        eprintln!(
            "no MNIST at {}; pass a directory holding train-images-idx3-ubyte \
             and train-labels-idx1-ubyte",
            dir.display()
        );
        std::process::exit(3);
    }

    let full = io::load_dataset(&images, None)?;
    let n = n.min(full.data.n());
    let data = DataMatrix::new(n, full.data.d(), full.data.values()[..n * full.data.d()].to_vec())?;
    let labels = full.labels.as_ref().map(|l| l[..n].to_vec());

    let config = TsneConfig {
        ann_mode: AnnMode::IvfPq,
        ..TsneConfig::default()
    };
    let run = optimizer::run(&data, &config)?;
    println!(
        "embedded {n} digits in {:.1}s: divergence {:.4} (knn {:.1}s, loop {:.1}s)",
        run.timings.total_ms / 1e3,
        run.final_kl,
        run.timings.knn_ms / 1e3,
        run.timings.loop_ms / 1e3
    );
    if let Some(ref labels) = labels {
        let agreement = metrics::nn_label_agreement(&run.embedding.coords, labels)?;
        println!("1-NN digit agreement in the embedding: {agreement:.3}");
    }

    io::plot_svg(
        std::path::Path::new("mnist_embedding.svg"),
        &run.embedding.coords,
        labels.as_deref(),
    )?;
    println!("wrote mnist_embedding.svg");
    Ok(())
}
