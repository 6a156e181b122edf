//! Embed a synthetic clustered dataset end to end and score the result.
//!
//! Generates Gaussian blobs, runs the full pipeline with exact neighbor
//! search, and reports the divergence, how well a k-means clustering of the
//! 2-D embedding recovers the generating labels, and stage timings. Writes
//! the embedding to `synth_embedding.svg` in the working directory.
//!
//! Usage: `cargo run --release --example synth_embed [n] [clusters]`

use tsne_rs::{io, metrics, optimizer, synth, TsneConfig};

fn main() -> tsne_rs::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(2000, |a| a.parse().expect("n"));
    let clusters: usize = args.next().map_or(5, |a| a.parse().expect("clusters"));

    let dataset = synth::clustered_dataset(n, 30, clusters, 1.0, 42);
    let config = TsneConfig {
        perplexity: 20.0,
        k_neighbors: 64,
        max_iters: 600,
        exaggeration_iters: 150,
        ..TsneConfig::default()
    };

    let run = optimizer::run(&dataset.data, &config)?;
    let labels = dataset.labels.as_deref().unwrap();
    let accuracy = metrics::kmeans_label_accuracy(&run.embedding.coords, labels, clusters, 7)?;
    let agreement = metrics::nn_label_agreement(&run.embedding.coords, labels)?;

    println!("embedded {n} points ({clusters} clusters) in {:.1}s", run.timings.total_ms / 1e3);
    println!("  final divergence      {:.4}", run.final_kl);
    println!("  k-means label recovery {accuracy:.3}");
    println!("  1-NN label agreement   {agreement:.3}");
    println!(
        "  stage ms: knn {:.0}, affinity {:.0}, optimizer loop {:.0}",
        run.timings.knn_ms, run.timings.affinity_ms, run.timings.loop_ms
    );

    io::plot_svg(
        std::path::Path::new("synth_embedding.svg"),
        &run.embedding.coords,
        Some(labels),
    )?;
    println!("wrote synth_embedding.svg");
    Ok(())
}
