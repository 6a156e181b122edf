//! Train the inverted-file product-quantization index, measure its recall
//! against brute force across probe widths, and round-trip it through disk.
//!
//! Usage: `cargo run --release --example ann_index`

use tsne_rs::knn::{self, SearchOptions};
use tsne_rs::synth;

fn main() -> tsne_rs::Result<()> {
    let dataset = synth::clustered_dataset(10_000, 50, 4, 1.0, 42);
    let data = &dataset.data;
    let k = 32;

    let exact = knn::knn_exact(data, k)?;
    let index = knn::ann_train(data, knn::default_sub_quantizers(data.d()), 8, 1)?;
    println!(
        "index: {} cells, {} sub-quantizers x {} codes",
        index.n_centroids(),
        index.quantizer().sub_quantizers(),
        index.quantizer().codes_per_sub()
    );

    let opts = SearchOptions {
        exclude_self: true,
        rerank: false,
    };
    println!("recall@{k} vs exact:");
    for tau in [1usize, 4, 10, 16, index.n_centroids()] {
        let t = std::time::Instant::now();
        let approx = knn::ann_search_with(&index, data, k, tau, opts)?;
        println!(
            "  tau {tau:3}: {:.3}  ({:.2}s)",
            knn::recall(&approx, &exact),
            t.elapsed().as_secs_f64()
        );
    }

    // Exact re-scoring of the quantized candidate pool trades a little time
    // for the ranking error of the codes.
    let reranked = knn::ann_search_with(
        &index,
        data,
        k,
        10,
        SearchOptions {
            exclude_self: true,
            rerank: true,
        },
    )?;
    println!("  tau  10 + exact re-scoring: {:.3}", knn::recall(&reranked, &exact));

    let dir = std::env::temp_dir().join("tsne_ann_index_example.ivfpq");
    index.save(&dir)?;
    let loaded = knn::AnnIndex::load(&dir)?;
    let a = knn::ann_search_with(&index, data, k, 10, opts)?;
    let b = knn::ann_search_with(&loaded, data, k, 10, opts)?;
    println!(
        "round-trip through {} reproduces searches: {}",
        dir.display(),
        a == b
    );
    std::fs::remove_file(&dir).ok();
    Ok(())
}
