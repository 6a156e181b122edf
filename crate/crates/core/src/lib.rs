//! Parallel Barnes-Hut t-SNE for two-dimensional embeddings.
//!
//! This crate embeds high-dimensional point sets into 2-D by minimizing the
//! Kullback-Leibler divergence between a sparse Gaussian neighborhood
//! distribution in the input space and a Student-t distribution in the
//! embedding. The expensive stages are replaced by controllable
//! approximations, each with an exact counterpart used for validation:
//!
//! * **Neighbor search** — brute-force exact k-NN, or an inverted-file index
//!   with product quantization ([`knn`]) whose probe count trades recall for
//!   speed.
//! * **Repulsive forces** — a quadtree with Barnes-Hut opening criterion
//!   ([`quadtree`], [`forces`]); `theta = 0` degrades gracefully to the exact
//!   all-pairs sum.
//! * **Attractive forces** — a sparse-matrix decomposition that matches the
//!   naive edge-by-edge summation ([`forces`]).
//!
//! Runs are deterministic: a fixed seed produces bitwise-identical embeddings
//! regardless of worker-thread count, because parallel stages only ever write
//! per-point slots and every global reduction is performed sequentially.
//!
//! # Quick start
//!
//! ```
//! use tsne_rs::{config::TsneConfig, optimizer, synth};
//!
//! let dataset = synth::clustered_dataset(200, 10, 4, 1.0, 7);
//! let config = TsneConfig {
//!     perplexity: 10.0,
//!     k_neighbors: 32,
//!     max_iters: 50,
//!     exaggeration_iters: 20,
//!     ..TsneConfig::default()
//! };
//! let result = optimizer::run(&dataset.data, &config).unwrap();
//! assert_eq!(result.embedding.coords.len(), 200 * 2);
//! ```

pub mod affinity;
pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod forces;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod optimizer;
pub mod quadtree;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod synth;

pub use config::{AnnMode, TsneConfig};
pub use data::{DataMatrix, Embedding, LabeledDataset};
pub use error::{Result, TsneError};
pub use scalar::Scalar;
