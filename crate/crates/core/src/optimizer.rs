//! Momentum gradient descent over embeddings, and the end-to-end pipeline.
//!
//! Each iteration rebuilds the quadtree, evaluates repulsive then attractive
//! forces, combines them into the gradient, and applies a gain-adjusted
//! momentum update followed by recentering. The first
//! `exaggeration_iters` iterations run against affinities scaled by the
//! exaggeration factor (with the lower initial momentum); the remaining
//! iterations use the untouched affinities, so leaving the exaggerated phase
//! restores them exactly.
//!
//! The divergence history is sampled every 50 iterations up to 4096 points
//! (exact normalizer) and every 250 above that (Barnes-Hut normalizer, so
//! those values carry the traversal's bias). Two extra samples are always
//! taken: 50 iterations after exaggeration ends, and at the last iteration.

use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::affinity::{self, SparseAffinities};
use crate::config::{AnnMode, TsneConfig};
use crate::data::{DataMatrix, Embedding};
use crate::error::{Result, TsneError};
use crate::forces::{self, GradientBuffers};
use crate::knn::{self, SearchOptions};
use crate::quadtree::QuadTree;
use crate::rng::{stream_rng, STREAM_INIT};
use crate::scalar::Scalar;

/// Standard deviation of the initial coordinate cloud.
const INIT_STD: f64 = 1e-4;
/// Divergence-history cadence for small instances (exact normalizer)...
const KL_CADENCE_EXACT: usize = 50;
/// ...and the instance size above which the sparse-support estimate and the
/// longer cadence take over.
const KL_EXACT_MAX_N: usize = 4096;
const KL_CADENCE_SPARSE: usize = 250;
/// Extra divergence sample this many iterations after exaggeration ends.
const POST_EXAGGERATION_SAMPLE: usize = 50;

/// Mutable optimizer state.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub embedding: Embedding<T>,
    /// Completed iterations.
    pub iter: usize,
    /// Largest gradient component of the latest step.
    pub last_max_grad: f64,
}

/// Wall-clock milliseconds per pipeline stage, accumulated over a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineTimings {
    pub knn_ms: f64,
    pub affinity_ms: f64,
    pub tree_ms: f64,
    pub repulsive_ms: f64,
    pub pq_ms: f64,
    pub attractive_ms: f64,
    pub apply_ms: f64,
    pub loop_ms: f64,
    pub total_ms: f64,
    pub iterations: usize,
}

/// A finished run: final embedding, divergence history, and stage timings.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub embedding: Embedding<T>,
    /// `(completed iterations, divergence)` samples, ascending.
    pub kl_history: Vec<(usize, f64)>,
    /// Divergence of the final embedding (the history's last entry).
    pub final_kl: f64,
    /// True when history values use the Barnes-Hut normalizer estimate
    /// instead of the exact quadratic sum.
    pub kl_is_estimate: bool,
    pub timings: PipelineTimings,
}

/// Draws the initial embedding: `n` points i.i.d. from a tight Gaussian
/// around the origin, from the seed's initialization stream.
pub fn initialize<T: Scalar>(n: usize, seed: u64) -> Embedding<T> {
    let mut rng = stream_rng(seed, STREAM_INIT);
    let dist = Normal::new(0.0, INIT_STD).expect("fixed parameters");
    let coords: Vec<T> = (0..2 * n)
        .map(|_| T::from_f64(dist.sample(&mut rng)))
        .collect();
    Embedding::new(coords).expect("finite init")
}

/// One gradient step against the given (possibly exaggerated) affinities.
///
/// Stage order: tree build, repulsive traversal, attractive weights and
/// decomposition, gradient combination, then the gain/momentum coordinate
/// update and recentering. Returns the step's maximum gradient magnitude;
/// fails with [`TsneError::Diverged`] if any coordinate leaves the finite
/// range.
pub fn step<T: Scalar>(
    state: &mut TrainState<T>,
    p: &SparseAffinities<T>,
    momentum: f64,
    config: &TsneConfig,
    bufs: &mut GradientBuffers<T>,
    timings: &mut PipelineTimings,
) -> Result<f64> {
    let coords = &mut state.embedding.coords;
    let n = coords.len() / 2;

    let t0 = Instant::now();
    let tree = QuadTree::build(coords)?;
    let t1 = Instant::now();
    forces::repulsive_forces(&tree, coords, config.theta, bufs);
    let t2 = Instant::now();
    forces::compute_pq(p, coords, bufs);
    let t3 = Instant::now();
    forces::attractive_forces(p, coords, bufs);
    forces::combine_gradient(bufs);
    let t4 = Instant::now();

    let max_grad = bufs.max_gradient();

    // Gain-adjusted momentum update. A gain grows linearly while the
    // gradient points against the current velocity and decays
    // multiplicatively while it rides along (linear growth keeps the gains
    // bounded over long misaligned stretches, where exponential growth
    // ejects points); the exact-zero product leaves the gain alone.
    let lr = config.learning_rate;
    let velocity = &mut state.embedding.velocity;
    let gains = &mut state.embedding.gains;
    let mut mean = [0f64; 2];
    for e in 0..2 * n {
        let g = bufs.gradient[e].as_f64();
        let v = velocity[e].as_f64();
        let mut gain = gains[e].as_f64();
        let aligned = g * v;
        if aligned < 0.0 {
            gain += 0.2;
        } else if aligned > 0.0 {
            gain *= 0.8;
        }
        gain = gain.max(0.01);
        let new_v = momentum * v - lr * gain * g;
        let new_c = coords[e].as_f64() + new_v;
        gains[e] = T::from_f64(gain);
        velocity[e] = T::from_f64(new_v);
        coords[e] = T::from_f64(new_c);
        mean[e % 2] += new_c;
    }

    // Keep the cloud centered; the objective is translation-invariant, so
    // this only pins the representation.
    mean[0] /= n as f64;
    mean[1] /= n as f64;
    for e in 0..2 * n {
        coords[e] = T::from_f64(coords[e].as_f64() - mean[e % 2]);
    }

    if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
        let _ = bad;
        return Err(TsneError::Diverged {
            iter: state.iter,
            max_grad,
            learning_rate: lr,
        });
    }

    let t5 = Instant::now();
    timings.tree_ms += ms(t1 - t0);
    timings.repulsive_ms += ms(t2 - t1);
    timings.pq_ms += ms(t3 - t2);
    timings.attractive_ms += ms(t4 - t3);
    timings.apply_ms += ms(t5 - t4);
    timings.iterations += 1;

    state.iter += 1;
    state.last_max_grad = max_grad;
    Ok(max_grad)
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs the optimizer over prebuilt affinities.
pub fn run_with_affinities<T: Scalar>(
    p: &SparseAffinities<T>,
    config: &TsneConfig,
) -> Result<RunResult<T>> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = PipelineTimings::default();
    let result = optimize(p, config, &mut timings, start)?;
    Ok(result)
}

/// Full pipeline: neighbor search, affinity construction, optimization.
pub fn run(data: &DataMatrix<f32>, config: &TsneConfig) -> Result<RunResult<f32>> {
    config.validate()?;
    let n = data.n();
    if config.k_neighbors >= n {
        return Err(TsneError::InvalidParameter(format!(
            "k_neighbors ({}) must stay below the {n} data points",
            config.k_neighbors
        )));
    }

    let start = Instant::now();
    let mut timings = PipelineTimings::default();

    let graph = match config.ann_mode {
        AnnMode::Exact => knn_timed(&mut timings, || knn::knn_exact(data, config.k_neighbors)),
        AnnMode::IvfPq => knn_timed(&mut timings, || {
            let m = knn::default_sub_quantizers(data.d());
            let index = knn::ann_train(data, m, 8, config.seed)?;
            let tau = config.tau_probes.min(index.n_centroids());
            if tau < config.tau_probes {
                log::debug!(
                    "clamping tau from {} to the {} coarse cells",
                    config.tau_probes,
                    tau
                );
            }
            let opts = SearchOptions {
                exclude_self: true,
                rerank: false,
            };
            knn::ann_search_with(&index, data, config.k_neighbors, tau, opts)
        }),
    }
    .map_err(|e| e.in_stage("neighbor search"))?;

    let t_aff = Instant::now();
    let p = affinity::affinities_from_knn(&graph, config.perplexity)
        .map_err(|e| e.in_stage("affinity construction"))?;
    timings.affinity_ms = ms(t_aff.elapsed());

    optimize(&p, config, &mut timings, start).map_err(|e| e.in_stage("optimization"))
}

fn knn_timed<F, G>(timings: &mut PipelineTimings, f: F) -> Result<G>
where
    F: FnOnce() -> Result<G>,
{
    let t = Instant::now();
    let out = f()?;
    timings.knn_ms = ms(t.elapsed());
    Ok(out)
}

/// Core optimization loop shared by both entry points.
fn optimize<T: Scalar>(
    p: &SparseAffinities<T>,
    config: &TsneConfig,
    timings: &mut PipelineTimings,
    start: Instant,
) -> Result<RunResult<T>> {
    let n = p.n();
    if n < 2 {
        return Err(TsneError::InvalidParameter(format!(
            "cannot embed {n} points"
        )));
    }

    let exaggerated = affinity::exaggerate(p, config.exaggeration_factor)?;
    let mut state = TrainState {
        embedding: initialize(n, config.seed),
        iter: 0,
        last_max_grad: 0.0,
    };
    let mut bufs = GradientBuffers::new(n, p.matrix().nnz());

    let kl_exact = n <= KL_EXACT_MAX_N;
    let cadence = if kl_exact {
        KL_CADENCE_EXACT
    } else {
        KL_CADENCE_SPARSE
    };
    let post_exagg = config.exaggeration_iters + POST_EXAGGERATION_SAMPLE;
    let mut kl_history: Vec<(usize, f64)> = Vec::new();

    let loop_start = Instant::now();
    for it in 0..config.max_iters {
        let (phase_p, momentum) = if it < config.exaggeration_iters {
            (&exaggerated, config.momentum_initial)
        } else {
            (p, config.momentum_final)
        };
        let max_grad = step(&mut state, phase_p, momentum, config, &mut bufs, timings)?;

        let done = it + 1;
        let stopping = config
            .min_grad_norm
            .is_some_and(|g| it >= config.exaggeration_iters && max_grad < g);
        let sample =
            done % cadence == 0 || done == config.max_iters || done == post_exagg || stopping;
        if sample {
            // Always measured against the unexaggerated objective.
            let kl = if kl_exact {
                forces::kl_divergence(p, &state.embedding.coords)
            } else {
                forces::kl_divergence_sparse(p, &state.embedding.coords, bufs.z_estimate)
            };
            kl_history.push((done, kl));
            log::info!(
                target: "tsne::progress",
                "iter={done} kl={kl:.6} max_grad={max_grad:.4e} elapsed_ms={:.0}",
                ms(start.elapsed())
            );
        }
        if stopping {
            log::info!(
                target: "tsne::progress",
                "gradient magnitude {max_grad:.4e} under threshold; stopping at {done}"
            );
            break;
        }
    }
    timings.loop_ms = ms(loop_start.elapsed());
    timings.total_ms = ms(start.elapsed());

    let final_kl = kl_history.last().map(|&(_, kl)| kl).unwrap_or(f64::NAN);
    Ok(RunResult {
        embedding: state.embedding,
        kl_history,
        final_kl,
        kl_is_estimate: !kl_exact,
        timings: timings.clone(),
    })
}
