//! Scaling benchmark: embeds synthetic datasets of doubling sizes and
//! reports per-stage wall-clock times, per-iteration cost, and divergence
//! samples, as a text table or CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{AnnMode, TsneConfig};
use crate::error::{Result, TsneError};
use crate::optimizer;
use crate::synth;

/// What the benchmark runs: dataset shape plus the embedding parameters.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Dataset sizes, ascending; doubling sizes make the scaling ratio
    /// between consecutive rows meaningful.
    pub sizes: Vec<usize>,
    pub dims: usize,
    pub clusters: usize,
    pub spread: f64,
    pub iters: usize,
    pub exaggeration_iters: usize,
    pub k_neighbors: usize,
    pub perplexity: f64,
    pub theta: f64,
    pub ann_mode: AnnMode,
    pub tau_probes: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![10_000, 20_000, 40_000],
            dims: 50,
            clusters: 10,
            spread: 1.0,
            iters: 350,
            exaggeration_iters: 100,
            k_neighbors: 32,
            perplexity: 10.0,
            theta: 0.5,
            ann_mode: AnnMode::IvfPq,
            tau_probes: 10,
            seed: 42,
        }
    }
}

/// Measurements from one benchmark size.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: usize,
    pub knn_ms: f64,
    pub affinity_ms: f64,
    pub tree_ms: f64,
    pub repulsive_ms: f64,
    pub pq_ms: f64,
    pub attractive_ms: f64,
    pub apply_ms: f64,
    pub loop_ms: f64,
    pub total_ms: f64,
    /// Optimizer loop time divided by iterations run.
    pub per_iter_ms: f64,
    /// Divergence 50 iterations after exaggeration ends (NaN when the run
    /// is too short to reach that sample).
    pub kl_mid: f64,
    pub kl_final: f64,
}

/// Embeds each configured size and collects a row per run.
pub fn run_scaling(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.sizes.is_empty() {
        return Err(TsneError::InvalidParameter("no benchmark sizes".into()));
    }
    if config.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TsneError::InvalidParameter(
            "benchmark sizes must be strictly ascending".into(),
        ));
    }

    let tsne = TsneConfig {
        perplexity: config.perplexity,
        k_neighbors: config.k_neighbors,
        theta: config.theta,
        max_iters: config.iters,
        exaggeration_iters: config.exaggeration_iters,
        ann_mode: config.ann_mode,
        tau_probes: config.tau_probes,
        seed: config.seed,
        ..TsneConfig::default()
    };
    tsne.validate()?;

    let mid_iter = config.exaggeration_iters + 50;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        log::info!("benchmark: embedding {n} points");
        let dataset = synth::clustered_dataset(n, config.dims, config.clusters, config.spread, config.seed);
        let result = optimizer::run(&dataset.data, &tsne)?;
        let t = &result.timings;
        let kl_at = |iter: usize| {
            result
                .kl_history
                .iter()
                .find(|&&(i, _)| i == iter)
                .map_or(f64::NAN, |&(_, kl)| kl)
        };
        rows.push(BenchRow {
            n,
            knn_ms: t.knn_ms,
            affinity_ms: t.affinity_ms,
            tree_ms: t.tree_ms,
            repulsive_ms: t.repulsive_ms,
            pq_ms: t.pq_ms,
            attractive_ms: t.attractive_ms,
            apply_ms: t.apply_ms,
            loop_ms: t.loop_ms,
            total_ms: t.total_ms,
            per_iter_ms: t.loop_ms / t.iterations.max(1) as f64,
            kl_mid: kl_at(mid_iter),
            kl_final: result.final_kl,
        });
    }
    Ok(rows)
}

const CSV_HEADER: &str = "n,knn_ms,affinity_ms,tree_ms,repulsive_ms,pq_ms,attractive_ms,\
                          apply_ms,loop_ms,total_ms,per_iter_ms,kl_mid,kl_final";

/// Writes rows as CSV ready for plotting.
pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.6},{:.6}",
            r.n,
            r.knn_ms,
            r.affinity_ms,
            r.tree_ms,
            r.repulsive_ms,
            r.pq_ms,
            r.attractive_ms,
            r.apply_ms,
            r.loop_ms,
            r.total_ms,
            r.per_iter_ms,
            r.kl_mid,
            r.kl_final
        )
        .expect("string writes cannot fail");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Human-readable table with the scaling ratio between consecutive rows.
pub fn render_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>8}  {:>10}  {:>12}  {:>10}  {:>8}  {:>10}  {:>10}",
        "n", "knn_ms", "per_iter_ms", "ratio", "total_s", "kl_mid", "kl_final"
    )
    .unwrap();
    for (i, r) in rows.iter().enumerate() {
        let ratio = if i == 0 {
            "-".to_string()
        } else {
            format!("{:.2}", r.per_iter_ms / rows[i - 1].per_iter_ms)
        };
        writeln!(
            out,
            "{:>8}  {:>10.1}  {:>12.2}  {:>10}  {:>8.1}  {:>10.4}  {:>10.4}",
            r.n,
            r.knn_ms,
            r.per_iter_ms,
            ratio,
            r.total_ms / 1e3,
            r.kl_mid,
            r.kl_final
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quick_config() -> BenchConfig {
        BenchConfig {
            sizes: vec![300, 600],
            dims: 8,
            clusters: 3,
            iters: 80,
            exaggeration_iters: 20,
            k_neighbors: 16,
            perplexity: 5.0,
            tau_probes: 4,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn scaling_rows_cover_each_size() {
        let rows = run_scaling(&quick_config()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n, 300);
        assert_eq!(rows[1].n, 600);
        for r in &rows {
            assert!(r.loop_ms > 0.0 && r.per_iter_ms > 0.0);
            assert!(r.knn_ms > 0.0);
            // Sampled at 70 of 80 iterations, so both divergences exist.
            assert!(r.kl_mid.is_finite() && r.kl_final.is_finite());
        }
    }

    #[test]
    fn csv_and_table_render() {
        let rows = vec![BenchRow {
            n: 1000,
            knn_ms: 12.0,
            affinity_ms: 3.0,
            tree_ms: 4.0,
            repulsive_ms: 5.0,
            pq_ms: 1.0,
            attractive_ms: 2.0,
            apply_ms: 0.5,
            loop_ms: 12.5,
            total_ms: 30.0,
            per_iter_ms: 0.125,
            kl_mid: 1.5,
            kl_final: 1.2,
        }];
        let dir = tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        write_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("n,knn_ms"));
        assert!(text.lines().nth(1).unwrap().starts_with("1000,12.000"));

        let table = render_table(&rows);
        assert!(table.contains("per_iter_ms"));
        assert!(table.contains("1000"));
    }

    #[test]
    fn sizes_must_ascend() {
        let bad = BenchConfig {
            sizes: vec![600, 300],
            ..quick_config()
        };
        assert!(run_scaling(&bad).is_err());
        let empty = BenchConfig {
            sizes: vec![],
            ..quick_config()
        };
        assert!(run_scaling(&empty).is_err());
    }
}
