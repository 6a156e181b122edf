//! Run configuration and its validation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsneError};

/// Neighbor-search backend for affinity construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnMode {
    /// Brute-force exact k-NN.
    Exact,
    /// Inverted-file index with product-quantized residuals.
    IvfPq,
}

/// Hyperparameters for one embedding run.
///
/// `Default` reproduces the standard recipe: perplexity 50 with three times
/// as many neighbors, Barnes-Hut opening angle 0.5, learning rate 200,
/// early exaggeration 12x for the first 250 of 1000 iterations, and momentum
/// switching from 0.5 to 0.8 when exaggeration ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneConfig {
    /// Target perplexity of each point's neighborhood distribution.
    pub perplexity: f64,
    /// Neighbors retained per point for the sparse affinity support.
    pub k_neighbors: usize,
    /// Barnes-Hut opening angle; 0 disables the approximation entirely.
    pub theta: f64,
    /// Gradient-descent learning rate.
    pub learning_rate: f64,
    /// Momentum during the exaggerated phase.
    pub momentum_initial: f64,
    /// Momentum after the exaggerated phase.
    pub momentum_final: f64,
    /// Factor applied to all affinities during the exaggerated phase.
    pub exaggeration_factor: f64,
    /// Number of leading iterations run with exaggerated affinities.
    pub exaggeration_iters: usize,
    /// Total number of iterations.
    pub max_iters: usize,
    /// Seed for every random stage.
    pub seed: u64,
    /// Neighbor-search backend.
    pub ann_mode: AnnMode,
    /// Inverted lists probed per query when `ann_mode` is `IvfPq`.
    pub tau_probes: usize,
    /// Optional early stop: finish once the max gradient magnitude falls
    /// below this threshold (checked after the exaggerated phase).
    pub min_grad_norm: Option<f64>,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 50.0,
            k_neighbors: 150,
            theta: 0.5,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            exaggeration_factor: 12.0,
            exaggeration_iters: 250,
            max_iters: 1000,
            seed: 42,
            ann_mode: AnnMode::Exact,
            tau_probes: 10,
            min_grad_norm: None,
        }
    }
}

impl TsneConfig {
    /// Checks every field and reports all violations at once, so a bad flag
    /// set surfaces as a single actionable message.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.perplexity > 0.0 && self.perplexity.is_finite()) {
            problems.push(format!(
                "perplexity must be positive and finite, got {}",
                self.perplexity
            ));
        }
        if self.k_neighbors < 1 {
            problems.push(format!(
                "k_neighbors must be at least 1, got {}",
                self.k_neighbors
            ));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            problems.push(format!(
                "theta must be non-negative and finite, got {}",
                self.theta
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            ));
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                problems.push(format!("{name} must lie in [0, 1), got {m}"));
            }
        }
        if !(self.exaggeration_factor >= 1.0 && self.exaggeration_factor.is_finite()) {
            problems.push(format!(
                "exaggeration_factor must be at least 1, got {}",
                self.exaggeration_factor
            ));
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be at least 1".into());
        }
        if self.exaggeration_iters > self.max_iters {
            problems.push(format!(
                "exaggeration_iters ({}) cannot exceed max_iters ({})",
                self.exaggeration_iters, self.max_iters
            ));
        }
        if self.tau_probes == 0 {
            problems.push("tau_probes must be at least 1".into());
        }
        if let Some(g) = self.min_grad_norm {
            if !(g > 0.0 && g.is_finite()) {
                problems.push(format!(
                    "min_grad_norm must be positive and finite, got {g}"
                ));
            }
        }
        if (self.k_neighbors as f64) < (3.0 * self.perplexity).ceil() {
            // Not fatal, but calibration quality degrades below 3x.
            log::warn!(
                "k_neighbors ({}) is below 3 * perplexity ({}); \
                 neighborhoods may truncate the Gaussian tails",
                self.k_neighbors,
                self.perplexity
            );
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TsneError::InvalidConfig(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        TsneConfig::default().validate().unwrap();
    }

    #[test]
    fn problems_are_collected_together() {
        let cfg = TsneConfig {
            perplexity: -1.0,
            theta: -0.5,
            learning_rate: 0.0,
            ..TsneConfig::default()
        };
        match cfg.validate().unwrap_err() {
            TsneError::InvalidConfig(problems) => {
                assert!(problems.len() >= 3, "got {problems:?}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn undersized_neighborhoods_warn_but_validate() {
        // Truncated neighborhoods degrade calibration (it falls back to the
        // closest reachable entropy) but are not a configuration error.
        let cfg = TsneConfig {
            perplexity: 50.0,
            k_neighbors: 50,
            ..TsneConfig::default()
        };
        assert!(cfg.validate().is_ok());
        let tiny = TsneConfig {
            perplexity: 0.5,
            k_neighbors: 1,
            ..TsneConfig::default()
        };
        assert!(tiny.validate().is_ok());
        assert!(TsneConfig {
            k_neighbors: 0,
            ..TsneConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn exaggeration_cannot_outlast_run() {
        let cfg = TsneConfig {
            exaggeration_iters: 20,
            max_iters: 10,
            ..TsneConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
