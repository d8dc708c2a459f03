use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::rng::Rng;

/// Hyperparameters of the synthetic drift prior.
///
/// Ranges are inclusive `(lo, hi)` pairs. Real-valued ranges marked
/// log-uniform are sampled uniformly in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability of each forward edge in the causal DAG.
    pub density_range: (f64, f64),
    pub subnode_count_range: (usize, usize),
    pub intermediate_count_range: (usize, usize),
    /// Per-dataset weight std, log-uniform.
    pub weight_std_range: (f64, f64),
    /// Per-subnode noise std, log-uniform.
    pub noise_scale_range: (f64, f64),
    /// Noise std of root subnodes, log-uniform; falls back to
    /// `noise_scale_range` when unset.
    pub root_noise_scale_range: Option<(f64, f64)>,
    pub clip_bound: f64,
    pub feature_count_range: (usize, usize),
    pub min_classes: usize,
    pub max_classes: usize,
    /// Relative jitter of quantile bin edges, in units of one bin width.
    pub class_boundary_jitter: f64,
    pub min_domains: usize,
    pub max_domains: usize,
    /// Std of the log-normal gap distribution, itself drawn per schedule.
    pub gap_log_sigma_range: (f64, f64),
    pub min_total_samples: usize,
    pub max_total_samples: usize,
    pub shift_sparsity_range: (f64, f64),
    /// Log-uniform.
    pub shift_scale_range: (f64, f64),
    pub sscm_min_nodes: usize,
    pub sscm_max_nodes: usize,
    /// When false every dataset is sampled with a zero shift scale.
    pub drift: bool,
    /// Fraction of training datasets drawn with drift disabled.
    pub static_fraction: f64,
    pub degenerate_probe: usize,
    pub max_attempts: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            min_nodes: 2,
            max_nodes: 6,
            density_range: (0.3, 0.9),
            subnode_count_range: (1, 3),
            intermediate_count_range: (1, 4),
            weight_std_range: (0.3, 3.0),
            noise_scale_range: (1e-3, 0.3),
            root_noise_scale_range: None,
            clip_bound: 1e4,
            feature_count_range: (1, 4),
            min_classes: 2,
            max_classes: 10,
            class_boundary_jitter: 0.3,
            min_domains: 2,
            max_domains: 12,
            gap_log_sigma_range: (0.0, 1.5),
            min_total_samples: 60,
            max_total_samples: 300,
            shift_sparsity_range: (0.05, 0.4),
            shift_scale_range: (0.05, 2.0),
            sscm_min_nodes: 2,
            sscm_max_nodes: 5,
            drift: true,
            static_fraction: 0.0,
            degenerate_probe: 32,
            max_attempts: 16,
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: (T, T)) -> Result<()> {
    if r.0 > r.1 {
        return Err(config_err(format!("{name}: lower bound {:?} exceeds upper bound {:?}", r.0, r.1)));
    }
    Ok(())
}

impl PriorConfig {
    pub fn root_noise_scale_range(&self) -> (f64, f64) {
        self.root_noise_scale_range.unwrap_or(self.noise_scale_range)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_nodes < 1 {
            return Err(config_err("min_nodes must be at least 1"));
        }
        check_range("nodes", (self.min_nodes, self.max_nodes))?;
        check_range("sscm nodes", (self.sscm_min_nodes, self.sscm_max_nodes))?;
        if self.sscm_min_nodes < 2 {
            return Err(config_err("sscm_min_nodes must be at least 2"));
        }
        check_range("density_range", self.density_range)?;
        if self.density_range.0 < 0.0 || self.density_range.1 > 1.0 {
            return Err(config_err("density_range must lie in [0, 1]"));
        }
        check_range("subnode_count_range", self.subnode_count_range)?;
        check_range("intermediate_count_range", self.intermediate_count_range)?;
        if self.subnode_count_range.0 < 1 || self.intermediate_count_range.0 < 1 {
            return Err(config_err("subnode and intermediate counts must be at least 1"));
        }
        for (name, r) in [
            ("weight_std_range", self.weight_std_range),
            ("noise_scale_range", self.noise_scale_range),
            ("root_noise_scale_range", self.root_noise_scale_range()),
        ] {
            check_range(name, r)?;
            if r.0 <= 0.0 {
                return Err(config_err(format!("{name} must be positive for log-uniform sampling")));
            }
        }
        check_range("shift_scale_range", self.shift_scale_range)?;
        if self.shift_scale_range.0 < 0.0 {
            return Err(config_err("shift_scale_range must be non-negative"));
        }
        check_range("shift_sparsity_range", self.shift_sparsity_range)?;
        if self.shift_sparsity_range.0 < 0.0 || self.shift_sparsity_range.1 > 1.0 {
            return Err(config_err("shift_sparsity_range must lie in [0, 1]"));
        }
        if !(self.clip_bound > 0.0) {
            return Err(config_err("clip_bound must be positive"));
        }
        check_range("feature_count_range", self.feature_count_range)?;
        if self.feature_count_range.0 < 1 {
            return Err(config_err("at least one feature is required"));
        }
        if self.min_classes < 2 {
            return Err(config_err("min_classes must be at least 2"));
        }
        check_range("classes", (self.min_classes, self.max_classes))?;
        if self.min_domains < 1 {
            return Err(config_err("min_domains must be at least 1"));
        }
        check_range("domains", (self.min_domains, self.max_domains))?;
        check_range("gap_log_sigma_range", self.gap_log_sigma_range)?;
        check_range("total samples", (self.min_total_samples, self.max_total_samples))?;
        if self.max_total_samples < self.min_domains {
            return Err(config_err("max_total_samples must allow one sample per domain"));
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return Err(config_err("static_fraction must lie in [0, 1]"));
        }
        if !(0.0..0.5).contains(&self.class_boundary_jitter) {
            return Err(config_err("class_boundary_jitter must lie in [0, 0.5)"));
        }
        if self.max_attempts == 0 {
            return Err(config_err("max_attempts must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn uniform_usize(rng: &mut Rng, r: (usize, usize)) -> usize {
    rng.random_range(r.0..=r.1)
}

pub(crate) fn uniform_f64(rng: &mut Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

pub(crate) fn log_uniform(rng: &mut Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0.ln()..=r.1.ln()).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PriorConfig::default().validate().unwrap();
    }

    #[test]
    fn inverted_ranges_rejected() {
        let cfg = PriorConfig { min_nodes: 5, max_nodes: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = PriorConfig { noise_scale_range: (0.0, 1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
