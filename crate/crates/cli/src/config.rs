use std::path::Path;

use drift_pfn::benchmarks::{Benchmark, MovingBlobsConfig};
use drift_pfn::config::PriorConfig;
use drift_pfn::eval::{EvalOptions, Variant};
use drift_pfn::model::ModelConfig;
use drift_pfn::optim::OptimConfig;
use drift_pfn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub steps: u64,
    pub batch_size: usize,
    pub id_query_fraction: f64,
    pub boundary_fraction_range: (f64, f64),
    /// Save a resumable checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            id_query_fraction: t.id_query_fraction,
            boundary_fraction_range: t.boundary_fraction_range,
            checkpoint_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    /// Number of prior datasets written by `gen` when no benchmark is named.
    pub count: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        Self { count: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub benchmarks: Vec<Benchmark>,
    pub variants: Vec<Variant>,
    pub options: EvalOptions,
    /// Also hand the domain index to the static model as a feature column.
    pub static_domain_as_feature: bool,
    /// Seed of the benchmark generators.
    pub data_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            benchmarks: vec![Benchmark::RotatedTwoMoons, Benchmark::SlidingCircle, Benchmark::BinaryLabelShift],
            variants: Variant::ALL.to_vec(),
            options: EvalOptions::default(),
            static_domain_as_feature: false,
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub benchmark: Benchmark,
    /// Points per axis of the evaluation grid.
    pub grid: usize,
    /// Context is every row with a domain index up to this value; defaults
    /// to all but the last domain.
    pub context_until: Option<f64>,
    /// Domains to draw surfaces for; defaults to every domain.
    pub domains: Vec<f64>,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self { benchmark: Benchmark::RotatedTwoMoons, grid: 50, context_until: None, domains: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub prior: PriorConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub training: TrainingSection,
    pub gen: GenSection,
    pub eval: EvalSection,
    pub boundary: BoundarySection,
    pub moving_blobs: MovingBlobsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "run".into(),
            prior: PriorConfig::default(),
            model: ModelConfig { max_features: 4, ..ModelConfig::default() },
            optim: OptimConfig::default(),
            training: TrainingSection::default(),
            gen: GenSection::default(),
            eval: EvalSection::default(),
            boundary: BoundarySection::default(),
            moving_blobs: MovingBlobsConfig::default(),
        }
    }
}

/// Which of the two trained models a command refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Drift,
    Static,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Drift => "drift",
            ModelKind::Static => "static",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Training settings for one of the two models. The static model sees
    /// only drift-free tasks; everything else is shared.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let mut prior = self.prior.clone();
        if kind == ModelKind::Static {
            prior.static_fraction = 1.0;
        }
        TrainConfig {
            prior,
            model: self.model.clone(),
            optim: self.optim.clone(),
            steps: self.training.steps,
            batch_size: self.training.batch_size,
            seed: self.seed,
            id_query_fraction: self.training.id_query_fraction,
            boundary_fraction_range: self.training.boundary_fraction_range,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config(ModelKind::Drift).validate()?;
        self.moving_blobs.validate()?;
        if self.boundary.grid == 0 {
            return Err(CliError::Config("boundary.grid must be positive".into()));
        }
        if self.eval.options.ece_bins == 0 || self.eval.options.seeds.is_empty() {
            return Err(CliError::Config("eval needs at least one seed and one ECE bin".into()));
        }
        Ok(())
    }

    pub fn generate(&self, b: Benchmark) -> Result<drift_pfn::dataset::DriftDataset, CliError> {
        Ok(match b {
            Benchmark::MovingBlobs => drift_pfn::benchmarks::moving_blobs(&self.moving_blobs, self.eval.data_seed)?,
            other => other.generate(self.eval.data_seed)?,
        })
    }
}
