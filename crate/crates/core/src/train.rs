//! Prior-fitting: train the classifier on an endless stream of synthetic
//! drift tasks, each split at a temporal boundary into context and queries.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::PriorConfig;
use crate::dataset::{DriftDataset, Samples};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::model::{IclModel, ModelConfig, TrainingEpisode};
use crate::optim::{adamw_step, clip_grad_norm, AdamState, OptimConfig};
use crate::prior::sample_dataset;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub prior: PriorConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of pre-boundary rows moved into the query set.
    pub id_query_fraction: f64,
    /// The boundary is placed where this share of rows lies before it.
    pub boundary_fraction_range: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            prior: PriorConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            steps: 20_000,
            batch_size: 8,
            seed: 0,
            id_query_fraction: 0.1,
            boundary_fraction_range: (0.3, 0.8),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.model.validate()?;
        self.optim.validate()?;
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.id_query_fraction) {
            return Err(Error::Config("id_query_fraction must lie in [0, 1)".into()));
        }
        let (lo, hi) = self.boundary_fraction_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config("boundary_fraction_range must satisfy 0 < lo ≤ hi < 1".into()));
        }
        if self.prior.max_classes > self.model.max_classes || self.prior.feature_count_range.1 > self.model.max_features {
            return Err(Error::Config("prior draws tasks larger than the model accepts".into()));
        }
        Ok(())
    }
}

/// Split a dataset into a context (domains up to the boundary, minus a
/// held-out share) and a query set (held-out rows plus all later domains).
pub fn split_for_training(ds: &DriftDataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<(Samples, Samples)> {
    let sched = ds.schedule();
    if sched.len() < 2 {
        return Err(Error::Data("need at least two domains".into()));
    }
    let (lo, hi) = cfg.boundary_fraction_range;
    let target = rng.random_range(lo..=hi);
    let total = ds.len() as f64;
    let mut best = (f64::INFINITY, 0);
    let mut cum = 0usize;
    for b in 0..sched.len() - 1 {
        cum += sched.counts()[b];
        let gap = (cum as f64 / total - target).abs();
        if gap < best.0 {
            best = (gap, b);
        }
    }
    let n_before = sched.rows(best.1).end;
    let mut pre: Vec<usize> = (0..n_before).collect();
    pre.shuffle(rng);
    let n_id = ((cfg.id_query_fraction * n_before as f64).round() as usize).min(n_before.saturating_sub(2));
    let (id_rows, ctx_rows) = pre.split_at(n_id);
    let mut ctx_rows = ctx_rows.to_vec();
    ctx_rows.sort_unstable();
    let mut present = vec![false; ds.num_classes()];
    for &r in &ctx_rows {
        present[ds.labels()[r]] = true;
    }
    let mut query_rows: Vec<usize> = id_rows.iter().copied().chain(n_before..ds.len()).filter(|&r| present[ds.labels()[r]]).collect();
    query_rows.sort_unstable();
    if query_rows.is_empty() || ctx_rows.len() < 2 {
        return Err(Error::Data("degenerate training split".into()));
    }
    Ok((ds.select(&ctx_rows), ds.select(&query_rows)))
}

/// The `index`-th episode of training step `step`. Failed draws are retried
/// on fresh sub-streams, so the result depends only on the seed.
pub fn training_episode(cfg: &TrainConfig, step: u64, index: usize) -> Result<TrainingEpisode> {
    let mut last = String::new();
    for attempt in 0..cfg.prior.max_attempts as u64 {
        let mut rng = stream(cfg.seed, &[1, step, index as u64, attempt]);
        let mut prior = cfg.prior.clone();
        if prior.drift && rng.random::<f64>() < prior.static_fraction {
            prior.drift = false;
        }
        let ep = sample_dataset(&prior, &mut rng)
            .and_then(|ds| split_for_training(&ds, cfg, &mut rng))
            .and_then(|(ctx, q)| TrainingEpisode::new(&cfg.model, &ctx, &q));
        match ep {
            Ok(e) => return Ok(e),
            Err(e @ (Error::Sampling(_) | Error::SamplingExhausted { .. } | Error::NonFinite { .. } | Error::Data(_))) => {
                last = e.to_string()
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingExhausted { attempts: cfg.prior.max_attempts, reason: last })
}

/// Fresh training state for `cfg`.
pub fn init_checkpoint(cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let model = IclModel::new(cfg.model.clone(), &mut stream(cfg.seed, &[0]))?;
    let n = model.num_params();
    Ok(Checkpoint { model, step: 0, total_steps: cfg.steps, seed: cfg.seed, optimizer: Some(AdamState::new(n)) })
}

/// Advance `state` until it reaches `until` (capped at `cfg.steps`).
/// `on_step` receives each completed step index and its loss.
pub fn train_until(cfg: &TrainConfig, state: &mut Checkpoint, until: u64, exec: Exec, mut on_step: impl FnMut(u64, f64)) -> Result<()> {
    cfg.validate()?;
    if state.seed != cfg.seed || state.total_steps != cfg.steps || state.model.config() != &cfg.model {
        return Err(Error::Config("checkpoint was produced by a different training configuration".into()));
    }
    let n = state.model.num_params();
    let opt = state.optimizer.get_or_insert_with(|| AdamState::new(n));
    let until = until.min(cfg.steps);
    while state.step < until {
        let step = state.step;
        let batch: Vec<TrainingEpisode> =
            map_indexed(cfg.batch_size, exec, |i| training_episode(cfg, step, i)).into_iter().collect::<Result<_>>()?;
        let (loss, mut grads) = state.model.loss_and_grads(&batch, exec)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingFault { step, reason: format!("non-finite loss or gradient (loss = {loss})") });
        }
        clip_grad_norm(&mut grads, cfg.optim.clip_norm);
        let lr = cfg.optim.lr_at(step, cfg.steps);
        adamw_step(&cfg.optim, state.model.params_mut(), &grads, opt, step, lr);
        state.step += 1;
        on_step(step, loss);
    }
    Ok(())
}

/// Train from scratch for `cfg.steps` steps.
pub fn train(cfg: &TrainConfig, exec: Exec, on_step: impl FnMut(u64, f64)) -> Result<Checkpoint> {
    let mut state = init_checkpoint(cfg)?;
    train_until(cfg, &mut state, cfg.steps, exec, on_step)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> TrainConfig {
        TrainConfig {
            model: ModelConfig { embed_dim: 8, num_layers: 1, num_heads: 2, ffn_dim: 8, max_features: 4, max_classes: 10, t2v_dim: 2, ..Default::default() },
            steps: 4,
            batch_size: 2,
            optim: OptimConfig { learning_rate: 1e-3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn split_has_no_unseen_query_classes() {
        let cfg = tiny();
        for s in 0..20 {
            let ep = training_episode(&cfg, s, 0).unwrap();
            assert!(ep.query_labels.iter().all(|&y| ep.input.class_present[y]));
            assert!(ep.input.n_ctx >= 2);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cfg = tiny();
        let full = train(&cfg, Exec::Sequential, |_, _| {}).unwrap();
        let mut part = init_checkpoint(&cfg).unwrap();
        train_until(&cfg, &mut part, 2, Exec::Sequential, |_, _| {}).unwrap();
        let mut resumed = Checkpoint::from_bytes(&part.to_bytes()).unwrap();
        train_until(&cfg, &mut resumed, cfg.steps, Exec::Sequential, |_, _| {}).unwrap();
        assert_eq!(resumed.model.params(), full.model.params());
    }

    #[test]
    fn loss_decreases_on_a_fixed_batch() {
        let cfg = tiny();
        let batch: Vec<_> = (0..4).map(|i| training_episode(&cfg, 0, i).unwrap()).collect();
        let mut model = IclModel::new(cfg.model.clone(), &mut stream(0, &[0])).unwrap();
        let mut opt = AdamState::new(model.num_params());
        let start = model.loss(&batch);
        for step in 0..30 {
            let (_, g) = model.loss_and_grads(&batch, Exec::Sequential).unwrap();
            adamw_step(&cfg.optim, model.params_mut(), &g, &mut opt, step, 1e-2);
        }
        assert!(model.loss(&batch) < start);
    }
}
