//! In-context classifier: a set transformer over labelled context tokens and
//! independent query tokens.

mod episode;
mod layout;
mod ops;
mod transformer;

use ndarray::{s, Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use episode::{encode, EncodedEpisode, TrainingEpisode, FEATURE_CLAMP};
pub use layout::{LayerSlots, ParamLayout, Slot};

use crate::dataset::Samples;
use crate::encoding::Time2VecParams;
use crate::error::{Error, Result};
use crate::exec::{map_slice, Exec};
use crate::rng::Rng;

/// How the domain index enters each token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DomainInput {
    #[default]
    Time2Vec,
    /// Raw normalized index as one extra input column.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_features: usize,
    pub max_classes: usize,
    pub t2v_dim: usize,
    pub domain_input: DomainInput,
    /// Keep the Time2Vec frequencies and phases at their initial values.
    pub freeze_t2v: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            num_layers: 4,
            num_heads: 4,
            ffn_dim: 256,
            max_features: 8,
            max_classes: 10,
            t2v_dim: 8,
            domain_input: DomainInput::Time2Vec,
            freeze_t2v: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_features", self.max_features),
            ("t2v_dim", self.t2v_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.max_classes < 2 {
            return Err(Error::Config("max_classes must be at least 2".into()));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    /// Width of the raw token before the input projection.
    pub fn input_dim(&self) -> usize {
        self.max_features
            + match self.domain_input {
                DomainInput::Time2Vec => self.t2v_dim,
                DomainInput::Scalar => 1,
            }
    }
}

/// Round to the nearest `f32`, the storage precision of checkpoints.
#[inline]
pub(crate) fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

/// Queries are independent, so large query sets are scored in chunks.
const QUERY_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct IclModel {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl IclModel {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut fill = |slot: &Slot, std: f64, rng: &mut Rng| {
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in &mut params[slot.range()] {
                *v = normal.sample(rng);
            }
        };
        let d = config.embed_dim as f64;
        fill(&layout.w_in, 1.0 / (config.input_dim() as f64).sqrt(), rng);
        fill(&layout.label_emb, 0.5, rng);
        fill(&layout.query_emb, 0.5, rng);
        for l in &layout.layers {
            fill(&l.wqkv, 1.0 / d.sqrt(), rng);
            fill(&l.wo, 0.5 / d.sqrt(), rng);
            fill(&l.w1, 1.0 / d.sqrt(), rng);
            fill(&l.w2, 0.5 / (config.ffn_dim as f64).sqrt(), rng);
        }
        fill(&layout.w_out, 1.0 / d.sqrt(), rng);
        for l in &layout.layers {
            params[l.ln1_g.range()].fill(1.0);
            params[l.ln2_g.range()].fill(1.0);
        }
        params[layout.lnf_g.range()].fill(1.0);
        if let (Some(so), Some(sp)) = (&layout.t2v_omega, &layout.t2v_phi) {
            let t2v = Time2VecParams::init(config.t2v_dim, rng);
            params[so.range()].copy_from_slice(&t2v.omega);
            params[sp.range()].copy_from_slice(&t2v.phi);
        }
        params.iter_mut().for_each(|v| *v = to_f32_grid(*v));
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn time2vec(&self) -> Option<Time2VecParams> {
        let (so, sp) = (self.layout.t2v_omega.as_ref()?, self.layout.t2v_phi.as_ref()?);
        Some(Time2VecParams { omega: self.params[so.range()].to_vec(), phi: self.params[sp.range()].to_vec() })
    }

    /// Class probabilities of an already encoded episode, `n_query × max_classes`.
    pub fn forward_encoded(&self, ep: &EncodedEpisode) -> Array2<f64> {
        transformer::forward(&self.params, &self.layout, &self.config, ep, false).probs
    }

    /// Class probabilities for `query_x` given the labelled `context`.
    pub fn predict_proba(&self, context: &Samples, query_x: ArrayView2<f64>, query_c: &[f64]) -> Result<Array2<f64>> {
        let nq = query_c.len();
        let mut out = Array2::zeros((nq, self.config.max_classes));
        let mut start = 0;
        while start < nq {
            let end = (start + QUERY_CHUNK).min(nq);
            let ep = encode(&self.config, context, query_x.slice(s![start..end, ..]), &query_c[start..end])?;
            out.slice_mut(s![start..end, ..]).assign(&self.forward_encoded(&ep));
            start = end;
        }
        Ok(out)
    }

    /// Mean query cross-entropy over a batch of episodes.
    pub fn loss(&self, episodes: &[TrainingEpisode]) -> f64 {
        let total: usize = episodes.iter().map(|e| e.query_labels.len()).sum();
        let sum: f64 = episodes
            .iter()
            .map(|e| transformer::cross_entropy(&self.forward_encoded(&e.input), &e.query_labels))
            .sum();
        sum / total as f64
    }

    /// Mean query cross-entropy and its gradient. Episodes are processed
    /// independently and summed in input order, so the result does not
    /// depend on `exec`.
    pub fn loss_and_grads(&self, episodes: &[TrainingEpisode], exec: Exec) -> Result<(f64, Vec<f64>)> {
        let total: usize = episodes.iter().map(|e| e.query_labels.len()).sum();
        if total == 0 {
            return Err(Error::Data("batch has no query rows".into()));
        }
        let weight = 1.0 / total as f64;
        let parts = map_slice(episodes, exec, |e| {
            let fp = transformer::forward(&self.params, &self.layout, &self.config, &e.input, true);
            let loss = transformer::cross_entropy(&fp.probs, &e.query_labels);
            let mut g = vec![0.0; self.params.len()];
            transformer::backward(&self.params, &mut g, &self.layout, &self.config, &e.input, &fp, &e.query_labels, weight);
            (loss, g)
        });
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        if self.config.freeze_t2v {
            for slot in self.layout.t2v_omega.iter().chain(self.layout.t2v_phi.iter()) {
                grads[slot.range()].fill(0.0);
            }
        }
        Ok((loss * weight, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 8, num_layers: 2, num_heads: 2, ffn_dim: 12, max_features: 3, max_classes: 4, t2v_dim: 3, ..Default::default() }
    }

    fn samples(n: usize, d: usize, classes: usize, rng: &mut Rng) -> Samples {
        use rand::Rng as _;
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| i % classes).collect();
        let c = (0..n).map(|i| (i / 3) as f64).collect();
        Samples { x, y, c }
    }

    #[test]
    fn probabilities_are_normalized() {
        let mut rng = from_seed(1);
        let m = IclModel::new(tiny(), &mut rng).unwrap();
        let ctx = samples(9, 2, 3, &mut rng);
        let q = samples(5, 2, 3, &mut rng);
        let p = m.predict_proba(&ctx, q.x.view(), &q.c).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert_eq!(row[3], 0.0);
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let mut rng = from_seed(2);
        let m = IclModel::new(tiny(), &mut rng).unwrap();
        let ctx = samples(6, 4, 2, &mut rng);
        let err = m.predict_proba(&ctx, ctx.x.view(), &ctx.c).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = ModelConfig { embed_dim: 10, num_heads: 3, ..tiny() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn analytic_gradient_matches_central_difference() {
        let mut rng = from_seed(3);
        let m = IclModel::new(tiny(), &mut rng).unwrap();
        let ctx = samples(7, 2, 3, &mut rng);
        let q = samples(4, 2, 3, &mut rng);
        let eps = vec![TrainingEpisode::new(m.config(), &ctx, &q).unwrap()];
        let (_, g) = m.loss_and_grads(&eps, Exec::Sequential).unwrap();
        let h = 1e-5;
        for i in (0..m.num_params()).step_by(7) {
            let mut p = m.clone();
            p.params_mut()[i] += h;
            let up = p.loss(&eps);
            p.params_mut()[i] -= 2.0 * h;
            let down = p.loss(&eps);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {} vs numeric {fd}", g[i]);
        }
    }
}
