//! Turning a labelled context and a query set into model inputs.

use ndarray::{s, Array2, ArrayView2};

use super::ModelConfig;
use crate::dataset::Samples;
use crate::encoding::Normalizer;
use crate::error::{Error, Result};

/// Normalized features are clamped to this magnitude.
pub const FEATURE_CLAMP: f64 = 10.0;

/// Model-ready rows: context first, then queries.
#[derive(Debug, Clone)]
pub struct EncodedEpisode {
    /// Normalized, zero-padded features, `n × max_features`.
    pub x: Array2<f64>,
    /// Normalized domain index per row.
    pub c: Vec<f64>,
    pub ctx_labels: Vec<usize>,
    pub n_ctx: usize,
    /// Classes that occur in the context; the rest get probability 0.
    pub class_present: Vec<bool>,
}

impl EncodedEpisode {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn n_query(&self) -> usize {
        self.len() - self.n_ctx
    }
}

/// Fit normalization on `context`, then encode context and queries together.
pub fn encode(cfg: &ModelConfig, context: &Samples, query_x: ArrayView2<f64>, query_c: &[f64]) -> Result<EncodedEpisode> {
    let d = context.num_features();
    if d > cfg.max_features {
        return Err(Error::Capacity(format!("{d} features exceed the model limit of {}", cfg.max_features)));
    }
    if query_x.ncols() != d || query_x.nrows() != query_c.len() {
        return Err(Error::Data("query rows do not match the context layout".into()));
    }
    if context.is_empty() {
        return Err(Error::Data("empty context".into()));
    }
    if let Some(&y) = context.y.iter().find(|&&y| y >= cfg.max_classes) {
        return Err(Error::Capacity(format!("label {y} exceeds the model limit of {} classes", cfg.max_classes)));
    }
    let n_ctx = context.len();
    let n = n_ctx + query_c.len();
    let mut x = Array2::zeros((n, cfg.max_features));
    let mut c = Vec::with_capacity(n);
    if n_ctx >= 2 {
        let norm = Normalizer::fit(context.x.view(), &context.c)?;
        x.slice_mut(s![..n_ctx, ..d]).assign(&norm.transform(context.x.view()));
        x.slice_mut(s![n_ctx.., ..d]).assign(&norm.transform(query_x));
        c.extend(context.c.iter().chain(query_c).map(|&v| norm.transform_domain(v)));
    } else {
        // a single context row carries no scale information; centre on it
        let (x0, c0) = (context.x.row(0), context.c[0]);
        for j in 0..d {
            x[[0, j]] = 0.0;
            for i in 0..query_c.len() {
                x[[n_ctx + i, j]] = query_x[[i, j]] - x0[j];
            }
        }
        c.extend(context.c.iter().chain(query_c).map(|&v| v - c0));
    }
    x.mapv_inplace(|v| v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP));
    for v in c.iter_mut() {
        *v = v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP);
    }
    if x.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in episode".into()));
    }
    let mut class_present = vec![false; cfg.max_classes];
    for &y in &context.y {
        class_present[y] = true;
    }
    Ok(EncodedEpisode { x, c, ctx_labels: context.y.clone(), n_ctx, class_present })
}

/// A training episode with known query labels.
#[derive(Debug, Clone)]
pub struct TrainingEpisode {
    pub input: EncodedEpisode,
    pub query_labels: Vec<usize>,
}

impl TrainingEpisode {
    pub fn new(cfg: &ModelConfig, context: &Samples, query: &Samples) -> Result<Self> {
        let input = encode(cfg, context, query.x.view(), &query.c)?;
        if let Some(&y) = query.y.iter().find(|&&y| y >= cfg.max_classes || !input.class_present[y]) {
            return Err(Error::Data(format!("query label {y} does not occur in the context")));
        }
        Ok(Self { input, query_labels: query.y.clone() })
    }
}
