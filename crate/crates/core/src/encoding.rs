//! Time2Vec domain encoding and train-only normalization.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Frequencies and phases of a Time2Vec encoding. Component 0 is linear, the
/// remaining components are sinusoidal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Time2VecParams {
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Time2VecParams {
    pub fn new(omega: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if omega.is_empty() || omega.len() != phi.len() {
            return Err(Error::Config("time2vec needs m ≥ 1 frequencies and matching phases".into()));
        }
        Ok(Self { omega, phi })
    }

    /// Frequencies log-spaced on `[0.1, 10]`, phases uniform on `[0, 2π)`.
    pub fn init(m: usize, rng: &mut Rng) -> Self {
        let omega = (0..m)
            .map(|i| {
                let t = if m == 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
                10f64.powf(-1.0 + 2.0 * t)
            })
            .collect();
        let phi = (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self { omega, phi }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }
}

/// `t2v(c)[0] = ω₀c + φ₀`, `t2v(c)[i] = sin(ωᵢc + φᵢ)` for `i ≥ 1`.
pub fn time2vec(c: f64, p: &Time2VecParams) -> Vec<f64> {
    let mut out = vec![0.0; p.dim()];
    time2vec_into(c, &p.omega, &p.phi, &mut out);
    out
}

#[inline]
pub(crate) fn time2vec_into(c: f64, omega: &[f64], phi: &[f64], out: &mut [f64]) {
    for i in 0..omega.len() {
        let a = omega[i] * c + phi[i];
        out[i] = if i == 0 { a } else { a.sin() };
    }
}

/// Per-column standardization fitted on training rows only, plus an affine
/// map for domain indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance; they get `std = 1`.
    pub flagged: Vec<bool>,
    pub domain_shift: f64,
    pub domain_scale: f64,
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_constant(std: f64, mean: f64) -> bool {
    std <= 1e-12 * (1.0 + mean.abs())
}

impl Normalizer {
    /// Fit from training features and their domain indices.
    pub fn fit(x: ArrayView2<f64>, domains: &[f64]) -> Result<Self> {
        if x.nrows() < 2 || domains.len() != x.nrows() {
            return Err(Error::Data("normalizer needs at least two aligned training rows".into()));
        }
        let d = x.ncols();
        let (mut mean, mut std, mut flagged) = (vec![0.0; d], vec![1.0; d], vec![false; d]);
        for j in 0..d {
            let col = x.column(j);
            let (m, s) = moments(col.iter().copied());
            mean[j] = m;
            if is_constant(s, m) {
                flagged[j] = true;
            } else {
                std[j] = s;
            }
        }
        let (dm, ds) = moments(domains.iter().copied());
        let domain_scale = if is_constant(ds, dm) { 1.0 } else { ds };
        Ok(Self { mean, std, flagged, domain_shift: dm, domain_scale })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn inverse_transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }

    pub fn transform_domain(&self, c: f64) -> f64 {
        (c - self.domain_shift) / self.domain_scale
    }

    pub fn inverse_domain(&self, z: f64) -> f64 {
        z * self.domain_scale + self.domain_shift
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_leg() {
        let p = Time2VecParams::new(vec![2.0], vec![1.0]).unwrap();
        assert_eq!(time2vec(3.0, &p), vec![7.0]);
    }

    #[test]
    fn sinusoid_leg() {
        let p = Time2VecParams::new(vec![0.0, PI / 2.0], vec![0.0, 0.0]).unwrap();
        let v = time2vec(1.0, &p);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_params_rejected() {
        assert!(Time2VecParams::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(Time2VecParams::new(vec![], vec![]).is_err());
    }

    #[test]
    fn init_spacing() {
        let p = Time2VecParams::init(8, &mut crate::rng::from_seed(0));
        assert!((p.omega[0] - 0.1).abs() < 1e-12);
        assert!((p.omega[7] - 10.0).abs() < 1e-12);
        assert!(p.phi.iter().all(|&f| (0.0..2.0 * PI).contains(&f)));
    }

    #[test]
    fn constant_column_is_flagged() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let n = Normalizer::fit(x.view(), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(n.flagged, vec![false, true]);
        let t = n.transform(x.view());
        assert!(t.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn future_domains_extrapolate() {
        let x = Array2::<f64>::zeros((6, 1));
        let n = Normalizer::fit(x.view(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let max_train = (0..6).map(|c| n.transform_domain(c as f64)).fold(f64::MIN, f64::max);
        assert!(n.transform_domain(9.0) > max_train);
    }

    #[test]
    fn too_few_rows() {
        let x = array![[1.0]];
        assert!(Normalizer::fit(x.view(), &[0.0]).is_err());
    }
}
