//! Dense forward/backward kernels on row-major matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

pub(crate) const LN_EPS: f64 = 1e-5;

/// `x · w + b`.
pub(crate) fn linear(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    for mut row in out.rows_mut() {
        row.assign(&b);
    }
    general_mat_mul(1.0, &x, &w, 1.0, &mut out);
    out
}

/// Accumulate weight and bias gradients of `linear`; returns `dx`.
pub(crate) fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    mut dw: ArrayViewMut2<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut dw);
    db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub rstd: Array1<f64>,
}

pub(crate) fn layer_norm(x: ArrayView2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let s = *r;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        Zip::from(&mut row).and(&g).and(&b).for_each(|v, &g, &b| *v = *v * g + b);
    }
    (y, LnCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    cache: &LnCache,
    g: ArrayView1<f64>,
    dy: ArrayView2<f64>,
    mut dg: ArrayViewMut1<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((dyr, xr), (mut dxr, &r)) in dy
        .rows()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(dx.rows_mut().into_iter().zip(cache.rstd.iter()))
    {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_x = 0.0;
        for j in 0..dyr.len() {
            let dxh = dyr[j] * g[j];
            sum_dxhat += dxh;
            sum_dxhat_x += dxh * xr[j];
            dg[j] += dyr[j] * xr[j];
            db[j] += dyr[j];
        }
        let m1 = sum_dxhat / d;
        let m2 = sum_dxhat_x / d;
        for j in 0..dyr.len() {
            dxr[j] = r * (dyr[j] * g[j] - m1 - xr[j] * m2);
        }
    }
    dx
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// In-place softmax over each row.
pub(crate) fn softmax_rows(mut m: ArrayViewMut2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_standardizes() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 1.0, -1.0]];
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (y, _) = layer_norm(x.view(), g.view(), b.view());
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut m = array![[1.0, 2.0, 1000.0], [0.0, 0.0, 0.0]];
        softmax_rows(m.view_mut());
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
