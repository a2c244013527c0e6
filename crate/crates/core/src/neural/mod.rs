//! A small differentiable recurrent stack in double precision.
//!
//! Models process batches of sequences time-major: a context tensor has shape
//! `(steps, batch, channels)`. Every model computes its own reverse-mode
//! gradients through hand-derived adjoint recurrences; [`gradcheck`] holds the
//! finite-difference oracle that keeps them honest.

mod adam;
pub mod gradcheck;
mod gru;
mod mlp;

pub use adam::{AdamState, LrSchedule};
pub use gru::{gru_step, rollout_gru, warmup, GruModel, GruTape};
pub use mlp::{recognize, rollout_euler, EulerMlpModel, RecognitionNet, RnnModel, RnnTape};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Read/write access to a model's trainable parameters in a fixed order.
///
/// The gradient of a model is stored in a value of the same type, so the
/// slices of a model and of its gradient line up one to one.
pub trait Params {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.params().concat()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for p in self.params_mut() {
            let len = p.len();
            p.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// A model that warms up (or recognizes) an initial state from a context
/// window and then predicts `horizon` steps in closed loop.
pub trait Forecaster: Params + Clone + Send + Sync {
    type Tape;

    /// `context` is `(steps, batch, channels)`; returns `(horizon, batch,
    /// channels)` predictions and the tape needed by [`Forecaster::backward`].
    fn forecast(&self, context: ArrayView3<'_, f64>, horizon: usize) -> Result<(Array3<f64>, Self::Tape)>;

    /// Parameter gradient for an upstream gradient on the predictions.
    fn backward(&self, tape: &Self::Tape, grad_pred: ArrayView3<'_, f64>) -> Self;

    /// A model of the same shape with every parameter zero.
    fn zeros_like(&self) -> Self;

    fn output_dim(&self) -> usize;
}

pub(crate) fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || bound * (2.0 * rng.random::<f64>() - 1.0))
}

pub(crate) fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> ndarray::Array1<f64> {
    ndarray::Array1::from_shape_simple_fn(len, || bound * (2.0 * rng.random::<f64>() - 1.0))
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    0.5 + 0.5 * tanh(0.5 * x)
}

/// `tanh` through a single `exp`; absolute error stays near one ulp of 1.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Below this many rows, products run as dot/axpy loops; matrixmultiply
/// repacks the weight matrix on every call and dominates single-sequence
/// training otherwise.
const SMALL_BATCH: usize = 8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = x w^T + beta out` for `x: (B, in)`, `w: (out, in)`.
pub(crate) fn matmul_wt(x: &ArrayView2<'_, f64>, w: &Array2<f64>, beta: f64, out: &mut ArrayViewMut2<'_, f64>) {
    if x.nrows() >= SMALL_BATCH || x.as_slice().is_none() || w.as_slice().is_none() {
        general_mat_mul(1.0, x, &w.t(), beta, out);
        return;
    }
    for (xr, mut orow) in x.rows().into_iter().zip(out.rows_mut()) {
        let xr = xr.to_slice().expect("standard layout");
        for (o, wr) in orow.iter_mut().zip(w.rows()) {
            *o = beta * *o + dot(xr, wr.to_slice().expect("standard layout"));
        }
    }
}

/// `out = x w + beta out` for `x: (B, out)`, `w: (out, in)`.
pub(crate) fn matmul_w(x: &ArrayView2<'_, f64>, w: &Array2<f64>, beta: f64, out: &mut ArrayViewMut2<'_, f64>) {
    if x.nrows() >= SMALL_BATCH || out.as_slice().is_none() || w.as_slice().is_none() {
        general_mat_mul(1.0, x, w, beta, out);
        return;
    }
    for (xr, mut orow) in x.rows().into_iter().zip(out.rows_mut()) {
        let o = orow.as_slice_mut().expect("standard layout");
        if beta != 1.0 {
            o.iter_mut().for_each(|v| *v *= beta);
        }
        for (&xv, wr) in xr.iter().zip(w.rows()) {
            add_scaled(o, wr.to_slice().expect("standard layout"), xv);
        }
    }
}

pub(crate) fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Euclidean norm over all parameter slices.
pub fn global_norm<P: Params>(p: &P) -> f64 {
    p.params()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grad` in place so its global norm does not exceed `max_norm`.
pub fn clip_global_norm<P: Params>(grad: &mut P, max_norm: f64) {
    let norm = global_norm(grad);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for s in grad.params_mut() {
            s.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// `dst += src` parameter-wise.
pub fn accumulate<P: Params>(dst: &mut P, src: &P) {
    let src_params = src.params();
    for (d, s) in dst.params_mut().into_iter().zip(src_params) {
        add_scaled(d, s, 1.0);
    }
}
