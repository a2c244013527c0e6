//! Continuous-time latent dynamics integrated with explicit Euler steps, and
//! the recognition network that estimates the initial latent state.
//!
//! `f(h) = W3 tanh(W2 tanh(W1 h + b1) + b2) + b3`, `h' = h + dt * f(h)`; the
//! observation is the first `output_dim` latent components.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{matmul_w, matmul_wt, uniform_matrix, uniform_vector, Forecaster, Params};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// A tanh-activated affine layer `(out, in)` with bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Dense {
    fn new(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: uniform_matrix(rng, outputs, inputs, bound),
            b: uniform_vector(rng, outputs, bound),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::from_shape_fn((x.nrows(), self.b.len()), |(_, j)| self.b[j]);
        matmul_wt(&x, &self.w, 1.0, &mut out.view_mut());
        out
    }

    /// Accumulates weight gradients for pre-activation gradient `d` and
    /// returns the gradient with respect to the layer input.
    fn backward(&self, x: ArrayView2<'_, f64>, d: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.w += &d.t().dot(&x);
        grad.b += &d.sum_axis(Axis(0));
        d.dot(&self.w)
    }

    /// Adds the weight gradients for stacked pre-activation gradients `d`
    /// and layer inputs `x`.
    fn accumulate(&mut self, d: &Array2<f64>, x: &Array2<f64>) {
        general_mat_mul(1.0, &d.t(), x, 1.0, &mut self.w);
        self.b += &d.sum_axis(Axis(0));
    }

    fn slices(&self) -> [&[f64]; 2] {
        [
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn tanh_inplace(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(super::tanh);
    a
}

/// Multiplies `d` by `1 - t^2` in place, `t` being a tanh output.
fn tanh_backward(d: &mut ArrayViewMut2<'_, f64>, t: &Array2<f64>) {
    ndarray::Zip::from(d).and(t).for_each(|g, &tv| *g *= 1.0 - tv * tv);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerMlpModel {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub step_size: f64,
    layer1: Dense,
    layer2: Dense,
    layer3: Dense,
}

#[derive(Debug, Clone)]
struct EulerCache {
    h: Array2<f64>,
    t1: Array2<f64>,
    t2: Array2<f64>,
}

impl EulerMlpModel {
    pub fn new(
        latent_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        step_size: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::invalid("step_size", "must be positive and finite"));
        }
        if latent_dim == 0 || hidden_dim == 0 || output_dim == 0 || output_dim > latent_dim {
            return Err(Error::invalid(
                "input_dim",
                "latent dimension must be positive and at least the output dimension",
            ));
        }
        Ok(Self {
            latent_dim,
            hidden_dim,
            output_dim,
            step_size,
            layer1: Dense::new(rng, latent_dim, hidden_dim),
            layer2: Dense::new(rng, hidden_dim, hidden_dim),
            layer3: Dense::new(rng, hidden_dim, latent_dim),
        })
    }

    /// Sets every weight and bias of the vector field to zero, so `f = 0`.
    pub fn zero_dynamics(&mut self) {
        for s in self.params_mut() {
            s.fill(0.0);
        }
    }

    fn step(&self, h: Array2<f64>) -> (Array2<f64>, EulerCache) {
        let t1 = tanh_inplace(self.layer1.forward(h.view()));
        let t2 = tanh_inplace(self.layer2.forward(t1.view()));
        let f = self.layer3.forward(t2.view());
        let mut next = h.clone();
        next.scaled_add(self.step_size, &f);
        (next, EulerCache { h, t1, t2 })
    }

    /// Backpropagates `dh_next` through one step. Pre-activation gradients
    /// go into the rows of `d` (`[df, da2, da1]`) so weight gradients can be
    /// formed for all steps at once.
    fn step_backward(&self, cache: &EulerCache, dh_next: &Array2<f64>, d: [ArrayViewMut2<'_, f64>; 3]) -> Array2<f64> {
        let [mut df, mut da2, mut da1] = d;
        df.assign(dh_next);
        df *= self.step_size;
        matmul_w(&df.view(), &self.layer3.w, 0.0, &mut da2);
        tanh_backward(&mut da2, &cache.t2);
        matmul_w(&da2.view(), &self.layer2.w, 0.0, &mut da1);
        tanh_backward(&mut da1, &cache.t1);
        let mut dh = dh_next.clone();
        matmul_w(&da1.view(), &self.layer1.w, 1.0, &mut dh.view_mut());
        dh
    }

    fn zeros_like(&self) -> Self {
        Self {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            layer3: self.layer3.zeros_like(),
            ..*self
        }
    }

    /// Rolls out from `h0` (`(B, latent)`), returning outputs `(n, B, out)`,
    /// the states after each step and the step caches.
    fn rollout_batch(&self, h0: Array2<f64>, n_steps: usize) -> Result<(Array3<f64>, Vec<EulerCache>)> {
        let batch = h0.nrows();
        let mut preds = Array3::zeros((n_steps, batch, self.output_dim));
        let mut caches = Vec::with_capacity(n_steps);
        let mut h = h0;
        for i in 0..n_steps {
            let (next, cache) = self.step(h);
            let out = next.slice(ndarray::s![.., ..self.output_dim]);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged { step: i });
            }
            preds.index_axis_mut(Axis(0), i).assign(&out);
            caches.push(cache);
            h = next;
        }
        Ok((preds, caches))
    }

    /// Gradient with respect to the parameters and the initial state.
    fn rollout_backward(&self, caches: &[EulerCache], grad_pred: ArrayView3<'_, f64>, grad: &mut EulerMlpModel) -> Array2<f64> {
        let batch = grad_pred.shape()[1];
        let rows = caches.len() * batch;
        let (hd, ld) = (self.hidden_dim, self.latent_dim);
        let mut df = Array2::<f64>::zeros((rows, ld));
        let mut da2 = Array2::<f64>::zeros((rows, hd));
        let mut da1 = Array2::<f64>::zeros((rows, hd));
        let mut h = Array2::<f64>::zeros((rows, ld));
        let mut t1 = Array2::<f64>::zeros((rows, hd));
        let mut t2 = Array2::<f64>::zeros((rows, hd));
        let mut dh = Array2::<f64>::zeros((batch, ld));
        for i in (0..caches.len()).rev() {
            let r = ndarray::s![i * batch..(i + 1) * batch, ..];
            let mut head = dh.slice_mut(ndarray::s![.., ..self.output_dim]);
            head += &grad_pred.index_axis(Axis(0), i);
            dh = self.step_backward(&caches[i], &dh, [df.slice_mut(r), da2.slice_mut(r), da1.slice_mut(r)]);
            h.slice_mut(r).assign(&caches[i].h);
            t1.slice_mut(r).assign(&caches[i].t1);
            t2.slice_mut(r).assign(&caches[i].t2);
        }
        grad.layer3.accumulate(&df, &t2);
        grad.layer2.accumulate(&da2, &t1);
        grad.layer1.accumulate(&da1, &h);
        dh
    }
}

impl Params for EulerMlpModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = Vec::with_capacity(6);
        p.extend(self.layer1.slices());
        p.extend(self.layer2.slices());
        p.extend(self.layer3.slices());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::with_capacity(6);
        p.extend(self.layer1.slices_mut());
        p.extend(self.layer2.slices_mut());
        p.extend(self.layer3.slices_mut());
        p
    }
}

/// Maps the first `context_len` observations to an initial latent state.
/// Every layer, the output included, is tanh-activated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionNet {
    pub context_len: usize,
    pub channels: usize,
    pub rec_dim: usize,
    pub latent_dim: usize,
    layer1: Dense,
    layer2: Dense,
    layer3: Dense,
}

#[derive(Debug, Clone)]
struct RecognitionCache {
    x: Array2<f64>,
    t1: Array2<f64>,
    t2: Array2<f64>,
    t3: Array2<f64>,
}

impl RecognitionNet {
    pub fn new(context_len: usize, channels: usize, rec_dim: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if context_len == 0 || channels == 0 || rec_dim == 0 || latent_dim == 0 {
            return Err(Error::invalid("recognition_steps", "dimensions must be positive"));
        }
        let inputs = context_len * channels;
        Ok(Self {
            context_len,
            channels,
            rec_dim,
            latent_dim,
            layer1: Dense::new(rng, inputs, rec_dim),
            layer2: Dense::new(rng, rec_dim, rec_dim),
            layer3: Dense::new(rng, rec_dim, latent_dim),
        })
    }

    /// Flattens `(steps, batch, channels)` into `(batch, steps * channels)`,
    /// time-major within each row.
    fn flatten(&self, context: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        let shape = context.shape();
        if shape[0] != self.context_len || shape[2] != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "recognition expects {} steps of {} channels, got {} of {}",
                self.context_len, self.channels, shape[0], shape[2]
            )));
        }
        let batch = shape[1];
        let mut x = Array2::zeros((batch, self.context_len * self.channels));
        for t in 0..self.context_len {
            for b in 0..batch {
                for c in 0..self.channels {
                    x[[b, t * self.channels + c]] = context[[t, b, c]];
                }
            }
        }
        Ok(x)
    }

    fn forward(&self, context: ArrayView3<'_, f64>) -> Result<(Array2<f64>, RecognitionCache)> {
        let x = self.flatten(context)?;
        let t1 = tanh_inplace(self.layer1.forward(x.view()));
        let t2 = tanh_inplace(self.layer2.forward(t1.view()));
        let t3 = tanh_inplace(self.layer3.forward(t2.view()));
        Ok((t3.clone(), RecognitionCache { x, t1, t2, t3 }))
    }

    fn backward(&self, cache: &RecognitionCache, d_out: Array2<f64>, grad: &mut RecognitionNet) {
        let mut da3 = d_out;
        tanh_backward(&mut da3.view_mut(), &cache.t3);
        let mut da2 = self.layer3.backward(cache.t2.view(), &da3, &mut grad.layer3);
        tanh_backward(&mut da2.view_mut(), &cache.t2);
        let mut da1 = self.layer2.backward(cache.t1.view(), &da2, &mut grad.layer2);
        tanh_backward(&mut da1.view_mut(), &cache.t1);
        self.layer1.backward(cache.x.view(), &da1, &mut grad.layer1);
    }

    fn zeros_like(&self) -> Self {
        Self {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
            layer3: self.layer3.zeros_like(),
            ..*self
        }
    }
}

impl Params for RecognitionNet {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = Vec::with_capacity(6);
        p.extend(self.layer1.slices());
        p.extend(self.layer2.slices());
        p.extend(self.layer3.slices());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::with_capacity(6);
        p.extend(self.layer1.slices_mut());
        p.extend(self.layer2.slices_mut());
        p.extend(self.layer3.slices_mut());
        p
    }
}

/// Euler-MLP dynamics paired with the recognition network that initialises
/// them; trained jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub dynamics: EulerMlpModel,
    pub recognition: RecognitionNet,
}

#[derive(Debug, Clone)]
pub struct RnnTape {
    recognition: RecognitionCache,
    steps: Vec<EulerCache>,
}

impl RnnModel {
    /// `latent_dim` is the config's `input_dim`; `context_len` the number of
    /// recognition steps.
    pub fn new(
        channels: usize,
        latent_dim: usize,
        hidden_dim: usize,
        context_len: usize,
        rec_dim: usize,
        step_size: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let dynamics = EulerMlpModel::new(latent_dim, hidden_dim, channels, step_size, rng)?;
        let recognition = RecognitionNet::new(context_len, channels, rec_dim, latent_dim, rng)?;
        Ok(Self { dynamics, recognition })
    }

    pub fn context_len(&self) -> usize {
        self.recognition.context_len
    }
}

impl Params for RnnModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.dynamics.params();
        p.extend(self.recognition.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.dynamics.params_mut();
        p.extend(self.recognition.params_mut());
        p
    }
}

impl Forecaster for RnnModel {
    type Tape = RnnTape;

    /// Uses exactly the last `context_len` context steps for recognition;
    /// predictions start one step after the context.
    fn forecast(&self, context: ArrayView3<'_, f64>, horizon: usize) -> Result<(Array3<f64>, RnnTape)> {
        let steps = context.shape()[0];
        let r = self.context_len();
        if steps < r {
            return Err(Error::SignalTooShort { needed: r, got: steps });
        }
        let window = context.slice(ndarray::s![steps - r.., .., ..]);
        let (h0, recognition) = self.recognition.forward(window)?;
        let (preds, steps) = self.dynamics.rollout_batch(h0, horizon)?;
        Ok((preds, RnnTape { recognition, steps }))
    }

    fn backward(&self, tape: &RnnTape, grad_pred: ArrayView3<'_, f64>) -> Self {
        let mut grad = self.zeros_like();
        let dh0 = self.dynamics.rollout_backward(&tape.steps, grad_pred, &mut grad.dynamics);
        self.recognition.backward(&tape.recognition, dh0, &mut grad.recognition);
        grad
    }

    fn zeros_like(&self) -> Self {
        Self {
            dynamics: self.dynamics.zeros_like(),
            recognition: self.recognition.zeros_like(),
        }
    }

    fn output_dim(&self) -> usize {
        self.dynamics.output_dim
    }
}

/// Initial latent state estimated from exactly `context_len` observations.
pub fn recognize(net: &RecognitionNet, observations: &Signal) -> Result<Array1<f64>> {
    if observations.len() != net.context_len {
        return Err(Error::ShapeMismatch(format!(
            "recognition expects {} observations, got {}",
            net.context_len,
            observations.len()
        )));
    }
    let ctx = signal_to_batch(observations);
    let (h, _) = net.forward(ctx.view())?;
    Ok(h.index_axis_move(Axis(0), 0))
}

/// Autonomous rollout from `h_init`; outputs are the leading latent
/// components after each step.
pub fn rollout_euler(model: &EulerMlpModel, h_init: &Array1<f64>, n_steps: usize, sample_rate_hz: f64) -> Result<Signal> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "rollout needs at least one step"));
    }
    if h_init.len() != model.latent_dim {
        return Err(Error::ShapeMismatch("initial state has the wrong size".into()));
    }
    let h0 = h_init.view().insert_axis(Axis(0)).to_owned();
    let (preds, _) = model.rollout_batch(h0, n_steps)?;
    let samples = preds.index_axis(Axis(1), 0).t().to_owned();
    Signal::new(samples, sample_rate_hz)
}

/// `(channels, steps)` signal as a `(steps, 1, channels)` batch.
pub(crate) fn signal_to_batch(y: &Signal) -> Array3<f64> {
    let t = y.samples().t();
    t.to_owned().insert_axis(Axis(1))
}
