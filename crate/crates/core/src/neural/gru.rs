//! Gated recurrent unit with a linear readout, fed its own predictions in
//! closed loop.
//!
//! Gates are stacked `[reset; update; candidate]` in `w_input`, `w_hidden`
//! and both bias vectors. The reset gate scales the recurrent candidate term
//! including its bias: `n = tanh(W_n y + b_in + r * (U_n h + b_hn))`,
//! `h' = (1 - z) * n + z * h`. This is the torch.nn.GRU parametrisation.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{matmul_w, matmul_wt, sigmoid, tanh, uniform_matrix, uniform_vector, Forecaster, Params};
use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `(3H, D_y)`
    pub w_input: Array2<f64>,
    /// `(3H, H)`
    pub w_hidden: Array2<f64>,
    /// `(3H)`
    pub bias_input: Array1<f64>,
    /// `(3H)`
    pub bias_hidden: Array1<f64>,
    /// `(D_y, H)`
    pub readout: Array2<f64>,
    /// `(D_y)`; stays zero and untrained when `readout_has_bias` is false.
    pub readout_bias: Array1<f64>,
    pub readout_has_bias: bool,
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Array2<f64>,
    input: Array2<f64>,
    /// `[r, z, n]` after activation, `(B, 3H)`.
    gates: Array2<f64>,
    /// `U_n h_prev + b_hn`, `(B, H)`.
    hidden_candidate: Array2<f64>,
}

/// Everything [`GruModel::backward`] needs from a forecast.
#[derive(Debug, Clone)]
pub struct GruTape {
    warmup: Vec<StepCache>,
    rollout: Vec<StepCache>,
    /// Hidden state after each rollout step, the readout's input.
    states: Vec<Array2<f64>>,
}

impl GruModel {
    /// Uniform initialisation in `[-1/sqrt(H), 1/sqrt(H)]` for every weight
    /// and bias, the readout included.
    pub fn new(input_dim: usize, hidden_dim: usize, readout_has_bias: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim", "dimensions must be positive"));
        }
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        Ok(Self {
            input_dim,
            hidden_dim,
            w_input: uniform_matrix(rng, 3 * hidden_dim, input_dim, bound),
            w_hidden: uniform_matrix(rng, 3 * hidden_dim, hidden_dim, bound),
            bias_input: uniform_vector(rng, 3 * hidden_dim, bound),
            bias_hidden: uniform_vector(rng, 3 * hidden_dim, bound),
            readout: uniform_matrix(rng, input_dim, hidden_dim, bound),
            readout_bias: if readout_has_bias {
                uniform_vector(rng, input_dim, bound)
            } else {
                Array1::zeros(input_dim)
            },
            readout_has_bias,
        })
    }

    fn cell(&self, h: ArrayView2<'_, f64>, u: ArrayView2<'_, f64>) -> (Array2<f64>, StepCache) {
        let hd = self.hidden_dim;
        let b = h.nrows();
        let mut gx = Array2::from_shape_fn((b, 3 * hd), |(_, j)| self.bias_input[j]);
        matmul_wt(&u, &self.w_input, 1.0, &mut gx.view_mut());
        let mut gh = Array2::from_shape_fn((b, 3 * hd), |(_, j)| self.bias_hidden[j]);
        matmul_wt(&h, &self.w_hidden, 1.0, &mut gh.view_mut());
        let mut gates = gx;
        let mut h_new = Array2::zeros(h.raw_dim());
        for i in 0..b {
            let mut row = gates.row_mut(i);
            let row = row.as_slice_mut().expect("standard layout");
            let (r, rest) = row.split_at_mut(hd);
            let (z, n) = rest.split_at_mut(hd);
            let ghr = gh.row(i);
            let ghr = ghr.as_slice().expect("standard layout");
            let hp = h.row(i);
            let mut out = h_new.row_mut(i);
            for j in 0..hd {
                r[j] = sigmoid(r[j] + ghr[j]);
                z[j] = sigmoid(z[j] + ghr[hd + j]);
                n[j] = tanh(n[j] + r[j] * ghr[2 * hd + j]);
                out[j] = (1.0 - z[j]) * n[j] + z[j] * hp[j];
            }
        }
        let cache = StepCache {
            h_prev: h.to_owned(),
            input: u.to_owned(),
            hidden_candidate: gh.slice(s![.., 2 * hd..]).to_owned(),
            gates,
        };
        (h_new, cache)
    }

    /// Backpropagates `dh_new` through one cell. Writes the pre-activation
    /// gradients of the input path into `d_x` and of the recurrent path into
    /// `d_h` (both `(B, 3H)`) and returns `dh_prev`. The recurrent path sees
    /// the candidate pre-activation scaled by `r`.
    fn cell_backward(&self, cache: &StepCache, dh_new: &Array2<f64>, mut d_x: ArrayViewMut2<'_, f64>, mut d_h: ArrayViewMut2<'_, f64>) -> Array2<f64> {
        let hd = self.hidden_dim;
        let mut dh_prev = Array2::<f64>::zeros(dh_new.raw_dim());
        for i in 0..dh_new.nrows() {
            let g = dh_new.row(i);
            let gates = cache.gates.row(i);
            let gates = gates.as_slice().expect("standard layout");
            let (r, rest) = gates.split_at(hd);
            let (z, n) = rest.split_at(hd);
            let hp = cache.h_prev.row(i);
            let hc = cache.hidden_candidate.row(i);
            let mut dx = d_x.row_mut(i);
            let dx = dx.as_slice_mut().expect("standard layout");
            let mut dhr = d_h.row_mut(i);
            let dhr = dhr.as_slice_mut().expect("standard layout");
            let mut dp = dh_prev.row_mut(i);
            for j in 0..hd {
                let (gv, rv, zv, nv) = (g[j], r[j], z[j], n[j]);
                let dan = gv * (1.0 - zv) * (1.0 - nv * nv);
                let daz = gv * (hp[j] - nv) * zv * (1.0 - zv);
                let dar = dan * hc[j] * rv * (1.0 - rv);
                dx[j] = dar;
                dx[hd + j] = daz;
                dx[2 * hd + j] = dan;
                dhr[j] = dar;
                dhr[hd + j] = daz;
                dhr[2 * hd + j] = dan * rv;
                dp[j] = gv * zv;
            }
        }
        matmul_w(&d_h.view(), &self.w_hidden, 1.0, &mut dh_prev.view_mut());
        dh_prev
    }

    fn readout_batch(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = h.dot(&self.readout.t());
        if self.readout_has_bias {
            out += &self.readout_bias;
        }
        out
    }

    fn check_context(&self, context: &ArrayView3<'_, f64>) -> Result<()> {
        if context.shape()[0] == 0 || context.shape()[1] == 0 {
            return Err(Error::EmptySignal);
        }
        if context.shape()[2] != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "context has {} channels, model expects {}",
                context.shape()[2],
                self.input_dim
            )));
        }
        Ok(())
    }
}

impl Params for GruModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = vec![
            self.w_input.as_slice().expect("standard layout"),
            self.w_hidden.as_slice().expect("standard layout"),
            self.bias_input.as_slice().expect("standard layout"),
            self.bias_hidden.as_slice().expect("standard layout"),
            self.readout.as_slice().expect("standard layout"),
        ];
        if self.readout_has_bias {
            p.push(self.readout_bias.as_slice().expect("standard layout"));
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = vec![
            self.w_input.as_slice_mut().expect("standard layout"),
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.bias_input.as_slice_mut().expect("standard layout"),
            self.bias_hidden.as_slice_mut().expect("standard layout"),
            self.readout.as_slice_mut().expect("standard layout"),
        ];
        if self.readout_has_bias {
            p.push(self.readout_bias.as_slice_mut().expect("standard layout"));
        }
        p
    }
}

impl Forecaster for GruModel {
    type Tape = GruTape;

    /// Warms up on every context step but the last, then rolls out from the
    /// last observation.
    fn forecast(&self, context: ArrayView3<'_, f64>, horizon: usize) -> Result<(Array3<f64>, GruTape)> {
        self.check_context(&context)?;
        let steps = context.shape()[0];
        let batch = context.shape()[1];
        let mut h = Array2::zeros((batch, self.hidden_dim));
        let mut warm = Vec::with_capacity(steps - 1);
        for t in 0..steps - 1 {
            let (h_new, cache) = self.cell(h.view(), context.index_axis(Axis(0), t));
            warm.push(cache);
            h = h_new;
        }
        let mut u = context.index_axis(Axis(0), steps - 1).to_owned();
        let mut preds = Array3::zeros((horizon, batch, self.input_dim));
        let mut rollout = Vec::with_capacity(horizon);
        let mut states = Vec::with_capacity(horizon);
        for i in 0..horizon {
            let (h_new, cache) = self.cell(h.view(), u.view());
            let out = self.readout_batch(&h_new);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged { step: i });
            }
            preds.index_axis_mut(Axis(0), i).assign(&out);
            rollout.push(cache);
            states.push(h_new.clone());
            h = h_new;
            u = out;
        }
        Ok((preds, GruTape { warmup: warm, rollout, states }))
    }

    fn backward(&self, tape: &GruTape, grad_pred: ArrayView3<'_, f64>) -> GruModel {
        let mut grad = self.zeros_like();
        let hd = self.hidden_dim;
        let horizon = tape.rollout.len();
        let batch = grad_pred.shape()[1];
        let steps = horizon + tape.warmup.len();
        // Pre-activation gradients of every step, stacked so the weight
        // gradients come out of one product each.
        let mut d_x = Array2::<f64>::zeros((steps * batch, 3 * hd));
        let mut d_h = Array2::<f64>::zeros((steps * batch, 3 * hd));
        let mut h_prev = Array2::<f64>::zeros((steps * batch, hd));
        let mut inputs = Array2::<f64>::zeros((steps * batch, self.input_dim));
        let mut dh = Array2::<f64>::zeros((batch, hd));
        let mut d_out = Array2::<f64>::zeros((batch, self.input_dim));
        let warm = tape.warmup.len();
        for t in (0..steps).rev() {
            let cache = if t < warm { &tape.warmup[t] } else { &tape.rollout[t - warm] };
            let rows = s![t * batch..(t + 1) * batch, ..];
            if t >= warm {
                let i = t - warm;
                d_out += &grad_pred.index_axis(Axis(0), i);
                general_mat_mul(1.0, &d_out.t(), &tape.states[i], 1.0, &mut grad.readout);
                if self.readout_has_bias {
                    grad.readout_bias += &d_out.sum_axis(Axis(0));
                }
                general_mat_mul(1.0, &d_out, &self.readout, 1.0, &mut dh);
            }
            dh = self.cell_backward(cache, &dh, d_x.slice_mut(rows), d_h.slice_mut(rows));
            h_prev.slice_mut(rows).assign(&cache.h_prev);
            inputs.slice_mut(rows).assign(&cache.input);
            // The input of a rollout step is the previous prediction.
            d_out = d_x.slice(rows).dot(&self.w_input);
        }
        general_mat_mul(1.0, &d_x.t(), &inputs, 0.0, &mut grad.w_input);
        general_mat_mul(1.0, &d_h.t(), &h_prev, 0.0, &mut grad.w_hidden);
        grad.bias_input = d_x.sum_axis(Axis(0));
        grad.bias_hidden = d_h.sum_axis(Axis(0));
        grad
    }

    fn zeros_like(&self) -> Self {
        let hd = self.hidden_dim;
        let dy = self.input_dim;
        Self {
            input_dim: dy,
            hidden_dim: hd,
            w_input: Array2::zeros((3 * hd, dy)),
            w_hidden: Array2::zeros((3 * hd, hd)),
            bias_input: Array1::zeros(3 * hd),
            bias_hidden: Array1::zeros(3 * hd),
            readout: Array2::zeros((dy, hd)),
            readout_bias: Array1::zeros(dy),
            readout_has_bias: self.readout_has_bias,
        }
    }

    fn output_dim(&self) -> usize {
        self.input_dim
    }
}

/// One recurrent update for a single sequence.
pub fn gru_step(model: &GruModel, h: &Array1<f64>, y: &Array1<f64>) -> Array1<f64> {
    let hb = h.view().insert_axis(Axis(0));
    let yb = y.view().insert_axis(Axis(0));
    model.cell(hb, yb).0.index_axis_move(Axis(0), 0)
}

/// Feeds every observation through the cell starting from `h = 0`.
pub fn warmup(model: &GruModel, observations: &Signal) -> Result<Array1<f64>> {
    if observations.channels() != model.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "observations have {} channels, model expects {}",
            observations.channels(),
            model.input_dim
        )));
    }
    let mut h = Array1::zeros(model.hidden_dim);
    for t in 0..observations.len() {
        h = gru_step(model, &h, &observations.samples().column(t).to_owned());
    }
    Ok(h)
}

/// Closed-loop prediction of `n_steps` samples: each step consumes the
/// previous prediction, starting from `y_init`.
pub fn rollout_gru(
    model: &GruModel,
    h_init: &Array1<f64>,
    y_init: &Array1<f64>,
    n_steps: usize,
    sample_rate_hz: f64,
) -> Result<Signal> {
    if h_init.len() != model.hidden_dim || y_init.len() != model.input_dim {
        return Err(Error::ShapeMismatch("initial state or input has the wrong size".into()));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "rollout needs at least one step"));
    }
    let mut out = Array2::zeros((model.input_dim, n_steps));
    let mut h = h_init.clone();
    let mut u = y_init.clone();
    for i in 0..n_steps {
        h = gru_step(model, &h, &u);
        let mut y = model.readout.dot(&h);
        if model.readout_has_bias {
            y += &model.readout_bias;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: i });
        }
        out.column_mut(i).assign(&y);
        u = y;
    }
    Signal::new(out, sample_rate_hz)
}
