//! Training schemes and prediction pipelines.
//!
//! * [`split`]: one recurrent model per frequency band, the slow band trained
//!   on a decimated clock.
//! * [`hybrid`]: a learned high band fused with a simulator's low band.
//! * [`baseline`]: single full-band models, optionally on the simulator
//!   residual.
//!
//! All schemes train on random subtrajectories: an epoch is one pass over
//! every admissible window start, shuffled and cut into batches. The first
//! `R` steps of each window initialise the model and the loss is the RMSE
//! over the remaining steps.

pub mod baseline;
pub mod hybrid;
pub mod split;

pub use baseline::{predict_baseline, train_baseline, train_residual, BaselineConfig, TrainedBaseline};
pub use hybrid::{hybrid_loss, predict_hybrid, train_hybrid, HybridConfig, TrainedHybrid};
pub use split::{decompose_training_signal, predict_split, train_split, SplitConfig, SplitPrediction, TrainedSplit};

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{design_butterworth, make_perfect_complement, make_shared_cutoff_pair, ComplementaryPair, FilterKind};
use crate::neural::{clip_global_norm, AdamState, Forecaster, GruModel, LrSchedule, RnnModel};
use crate::signal::Signal;

/// How to build the complementary pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    /// Perfect complement of the lowpass, or independent designs sharing
    /// the cutoff.
    pub perfect: bool,
}

impl PairSpec {
    pub fn build(&self) -> Result<ComplementaryPair> {
        if self.perfect {
            let low = design_butterworth(self.order, self.cutoff_hz, self.sample_rate_hz, FilterKind::Lowpass)?;
            Ok(make_perfect_complement(&low))
        } else {
            make_shared_cutoff_pair(self.order, self.cutoff_hz, self.sample_rate_hz)
        }
    }
}

/// Architecture of a single recurrent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Gru {
        hidden_size: usize,
        #[serde(default = "default_true")]
        readout_bias: bool,
    },
    /// Euler-integrated MLP with a recognition network.
    Rnn {
        /// Latent state size.
        input_dim: usize,
        hidden_dim: usize,
        rec_dim: usize,
        /// Euler step; defaults to the sample period of the data.
        #[serde(default)]
        step_size: Option<f64>,
    },
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    /// `context_len` is the warmup length for a GRU and the number of
    /// recognition steps for the MLP.
    pub fn build(&self, channels: usize, context_len: usize, sample_rate_hz: f64, rng: &mut ChaCha8Rng) -> Result<RecurrentModel> {
        match *self {
            ModelSpec::Gru { hidden_size, readout_bias } => {
                Ok(RecurrentModel::Gru(GruModel::new(channels, hidden_size, readout_bias, rng)?))
            }
            ModelSpec::Rnn {
                input_dim,
                hidden_dim,
                rec_dim,
                step_size,
            } => {
                let dt = step_size.unwrap_or(1.0 / sample_rate_hz);
                Ok(RecurrentModel::Rnn(RnnModel::new(
                    channels,
                    input_dim,
                    hidden_dim,
                    context_len,
                    rec_dim,
                    dt,
                    rng,
                )?))
            }
        }
    }
}

/// Either supported model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum RecurrentModel {
    Gru(GruModel),
    Rnn(RnnModel),
}

impl RecurrentModel {
    /// Predictions `(horizon, batch, channels)` after initialising from
    /// `context`.
    pub fn forecast(&self, context: ArrayView3<'_, f64>, horizon: usize) -> Result<Array3<f64>> {
        match self {
            RecurrentModel::Gru(m) => Ok(m.forecast(context, horizon)?.0),
            RecurrentModel::Rnn(m) => Ok(m.forecast(context, horizon)?.0),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            RecurrentModel::Gru(m) => m.hidden_dim,
            RecurrentModel::Rnn(m) => m.dynamics.hidden_dim,
        }
    }
}

/// Optimisation settings shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Window length `L`, context included.
    pub subtraj_len: usize,
    /// Context steps `R` at the start of every window.
    pub warmup_len: usize,
    pub lr: LrSchedule,
    /// Global gradient-norm clip; off when `None`.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl TrainOptions {
    pub fn validate(&self, available: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if self.warmup_len == 0 {
            return Err(Error::invalid("warmup_phase", "must be at least one step"));
        }
        if self.warmup_len >= self.subtraj_len {
            return Err(Error::invalid(
                "warmup_phase",
                format!(
                    "warmup ({}) must be shorter than the subtrajectory ({})",
                    self.warmup_len, self.subtraj_len
                ),
            ));
        }
        if self.subtraj_len > available {
            return Err(Error::SignalTooShort {
                needed: self.subtraj_len,
                got: available,
            });
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid("grad_clip", "must be positive"));
            }
        }
        self.lr.validate()
    }

    fn horizon(&self) -> usize {
        self.subtraj_len - self.warmup_len
    }
}

/// Independent random streams derived from one seed.
pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Root-mean-square error over every element, and its gradient with respect
/// to `pred`.
pub fn rmse_with_grad(pred: &Array3<f64>, target: &Array3<f64>) -> (f64, Array3<f64>) {
    let diff = pred - target;
    let count = diff.len() as f64;
    let loss = (diff.iter().map(|d| d * d).sum::<f64>() / count).sqrt();
    let grad = if loss > 0.0 { diff / (count * loss) } else { Array3::zeros(pred.raw_dim()) };
    (loss, grad)
}

/// Windows `[start, start + len)` of a `(channels, steps)` array stacked as
/// `(len, batch, channels)`.
pub(crate) fn gather(source: &Array2<f64>, starts: &[usize], offset: usize, len: usize) -> Array3<f64> {
    let mut out = Array3::zeros((len, starts.len(), source.nrows()));
    for (b, &s) in starts.iter().enumerate() {
        let window = source.slice(s![.., s + offset..s + offset + len]);
        out.slice_mut(s![.., b, ..]).assign(&window.t());
    }
    out
}

/// Loss of a batch of window predictions.
pub(crate) trait WindowLoss: Sync {
    /// `preds` is `(L - R, batch, channels)` for windows starting at
    /// `starts`; returns the loss and its gradient with respect to `preds`.
    fn evaluate(&self, preds: &Array3<f64>, starts: &[usize]) -> (f64, Array3<f64>);
}

/// RMSE against the post-context part of each window of `target`.
pub(crate) struct PlainLoss<'a> {
    pub target: &'a Array2<f64>,
    pub warmup: usize,
}

impl WindowLoss for PlainLoss<'_> {
    fn evaluate(&self, preds: &Array3<f64>, starts: &[usize]) -> (f64, Array3<f64>) {
        let target = gather(self.target, starts, self.warmup, preds.shape()[0]);
        rmse_with_grad(preds, &target)
    }
}

/// Applies a fixed linear map along time to every predicted sequence before
/// the RMSE; used to wrap rollouts in a forward-backward filter.
pub(crate) struct FilteredLoss<'a> {
    pub target: &'a Array2<f64>,
    pub warmup: usize,
    pub operator: Array2<f64>,
}

pub(crate) fn apply_along_time(op: &Array2<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (t, b, c) = x.dim();
    let flat = x.to_shape((t, b * c)).expect("contiguous").to_owned();
    op.dot(&flat).into_shape_with_order((t, b, c)).expect("same size")
}

impl WindowLoss for FilteredLoss<'_> {
    fn evaluate(&self, preds: &Array3<f64>, starts: &[usize]) -> (f64, Array3<f64>) {
        let filtered = apply_along_time(&self.operator, preds);
        let target = gather(self.target, starts, self.warmup, preds.shape()[0]);
        let (loss, g) = rmse_with_grad(&filtered, &target);
        (loss, apply_along_time(&self.operator.t().to_owned(), &g))
    }
}

/// A training objective over windows of a signal, for callers that need
/// the loss and gradient of one batch outside a training loop.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// RMSE against the target.
    Plain { target: &'a Signal },
    /// RMSE after forward-backward filtering the rollout with `pair.high`.
    Highpass { target: &'a Signal, pair: &'a ComplementaryPair },
    /// RMSE after fusing the rollout with `sim` through the pair.
    Hybrid {
        target: &'a Signal,
        sim: &'a Signal,
        pair: &'a ComplementaryPair,
    },
}

/// Loss of the windows starting at `starts` (contexts from
/// `context_source`) and its exact gradient with respect to the model
/// parameters.
pub fn batch_loss_and_grad<M: Forecaster>(
    model: &M,
    objective: Objective<'_>,
    context_source: &Signal,
    starts: &[usize],
    warmup_len: usize,
    subtraj_len: usize,
) -> Result<(f64, M)> {
    if warmup_len == 0 || warmup_len >= subtraj_len {
        return Err(Error::invalid("warmup_len", "must be in 1..subtraj_len"));
    }
    if starts.iter().any(|&s| s + subtraj_len > context_source.len()) {
        return Err(Error::SignalTooShort {
            needed: starts.iter().max().copied().unwrap_or(0) + subtraj_len,
            got: context_source.len(),
        });
    }
    let horizon = subtraj_len - warmup_len;
    let plain;
    let filtered;
    let fused;
    let loss: &dyn WindowLoss = match objective {
        Objective::Plain { target } => {
            plain = PlainLoss {
                target: target.samples(),
                warmup: warmup_len,
            };
            &plain
        }
        Objective::Highpass { target, pair } => {
            filtered = FilteredLoss {
                target: target.samples(),
                warmup: warmup_len,
                operator: crate::filters::filtfilt_matrix(&pair.high, horizon),
            };
            &filtered
        }
        Objective::Hybrid { target, sim, pair } => {
            fused = hybrid::HybridLoss {
                target: target.samples(),
                sim: sim.samples(),
                pair,
                warmup: warmup_len,
            };
            &fused
        }
    };
    let ctx = gather(context_source.samples(), starts, 0, warmup_len);
    let (preds, tape) = model.forecast(ctx.view(), horizon)?;
    let (l, g) = loss.evaluate(&preds, starts);
    if !l.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, loss: l });
    }
    Ok((l, model.backward(&tape, g.view())))
}

/// Result of one optimisation run.
pub(crate) struct Fitted<M> {
    pub model: M,
    /// Loss over all windows before training, then the mean batch loss of
    /// every epoch.
    pub history: Vec<f64>,
}

/// Adam on random windows of `context_source` (contexts) scored by `loss`.
pub(crate) fn fit<M: Forecaster>(
    mut model: M,
    context_source: &Array2<f64>,
    opts: &TrainOptions,
    loss: &dyn WindowLoss,
    rng: &mut ChaCha8Rng,
) -> Result<Fitted<M>> {
    let n = context_source.ncols();
    opts.validate(n)?;
    let horizon = opts.horizon();
    let mut starts: Vec<usize> = (0..=n - opts.subtraj_len).collect();

    let step = |model: &M, batch: &[usize]| -> Result<(f64, Array3<f64>, M::Tape)> {
        let ctx = gather(context_source, batch, 0, opts.warmup_len);
        let (preds, tape) = model.forecast(ctx.view(), horizon)?;
        let (l, g) = loss.evaluate(&preds, batch);
        Ok((l, g, tape))
    };

    let mut initial = 0.0;
    for chunk in starts.chunks(opts.batch_size) {
        let (l, _, _) = step(&model, chunk).map_err(|e| diverged(e, 0, f64::NAN))?;
        initial += l * l * chunk.len() as f64;
    }
    let initial = (initial / starts.len() as f64).sqrt();
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, loss: initial });
    }
    let mut history = vec![initial];

    let mut adam = AdamState::new(&model, opts.lr.initial);
    for epoch in 0..opts.epochs {
        adam.lr = opts.lr.rate_at(epoch);
        starts.shuffle(rng);
        let mut total = 0.0;
        for chunk in starts.chunks(opts.batch_size) {
            let (l, g, tape) = step(&model, chunk).map_err(|e| diverged(e, epoch, f64::NAN))?;
            if !l.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: l });
            }
            let mut grad = model.backward(&tape, g.view());
            if let Some(c) = opts.grad_clip {
                clip_global_norm(&mut grad, c);
            }
            adam.step(&mut model, &grad)?;
            total += l * chunk.len() as f64;
        }
        if !model.all_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: f64::NAN });
        }
        history.push(total / starts.len() as f64);
    }
    Ok(Fitted { model, history })
}

fn diverged(e: Error, epoch: usize, loss: f64) -> Error {
    match e {
        Error::Diverged { .. } => Error::TrainingDiverged { epoch, loss },
        other => other,
    }
}

/// Dispatches [`fit`] on the model family.
pub(crate) fn fit_any(
    model: RecurrentModel,
    context_source: &Array2<f64>,
    opts: &TrainOptions,
    loss: &dyn WindowLoss,
    rng: &mut ChaCha8Rng,
) -> Result<(RecurrentModel, Vec<f64>)> {
    Ok(match model {
        RecurrentModel::Gru(m) => {
            let f = fit(m, context_source, opts, loss, rng)?;
            (RecurrentModel::Gru(f.model), f.history)
        }
        RecurrentModel::Rnn(m) => {
            let f = fit(m, context_source, opts, loss, rng)?;
            (RecurrentModel::Rnn(f.model), f.history)
        }
    })
}

/// `(channels, steps)` prefix of a signal as a `(steps, 1, channels)` batch.
pub(crate) fn context_batch(samples: &Array2<f64>, len: usize) -> Array3<f64> {
    samples.slice(s![.., ..len]).t().to_owned().insert_axis(Axis(1))
}

/// `(steps, 1, channels)` predictions as a signal starting at `start_step`
/// of a grid with rate `fs` and origin `t0`.
pub(crate) fn batch_to_signal(preds: &Array3<f64>, fs: f64, t0: f64, start_step: usize) -> Result<Signal> {
    let samples = preds.index_axis(Axis(1), 0).t().to_owned();
    Ok(Signal::new(samples, fs)?.with_start_time(t0 + start_step as f64 / fs))
}
