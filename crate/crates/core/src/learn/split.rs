//! Purely learning-based scheme: one GRU per band, the low band on a
//! decimated clock.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{batch_to_signal, context_batch, fit, seeded, FilteredLoss, PairSpec, PlainLoss, TrainOptions, WindowLoss};
use crate::error::{Error, Result};
use crate::filters::{filtfilt, filtfilt_matrix, filtfilt_padlen, ComplementaryPair};
use crate::neural::{Forecaster, GruModel};
use crate::resample::{check_nyquist, downsample, upsample_slice, ResampleRatio};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Hidden units of the high-band GRU.
    pub high_hidden: usize,
    /// Hidden units of the low-band GRU.
    pub low_hidden: usize,
    #[serde(default = "super::default_true")]
    pub readout_bias: bool,
    pub pair: PairSpec,
    pub k: ResampleRatio,
    /// Full-rate window settings; the low band uses `subtraj_len / k` and
    /// `warmup_len / k` slow steps.
    pub train: TrainOptions,
    /// Wrap the high-band rollout in a forward-backward highpass.
    pub hp_wrap: bool,
    pub seed: u64,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.k.get();
        if !check_nyquist(self.pair.cutoff_hz, self.pair.sample_rate_hz, k) {
            return Err(Error::invalid(
                "sampling_rate_k",
                format!(
                    "cutoff {} Hz is not below the decimated Nyquist frequency {} Hz",
                    self.pair.cutoff_hz,
                    self.pair.sample_rate_hz / (2.0 * k as f64)
                ),
            ));
        }
        if self.high_hidden == 0 || self.low_hidden == 0 {
            return Err(Error::invalid("hidden_size", "must be positive"));
        }
        let low = self.low_options();
        if low.warmup_len == 0 || low.warmup_len >= low.subtraj_len {
            return Err(Error::invalid(
                "warmup_phase",
                "warmup must span at least one decimated step and leave room for a rollout",
            ));
        }
        if self.hp_wrap && self.train.subtraj_len - self.train.warmup_len < filtfilt_padlen(self.pair.order) {
            return Err(Error::invalid("subtrajectory_length", "rollout too short for the highpass wrap"));
        }
        self.train.validate(usize::MAX)
    }

    pub fn low_options(&self) -> TrainOptions {
        let k = self.k.get();
        TrainOptions {
            subtraj_len: self.train.subtraj_len / k,
            warmup_len: self.train.warmup_len / k,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSplit {
    pub high: GruModel,
    pub low: GruModel,
    pub pair: ComplementaryPair,
    pub config: SplitConfig,
    pub high_loss: Vec<f64>,
    pub low_loss: Vec<f64>,
}

/// Full-rate high band and decimated low band, both filtered forward-backward.
pub fn decompose_training_signal(pair: &ComplementaryPair, y: &Signal, k: ResampleRatio) -> Result<(Signal, Signal)> {
    if !check_nyquist(pair.cutoff_hz(), pair.sample_rate_hz(), k.get()) {
        return Err(Error::invalid("k", "cutoff violates the decimated Nyquist limit"));
    }
    let high = filtfilt(&pair.high, y)?;
    let low = downsample(&filtfilt(&pair.low, y)?, k)?;
    Ok((high, low))
}

pub fn train_split(config: &SplitConfig, y: &Signal) -> Result<TrainedSplit> {
    config.validate()?;
    if y.len() <= config.train.warmup_len + 1 {
        return Err(Error::SignalTooShort {
            needed: config.train.warmup_len + 2,
            got: y.len(),
        });
    }
    let pair = config.pair.build()?;
    let (high_band, low_band) = decompose_training_signal(&pair, y, config.k)?;
    let channels = y.channels();

    let mut init = seeded(config.seed, 0);
    let high = GruModel::new(channels, config.high_hidden, config.readout_bias, &mut init)?;
    let opts = &config.train;
    let plain;
    let wrapped;
    let loss: &dyn WindowLoss = if config.hp_wrap {
        wrapped = FilteredLoss {
            target: high_band.samples(),
            warmup: opts.warmup_len,
            operator: filtfilt_matrix(&pair.high, opts.subtraj_len - opts.warmup_len),
        };
        &wrapped
    } else {
        plain = PlainLoss {
            target: high_band.samples(),
            warmup: opts.warmup_len,
        };
        &plain
    };
    let high_fit = fit(high, high_band.samples(), opts, loss, &mut seeded(config.seed, 1))?;

    let mut init = seeded(config.seed, 2);
    let low = GruModel::new(channels, config.low_hidden, config.readout_bias, &mut init)?;
    let low_opts = config.low_options();
    let low_loss = PlainLoss {
        target: low_band.samples(),
        warmup: low_opts.warmup_len,
    };
    let low_fit = fit(low, low_band.samples(), &low_opts, &low_loss, &mut seeded(config.seed, 3))?;

    Ok(TrainedSplit {
        high: high_fit.model,
        low: low_fit.model,
        pair,
        config: config.clone(),
        high_loss: high_fit.history,
        low_loss: low_fit.history,
    })
}

/// Predictions for steps `R..horizon` and the two band rollouts they sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPrediction {
    pub total: Signal,
    pub high: Signal,
    pub low: Signal,
}

/// Filters the whole context into bands, warms each GRU up on the first
/// `R` (or `R / k` slow) band samples and rolls out to `horizon`. The slow
/// rollout is interpolated back to the full rate.
pub fn predict_split(trained: &TrainedSplit, context: &Signal, horizon: usize) -> Result<SplitPrediction> {
    let cfg = &trained.config;
    let r = cfg.train.warmup_len;
    let k = cfg.k.get();
    let r_low = r / k;
    if horizon <= r {
        return Err(Error::invalid("horizon", format!("must exceed the warmup length {r}")));
    }
    let needed = r.max(filtfilt_padlen(trained.pair.order()));
    if context.len() < needed {
        return Err(Error::SignalTooShort {
            needed,
            got: context.len(),
        });
    }
    let fs = context.sample_rate_hz();
    let t0 = context.start_time_s();
    let n = horizon - r;
    let (high_band, low_band) = decompose_training_signal(&trained.pair, context, cfg.k)?;

    let high_ctx = context_batch(high_band.samples(), r);
    let (high_preds, _) = trained.high.forecast(high_ctx.view(), n)?;
    let mut high = batch_to_signal(&high_preds, fs, t0, r)?;
    if cfg.hp_wrap {
        high = filtfilt(&trained.pair.high, &high)?;
    }

    // Slow steps r_low.. cover full steps up to horizon - 1.
    let last_slow = (horizon - 1).div_ceil(k);
    let n_low = last_slow + 1 - r_low;
    let low_ctx = context_batch(low_band.samples(), r_low);
    let (low_preds, _) = trained.low.forecast(low_ctx.view(), n_low)?;
    let mut low = Array2::zeros((context.channels(), n));
    for c in 0..context.channels() {
        // Interpolate from the last context sample so steps between the
        // context and the first slow prediction are covered.
        let mut slow = vec![low_band.samples()[[c, r_low - 1]]];
        slow.extend(low_preds.slice(s![.., 0, c]).iter());
        let fine = upsample_slice(&slow, k);
        let offset = r - k * (r_low - 1);
        low.row_mut(c).assign(&ndarray::Array1::from(fine[offset..offset + n].to_vec()));
    }
    let low = Signal::new(low, fs)?.with_start_time(t0 + r as f64 / fs);
    let total = high.add(&low)?;
    Ok(SplitPrediction { total, high, low })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::LrSchedule;

    pub(crate) fn small_config() -> SplitConfig {
        SplitConfig {
            high_hidden: 3,
            low_hidden: 2,
            readout_bias: true,
            pair: PairSpec {
                order: 2,
                cutoff_hz: 0.4,
                sample_rate_hz: 10.0,
                perfect: false,
            },
            k: ResampleRatio::new(2).unwrap(),
            train: TrainOptions {
                epochs: 2,
                batch_size: 4,
                subtraj_len: 40,
                warmup_len: 10,
                lr: LrSchedule::constant(1e-3),
                grad_clip: None,
            },
            hp_wrap: false,
            seed: 5,
        }
    }

    fn signal() -> Signal {
        let y = (0..120).map(|i| (i as f64 * 0.07).sin() + 0.3 * (i as f64 * 0.9).cos()).collect();
        Signal::from_channel(y, 10.0).unwrap()
    }

    #[test]
    fn zero_epochs_records_initial_loss() {
        let mut cfg = small_config();
        cfg.train.epochs = 0;
        let t = train_split(&cfg, &signal()).unwrap();
        assert_eq!(t.high_loss.len(), 1);
        assert!(t.high_loss[0].is_finite() && t.low_loss[0].is_finite());
    }

    #[test]
    fn prediction_is_sum_of_bands_and_has_expected_length() {
        let t = train_split(&small_config(), &signal()).unwrap();
        let p = predict_split(&t, &signal(), 100).unwrap();
        assert_eq!(p.total.len(), 90);
        let sum = p.high.add(&p.low).unwrap();
        assert_eq!(sum, p.total);
        assert!((p.total.start_time_s() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn longer_horizon_extends_prediction() {
        let t = train_split(&small_config(), &signal()).unwrap();
        let a = predict_split(&t, &signal(), 60).unwrap();
        let b = predict_split(&t, &signal(), 62).unwrap();
        for i in 0..50 {
            assert!((a.total.first_channel()[i] - b.total.first_channel()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_violation_is_rejected() {
        let mut cfg = small_config();
        cfg.k = ResampleRatio::new(13).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_split(&small_config(), &signal()).unwrap();
        let b = train_split(&small_config(), &signal()).unwrap();
        assert_eq!(a, b);
    }
}
