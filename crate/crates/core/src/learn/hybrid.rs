//! Hybrid scheme: the network's rollout supplies the high band and a
//! simulator the low band, fused by the complementary recurrence. Only the
//! network is differentiated; the simulator output is a constant input.

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{batch_to_signal, context_batch, fit_any, rmse_with_grad, seeded, ModelSpec, PairSpec, RecurrentModel, TrainOptions, WindowLoss};
use crate::error::{Error, Result};
use crate::filters::{combine_slice, combine_vjp_high, complementary_combine, ComplementaryPair, FilterInit};
use crate::signal::{rmse, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub model: ModelSpec,
    pub pair: PairSpec,
    /// `warmup_len` is the GRU warmup or the number of recognition steps.
    pub train: TrainOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedHybrid {
    pub model: RecurrentModel,
    pub pair: ComplementaryPair,
    pub config: HybridConfig,
    pub loss: Vec<f64>,
}

/// Fuses each predicted window with the simulator over the same steps,
/// starting the recurrence from the first `P` training values.
pub(crate) struct HybridLoss<'a> {
    pub target: &'a Array2<f64>,
    pub sim: &'a Array2<f64>,
    pub pair: &'a ComplementaryPair,
    pub warmup: usize,
}

impl WindowLoss for HybridLoss<'_> {
    fn evaluate(&self, preds: &Array3<f64>, starts: &[usize]) -> (f64, Array3<f64>) {
        let (m, batch, channels) = preds.dim();
        let p = self.pair.order();
        let mut fused = Array3::zeros(preds.raw_dim());
        let mut target = Array3::zeros(preds.raw_dim());
        for (b, &s0) in starts.iter().enumerate() {
            let lo = s0 + self.warmup;
            for c in 0..channels {
                let high: Vec<f64> = preds.slice(s![.., b, c]).to_vec();
                let low = self.sim.slice(s![c, lo..lo + m]).to_vec();
                let tgt = self.target.slice(s![c, lo..lo + m]).to_vec();
                let out = combine_slice(self.pair, &high, &low, &tgt[..p.min(m)]);
                fused.slice_mut(s![.., b, c]).assign(&ndarray::Array1::from(out));
                target.slice_mut(s![.., b, c]).assign(&ndarray::Array1::from(tgt));
            }
        }
        let (loss, g) = rmse_with_grad(&fused, &target);
        let mut grad = Array3::zeros(preds.raw_dim());
        for b in 0..batch {
            for c in 0..channels {
                let back = combine_vjp_high(self.pair, &g.slice(s![.., b, c]).to_vec());
                grad.slice_mut(s![.., b, c]).assign(&ndarray::Array1::from(back));
            }
        }
        (loss, grad)
    }
}

/// RMSE between `combine(pair, rollout, y_sim)` (recurrence started from the
/// first `P` target values) and `target`.
pub fn hybrid_loss(pair: &ComplementaryPair, rollout: &Signal, y_sim: &Signal, target: &Signal) -> Result<f64> {
    let fused = complementary_combine(pair, rollout, y_sim, FilterInit::HoldInput, Some(target))?;
    rmse(&fused, target)
}

fn check_inputs(y: &Signal, y_sim: &Signal) -> Result<()> {
    if !y.same_shape(y_sim) {
        return Err(Error::ShapeMismatch(format!(
            "measurements are {}x{}, simulator is {}x{}",
            y.channels(),
            y.len(),
            y_sim.channels(),
            y_sim.len()
        )));
    }
    Ok(())
}

pub fn train_hybrid(config: &HybridConfig, y: &Signal, y_sim: &Signal) -> Result<TrainedHybrid> {
    check_inputs(y, y_sim)?;
    config.train.validate(y.len())?;
    let pair = config.pair.build()?;
    let model = config
        .model
        .build(y.channels(), config.train.warmup_len, y.sample_rate_hz(), &mut seeded(config.seed, 0))?;
    let loss = HybridLoss {
        target: y.samples(),
        sim: y_sim.samples(),
        pair: &pair,
        warmup: config.train.warmup_len,
    };
    let (model, history) = fit_any(model, y.samples(), &config.train, &loss, &mut seeded(config.seed, 1))?;
    Ok(TrainedHybrid {
        model,
        pair,
        config: config.clone(),
        loss: history,
    })
}

/// Fused prediction for steps `R..horizon` and the raw network rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrediction {
    pub total: Signal,
    pub rollout: Signal,
}

/// Initialises the model from the first `R` context steps, rolls out to
/// `horizon` and fuses with `y_sim` over the same steps. The recurrence
/// starts from the last `P` context values before step `R`.
pub fn predict_hybrid(trained: &TrainedHybrid, context: &Signal, y_sim: &Signal, horizon: usize) -> Result<HybridPrediction> {
    let r = trained.config.train.warmup_len;
    let p = trained.pair.order();
    if horizon <= r {
        return Err(Error::invalid("horizon", format!("must exceed the context length {r}")));
    }
    if context.len() < r.max(p) {
        return Err(Error::SignalTooShort {
            needed: r.max(p),
            got: context.len(),
        });
    }
    if y_sim.len() < horizon || y_sim.channels() != context.channels() {
        return Err(Error::SignalTooShort {
            needed: horizon,
            got: y_sim.len(),
        });
    }
    let fs = context.sample_rate_hz();
    let t0 = context.start_time_s();
    let ctx = context_batch(context.samples(), r);
    let preds = trained.model.forecast(ctx.view(), horizon - r)?;
    let rollout = batch_to_signal(&preds, fs, t0, r)?;
    let sim = y_sim.slice(r..horizon)?.with_start_time(rollout.start_time_s());
    let start = r.max(p) - p;
    let init = context.slice(start..start + p)?;
    let total = complementary_combine(&trained.pair, &rollout, &sim, FilterInit::HoldInput, Some(&init))?;
    Ok(HybridPrediction { total, rollout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{design_butterworth, make_perfect_complement, FilterKind};
    use crate::neural::LrSchedule;

    fn config(model: ModelSpec) -> HybridConfig {
        HybridConfig {
            model,
            pair: PairSpec {
                order: 1,
                cutoff_hz: 0.25,
                sample_rate_hz: 20.0,
                perfect: true,
            },
            train: TrainOptions {
                epochs: 2,
                batch_size: 3,
                subtraj_len: 30,
                warmup_len: 5,
                lr: LrSchedule::constant(1e-3),
                grad_clip: None,
            },
            seed: 11,
        }
    }

    fn data() -> (Signal, Signal) {
        let y: Vec<f64> = (0..60).map(|i| (i as f64 * 0.2).sin() + 0.2 * (i as f64 * 1.1).sin()).collect();
        let sim: Vec<f64> = (0..60).map(|i| (i as f64 * 0.2).sin()).collect();
        (Signal::from_channel(y, 20.0).unwrap(), Signal::from_channel(sim, 20.0).unwrap())
    }

    #[test]
    fn identity_fixture_has_zero_loss() {
        let low = design_butterworth(1, 0.25, 20.0, FilterKind::Lowpass).unwrap();
        let pair = make_perfect_complement(&low);
        let (y, _) = data();
        assert!(hybrid_loss(&pair, &y, &y, &y).unwrap() < 1e-12);
    }

    #[test]
    fn trains_both_model_families() {
        let (y, sim) = data();
        for spec in [
            ModelSpec::Gru {
                hidden_size: 4,
                readout_bias: true,
            },
            ModelSpec::Rnn {
                input_dim: 3,
                hidden_dim: 8,
                rec_dim: 6,
                step_size: None,
            },
        ] {
            let t = train_hybrid(&config(spec), &y, &sim).unwrap();
            assert_eq!(t.loss.len(), 3);
            let p = predict_hybrid(&t, &y, &sim, 50).unwrap();
            assert_eq!(p.total.len(), 45);
        }
    }

    #[test]
    fn short_simulator_is_rejected() {
        let (y, sim) = data();
        let t = train_hybrid(
            &config(ModelSpec::Gru {
                hidden_size: 2,
                readout_bias: true,
            }),
            &y,
            &sim,
        )
        .unwrap();
        assert!(predict_hybrid(&t, &y, &sim, 80).is_err());
    }
}
