//! Full-band baselines: a single recurrent model on the measurements, or on
//! the residual between measurements and simulator.

use serde::{Deserialize, Serialize};

use super::{batch_to_signal, context_batch, fit_any, seeded, ModelSpec, PlainLoss, RecurrentModel, TrainOptions};
use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub model: ModelSpec,
    pub train: TrainOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBaseline {
    pub model: RecurrentModel,
    /// Trained on `measurements - simulator`; predictions add the simulator
    /// back.
    pub residual: bool,
    pub config: BaselineConfig,
    pub loss: Vec<f64>,
}

fn train_on(config: &BaselineConfig, target: &Signal, residual: bool) -> Result<TrainedBaseline> {
    config.train.validate(target.len())?;
    let model = config
        .model
        .build(target.channels(), config.train.warmup_len, target.sample_rate_hz(), &mut seeded(config.seed, 0))?;
    let loss = PlainLoss {
        target: target.samples(),
        warmup: config.train.warmup_len,
    };
    let (model, history) = fit_any(model, target.samples(), &config.train, &loss, &mut seeded(config.seed, 1))?;
    Ok(TrainedBaseline {
        model,
        residual,
        config: config.clone(),
        loss: history,
    })
}

pub fn train_baseline(config: &BaselineConfig, y: &Signal) -> Result<TrainedBaseline> {
    train_on(config, y, false)
}

pub fn train_residual(config: &BaselineConfig, y: &Signal, y_sim: &Signal) -> Result<TrainedBaseline> {
    train_on(config, &y.sub(y_sim)?, true)
}

/// Prediction for steps `R..horizon`. Residual models need `y_sim` over
/// `0..horizon`.
pub fn predict_baseline(trained: &TrainedBaseline, context: &Signal, y_sim: Option<&Signal>, horizon: usize) -> Result<Signal> {
    let r = trained.config.train.warmup_len;
    if horizon <= r {
        return Err(Error::invalid("horizon", format!("must exceed the context length {r}")));
    }
    if context.len() < r {
        return Err(Error::SignalTooShort {
            needed: r,
            got: context.len(),
        });
    }
    let fs = context.sample_rate_hz();
    let t0 = context.start_time_s();
    let sim = if trained.residual {
        let sim = y_sim.ok_or_else(|| Error::invalid("y_sim", "residual models need simulator output"))?;
        if sim.len() < horizon {
            return Err(Error::SignalTooShort {
                needed: horizon,
                got: sim.len(),
            });
        }
        Some(sim)
    } else {
        None
    };
    let ctx_signal = match sim {
        Some(s) => context.slice(0..r)?.sub(&s.slice(0..r)?.with_start_time(t0))?,
        None => context.slice(0..r)?,
    };
    let ctx = context_batch(ctx_signal.samples(), r);
    let preds = trained.model.forecast(ctx.view(), horizon - r)?;
    let out = batch_to_signal(&preds, fs, t0, r)?;
    match sim {
        Some(s) => out.add(&s.slice(r..horizon)?.with_start_time(out.start_time_s())),
        None => Ok(out),
    }
}
