//! Split GRU vs a single GRU on the noisy two-tone double-mass signal.
//!
//! Trains on the first 250 noisy steps and predicts the full 1000-step
//! trajectory. Usage: `cargo run --release --example system_i_split [seeds] [baseline_epochs]`.

use std::time::Instant;

use compfilt::filters::filtfilt;
use compfilt::learn::{predict_baseline, predict_split, train_baseline, train_split, BaselineConfig, ModelSpec, PairSpec, SplitConfig, TrainOptions};
use compfilt::neural::LrSchedule;
use compfilt::resample::ResampleRatio;
use compfilt::signal::{add_noise, rmse, NoiseSpec};
use compfilt::systems::{gen_double_mass, DoubleMassSpec};

fn main() -> compfilt::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let baseline_epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let truth = gen_double_mass(&DoubleMassSpec::default())?;
    let noisy = add_noise(&truth, &NoiseSpec::new(0.1, 2024)?);
    let train = noisy.slice(0..250)?;
    let horizon = truth.len();
    let warmup = 30;
    let target = truth.slice(warmup..horizon)?;

    let options = |epochs| TrainOptions {
        epochs,
        batch_size: 50,
        subtraj_len: 150,
        warmup_len: warmup,
        lr: LrSchedule::constant(1e-3),
        grad_clip: None,
    };
    for seed in 0..seeds {
        let config = SplitConfig {
            high_hidden: 48,
            low_hidden: 16,
            readout_bias: true,
            pair: PairSpec {
                order: 3,
                cutoff_hz: 0.4,
                sample_rate_hz: 10.0,
                perfect: false,
            },
            k: ResampleRatio::new(2)?,
            train: options(300),
            hp_wrap: false,
            seed,
        };
        let start = Instant::now();
        let trained = train_split(&config, &train)?;
        let pred = predict_split(&trained, &train, horizon)?;
        println!(
            "seed {seed}: split RMSE {:.4} (high {:.4}, low {:.4}) in {:.1}s",
            rmse(&pred.total, &target)?,
            rmse(&pred.high, &filtfilt(&trained.pair.high, &truth)?.slice(warmup..horizon)?)?,
            rmse(&pred.low, &filtfilt(&trained.pair.low, &truth)?.slice(warmup..horizon)?)?,
            start.elapsed().as_secs_f64()
        );

        if baseline_epochs > 0 {
            let config = BaselineConfig {
                model: ModelSpec::Gru {
                    hidden_size: 64,
                    readout_bias: true,
                },
                train: options(baseline_epochs),
                seed,
            };
            let start = Instant::now();
            let trained = train_baseline(&config, &train)?;
            let pred = predict_baseline(&trained, &train, None, horizon)?;
            println!(
                "seed {seed}: baseline GRU RMSE {:.4} in {:.1}s",
                rmse(&pred, &target)?,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
