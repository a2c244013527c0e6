//! A single GRU trained on a noisy sine, rolled out past the training data,
//! saved as a checkpoint and reloaded.

use compfilt::experiment::{Checkpoint, Scheme, TrainedScheme};
use compfilt::learn::{predict_baseline, train_baseline, BaselineConfig, ModelSpec, TrainOptions};
use compfilt::neural::LrSchedule;
use compfilt::signal::{add_noise, rmse, NoiseSpec};
use compfilt::Signal;

fn main() -> compfilt::Result<()> {
    let fs = 10.0;
    let clean = Signal::from_channel((0..400).map(|i| (0.3 * i as f64).sin()).collect(), fs)?;
    let noisy = add_noise(&clean, &NoiseSpec::new(0.01, 7)?);
    let train = noisy.slice(0..200)?;
    let config = BaselineConfig {
        model: ModelSpec::Gru {
            hidden_size: 16,
            readout_bias: true,
        },
        train: TrainOptions {
            epochs: 150,
            batch_size: 20,
            subtraj_len: 80,
            warmup_len: 20,
            lr: LrSchedule::constant(5e-3),
            grad_clip: None,
        },
        seed: 0,
    };
    let trained = train_baseline(&config, &train)?;
    println!("loss {:.4} -> {:.4}", trained.loss[0], trained.loss.last().unwrap());

    let pred = predict_baseline(&trained, &train, None, clean.len())?;
    let target = clean.slice(20..clean.len())?;
    println!("forecast RMSE over steps 20..400: {:.4}", rmse(&pred, &target)?);

    let path = std::env::temp_dir().join("gru_forecast_checkpoint.json");
    Checkpoint::new(Scheme::Gru, 0, TrainedScheme::Baseline(trained)).save(&path)?;
    let reloaded = Checkpoint::load(&path)?.model.predict(&train, None, clean.len())?;
    println!("reloaded checkpoint reproduces the forecast: {}", reloaded.samples() == pred.samples());
    Ok(())
}
