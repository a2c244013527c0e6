//! Hybrid Euler-MLP on the forced Van-der-Pol oscillator, fused with the
//! unforced simulator, against a plain Euler-MLP and the simulator alone.
//!
//! Usage: `cargo run --release --example vdp_hybrid [seeds] [epochs] [train_steps]`.

use std::time::Instant;

use compfilt::learn::{predict_baseline, predict_hybrid, train_baseline, train_hybrid, BaselineConfig, HybridConfig, ModelSpec, PairSpec, TrainOptions};
use compfilt::neural::LrSchedule;
use compfilt::signal::rmse;
use compfilt::systems::{gen_vdp_sim, gen_vdp_truth, VdpSpec};

fn main() -> compfilt::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let train_steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let spec = VdpSpec::default();
    let truth = gen_vdp_truth(&spec)?;
    let sim = gen_vdp_sim(&spec)?;
    let horizon = truth.len();
    let recognition = 10;
    let train = truth.slice(0..train_steps)?;
    let train_sim = sim.slice(0..train_steps)?;
    let target = truth.slice(recognition..horizon)?;
    println!("simulator RMSE {:.4}", rmse(&sim.slice(recognition..horizon)?, &target)?);

    let model = ModelSpec::Rnn {
        input_dim: 4,
        hidden_dim: 500,
        rec_dim: 100,
        step_size: None,
    };
    let options = TrainOptions {
        epochs,
        batch_size: 50,
        subtraj_len: 200,
        warmup_len: recognition,
        lr: LrSchedule {
            initial: 1e-3,
            milestones: vec![(20, 1e-4), (500, 1e-5)],
        },
        grad_clip: None,
    };
    for seed in 0..seeds {
        let start = Instant::now();
        let config = HybridConfig {
            model: model.clone(),
            pair: PairSpec {
                order: 1,
                cutoff_hz: 0.25,
                sample_rate_hz: truth.sample_rate_hz(),
                perfect: true,
            },
            train: options.clone(),
            seed,
        };
        let trained = train_hybrid(&config, &train, &train_sim)?;
        let pred = predict_hybrid(&trained, &train, &sim, horizon)?;
        println!(
            "seed {seed}: filtered RNN {:.4} (loss {:.4} -> {:.4}) in {:.1}s",
            rmse(&pred.total, &target)?,
            trained.loss[0],
            trained.loss.last().unwrap(),
            start.elapsed().as_secs_f64()
        );
        let start = Instant::now();
        let config = BaselineConfig {
            model: model.clone(),
            train: options.clone(),
            seed,
        };
        let trained = train_baseline(&config, &train)?;
        match predict_baseline(&trained, &train, None, horizon) {
            Ok(pred) => println!("seed {seed}: RNN {:.4} in {:.1}s", rmse(&pred, &target)?, start.elapsed().as_secs_f64()),
            Err(e) => println!("seed {seed}: RNN failed: {e}"),
        }
    }
    Ok(())
}
