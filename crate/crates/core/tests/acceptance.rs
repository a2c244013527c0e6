//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Criteria 5 to 7 train the full configurations under `configs/` (about
//! an hour on one core). Set `COMPFILT_ACCEPTANCE=smoke` to run the
//! reduced variants instead; those only check the properties a short run can
//! support and say so in their line.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use compfilt::experiment::{run_experiment, ExperimentConfig, ExperimentOutcome, Scheme};
use compfilt::filters::{
    complementary_combine, design_butterworth, filtfilt, make_perfect_complement, make_shared_cutoff_pair, FilterInit,
    FilterKind,
};
use compfilt::learn::{batch_loss_and_grad, Objective};
use compfilt::neural::gradcheck::check_gradients;
use compfilt::neural::{Forecaster, GruModel, RnnModel};
use compfilt::resample::{downsample, upsample, ResampleRatio};
use compfilt::signal::{read_csv, rmse, write_csv};
use compfilt::spectrum::fft;
use compfilt::systems::{gen_double_mass, DoubleMassSpec};
use compfilt::Signal;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn smoke() -> bool {
    std::env::var("COMPFILT_ACCEPTANCE").is_ok_and(|v| v == "smoke")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_config(name: &str, scratch: &Path) -> Result<ExperimentOutcome, String> {
    let mut config = ExperimentConfig::load(configs().join(name)).map_err(|e| e.to_string())?;
    config.output_dir = scratch.join(name.trim_end_matches(".toml"));
    run_experiment(&config).map_err(|e| e.to_string())
}

fn scheme_rmse(outcome: &ExperimentOutcome, scheme: Scheme) -> Result<(f64, f64), String> {
    outcome
        .summary
        .schemes
        .iter()
        .find(|s| s.scheme == scheme)
        .map(|s| (s.rmse_mean, s.rmse_std))
        .ok_or_else(|| format!("no `{}` results", scheme.name()))
}

fn criterion_1() -> Outcome {
    let c = design_butterworth(1, 2.5, 10.0, FilterKind::Lowpass).map_err(|e| e.to_string())?;
    let coeff_err = [c.b[0] - 0.5, c.b[1] - 0.5, c.a[0] - 1.0, c.a[1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if coeff_err > 1e-12 {
        return Err(format!("order-1 half-band coefficients off by {coeff_err:.2e}"));
    }
    let mut worst_gain = 0.0f64;
    let mut worst_pole = 0.0f64;
    let mut designs = 0;
    for order in 1..=8 {
        for i in 0..=45 {
            let ratio = 0.02 + 0.01 * i as f64;
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                let c = design_butterworth(order, ratio * 10.0, 10.0, kind).map_err(|e| e.to_string())?;
                worst_gain = worst_gain.max((c.response_at_hz(ratio * 10.0).norm() - 0.5f64.sqrt()).abs());
                worst_pole = worst_pole.max(c.max_pole_magnitude());
                designs += 1;
            }
        }
    }
    check(
        worst_gain < 1e-6 && worst_pole < 1.0,
        format!("b=[0.5,0.5], a=[1,0]; {designs} designs, max |H(wc)| deviation {worst_gain:.2e}, max pole {worst_pole:.6}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let order = 1 + i % 3;
        let ratio = rng.random_range(0.02..0.45);
        let pair = make_perfect_complement(&design_butterworth(order, ratio * 10.0, 10.0, FilterKind::Lowpass).map_err(|e| e.to_string())?);
        let n = rng.random_range(10..500);
        let y = Signal::from_channel((0..n).map(|_| rng.random_range(-3.0..3.0)).collect(), 10.0).map_err(|e| e.to_string())?;
        let out = complementary_combine(&pair, &y, &y, FilterInit::HoldInput, Some(&y)).map_err(|e| e.to_string())?;
        for (a, b) in out.samples().iter().zip(y.samples()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst < 1e-9, format!("100 signals, orders 1-3, max abs error {worst:.2e}"))
}

fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let twiddle: Vec<Complex64> = (0..n).map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64)).collect();
    (0..n)
        .map(|k| x.iter().enumerate().map(|(j, v)| v * twiddle[(k * j) % n]).sum())
        .collect()
}

fn criterion_3() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for n in 2..=1024 {
        let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for (a, b) in fft(&x).iter().zip(naive_dft(&x)) {
            worst = worst.max((a - b).norm());
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    check(worst < 1e-9 && secs < 30.0, format!("lengths 2-1024, max abs diff {worst:.2e}, {secs:.1}s"))
}

fn gradient_error<M: Forecaster>(model: &M, objective: Objective<'_>, source: &Signal, starts: &[usize], warmup: usize, len: usize) -> Result<f64, String> {
    let (_, analytic) = batch_loss_and_grad(model, objective, source, starts, warmup, len).map_err(|e| e.to_string())?;
    let report = check_gradients(
        model,
        &analytic,
        |m| batch_loss_and_grad(m, objective, source, starts, warmup, len).expect("same shapes").0,
        1e-5,
    );
    Ok(report.max_relative_error)
}

fn criterion_4() -> Outcome {
    let clock = Instant::now();
    let wave = |phase: f64| {
        Signal::from_channel((0..8).map(|i| (0.5 * i as f64 + phase).sin() + 0.2 * (2.1 * i as f64).cos()).collect(), 2.0).unwrap()
    };
    let (y, sim) = (wave(0.3), wave(-0.7));
    let shared = make_shared_cutoff_pair(1, 0.3, 2.0).map_err(|e| e.to_string())?;
    let perfect = make_perfect_complement(&design_butterworth(1, 0.25, 2.0, FilterKind::Lowpass).map_err(|e| e.to_string())?);
    let mut worst = [0.0f64; 3];
    for seed in 0..4 {
        let gru = GruModel::new(1, 4, true, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let rnn = RnnModel::new(1, 4, 5, 2, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let objectives = [
            Objective::Plain { target: &y },
            Objective::Highpass { target: &y, pair: &shared },
            Objective::Hybrid { target: &y, sim: &sim, pair: &perfect },
        ];
        for (w, obj) in worst.iter_mut().zip(objectives) {
            *w = w.max(gradient_error(&gru, obj, &y, &[0, 1], 2, 7)?);
            *w = w.max(gradient_error(&rnn, obj, &y, &[0, 1], 2, 7)?);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    check(
        worst.iter().all(|&w| w < 1e-4) && secs < 10.0,
        format!("max relative error split {:.2e}, +HP {:.2e}, hybrid {:.2e} ({secs:.1}s)", worst[0], worst[1], worst[2]),
    )
}

static SYSTEM_I: OnceLock<Result<ExperimentOutcome, String>> = OnceLock::new();

fn system_i(scratch: &Path) -> &'static Result<ExperimentOutcome, String> {
    SYSTEM_I.get_or_init(|| run_config(if smoke() { "system_i_smoke.toml" } else { "system_i_split.toml" }, scratch))
}

fn criterion_5(scratch: &Path) -> Outcome {
    let outcome = system_i(scratch).as_ref().map_err(Clone::clone)?;
    let (split, split_std) = scheme_rmse(outcome, Scheme::Split)?;
    let (gru, gru_std) = scheme_rmse(outcome, Scheme::Gru)?;
    let detail = format!(
        "split {split:.3} ({split_std:.3}) vs GRU {gru:.3} ({gru_std:.3}) over {} seeds",
        outcome.summary.seeds.len()
    );
    if smoke() {
        return Ok(format!("smoke run only, no threshold: {detail}"));
    }
    check(split < 0.3 && split < gru, format!("{detail}; need split < 0.3 and < GRU"))
}

fn criterion_6(scratch: &Path) -> Outcome {
    let outcome = system_i(scratch).as_ref().map_err(Clone::clone)?;
    let at = |scheme: Scheme| -> Result<f64, String> {
        let curve = compfilt::experiment::mean_curve(&outcome.runs, scheme).map_err(|e| e.to_string())?;
        // The curve ends at the horizon, step 1000 of system (i).
        Ok(curve.samples()[[0, curve.len() - 1]])
    };
    let (split, gru) = (at(Scheme::Split)?, at(Scheme::Gru)?);
    let detail = format!("seed-averaged RMSE over time at step 1000: split {split:.3}, GRU {gru:.3}");
    if smoke() {
        return Ok(format!("smoke run only, no threshold: {detail}"));
    }
    check(split < gru, detail)
}

fn criterion_7(scratch: &Path) -> Outcome {
    if smoke() {
        let outcome = run_config("vdp_hybrid_mlp_smoke.toml", scratch)?;
        let (filtered, _) = scheme_rmse(&outcome, Scheme::HybridMlp)?;
        let (simulator, _) = scheme_rmse(&outcome, Scheme::Simulator)?;
        return check(filtered < simulator, format!("smoke: filtered {filtered:.3} < simulator {simulator:.3}"));
    }
    let outcome = run_config("vdp_hybrid_mlp.toml", scratch)?;
    let (filtered, _) = scheme_rmse(&outcome, Scheme::HybridMlp)?;
    let (simulator, _) = scheme_rmse(&outcome, Scheme::Simulator)?;
    let (rnn, _) = scheme_rmse(&outcome, Scheme::Rnn)?;
    check(
        filtered < simulator && simulator < rnn,
        format!("filtered {filtered:.3} < simulator {simulator:.3} < RNN {rnn:.3} (5-seed means)"),
    )
}

fn criterion_8() -> Outcome {
    let text = |k: usize| {
        format!(
            r#"
schemes = ["split"]
[system]
kind = "double-mass"
train_steps = 250
[learning_based]
hidden_size_gru_1 = 4
hidden_size_gru_2 = 4
cutoff_frequency_w = 0.4
filter_order = 3
sample_frequency_f = 10
subtrajectory_length = 150
warmup_phase = 30
training_steps = 1
sampling_rate_k = {k}
"#
        )
    };
    let verdict = |k: usize| -> Result<bool, String> {
        let config = ExperimentConfig::from_toml(&text(k)).map_err(|e| e.to_string())?;
        let data = compfilt::experiment::ExperimentData::build(&config.system).map_err(|e| e.to_string())?;
        match config.validate(&data) {
            Ok(()) => Ok(true),
            Err(compfilt::Error::Config(_)) => Ok(false),
            Err(e) => Err(format!("k={k}: unexpected error {e}")),
        }
    };
    let accepted: Vec<usize> = [2, 3, 4, 10].into_iter().filter(|&k| verdict(k).unwrap_or(false)).collect();
    let rejects_13 = !verdict(13)?;
    check(
        accepted == [2, 3, 4, 10] && rejects_13,
        format!("accepted k in {accepted:?}, k=13 rejected: {rejects_13}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in [1, 2, 5, 10] {
        for _ in 0..20 {
            let n = rng.random_range(k + 1..400);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ratio = ResampleRatio::new(k).map_err(|e| e.to_string())?;
            let s = Signal::from_channel(y.clone(), 10.0).map_err(|e| e.to_string())?;
            let back = upsample(&downsample(&s, ratio).map_err(|e| e.to_string())?, ratio).map_err(|e| e.to_string())?;
            let b = back.first_channel();
            if (0..b.len()).step_by(k).any(|i| b[i] != y[i]) {
                return Err(format!("k={k}, n={n}: retained sample changed"));
            }
        }
    }
    let truth = gen_double_mass(&DoubleMassSpec::default()).map_err(|e| e.to_string())?;
    let low = filtfilt(&design_butterworth(3, 0.4, 10.0, FilterKind::Lowpass).map_err(|e| e.to_string())?, &truth).map_err(|e| e.to_string())?;
    let two = ResampleRatio::new(2).map_err(|e| e.to_string())?;
    let back = upsample(&downsample(&low, two).map_err(|e| e.to_string())?, two).map_err(|e| e.to_string())?;
    let n = back.len();
    let low = low.slice(0..n).map_err(|e| e.to_string())?;
    let zero = Signal::zeros(1, n, 10.0).map_err(|e| e.to_string())?;
    let rel = rmse(&back, &low).map_err(|e| e.to_string())? / rmse(&low, &zero).map_err(|e| e.to_string())?;
    check(rel < 0.05, format!("exact at retained indices for k in {{1,2,5,10}}; low-band reconstruction at k=2 relative RMSE {:.2}%", 100.0 * rel))
}

fn criterion_10(scratch: &Path) -> Outcome {
    let dir = scratch.join("csv_ingest");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let y = gen_double_mass(&DoubleMassSpec::default()).map_err(|e| e.to_string())?;
    write_csv(&y, dir.join("measurements.csv")).map_err(|e| e.to_string())?;
    let back = read_csv(dir.join("measurements.csv")).map_err(|e| e.to_string())?;
    if back.samples() != y.samples() || back.sample_rate_hz() != y.sample_rate_hz() {
        return Err("CSV round trip changed the signal".into());
    }
    let config = dir.join("user.toml");
    fs::write(
        &config,
        r#"
schemes = ["split", "gru"]
seeds = [0]
output_dir = "out"
[system]
kind = "csv"
measurements = "measurements.csv"
train_steps = 250
horizon = 400
[learning_based]
hidden_size_gru_1 = 4
hidden_size_gru_2 = 4
cutoff_frequency_w = 0.4
filter_order = 3
sample_frequency_f = 10
subtrajectory_length = 150
warmup_phase = 30
training_steps = 2
sampling_rate_k = 2
[baseline]
hidden_size = 4
training_steps = 2
subtrajectory_length = 150
warmup_phase = 30
"#,
    )
    .map_err(|e| e.to_string())?;
    let config = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
    let outcome = run_experiment(&config).map_err(|e| e.to_string())?;
    let summary = dir.join("out").join("summary.json");
    check(
        summary.exists() && outcome.summary.schemes.len() == 2,
        "CSV round trip exact; user-supplied measurements run through split and GRU pipelines".into(),
    )
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let s = scratch.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("filter correctness", Box::new(criterion_1)),
        ("perfect-complement identity", Box::new(criterion_2)),
        ("DFT oracle", Box::new(criterion_3)),
        ("gradient oracle", Box::new(criterion_4)),
        ("system (i) reproduction", Box::new(|| criterion_5(s))),
        ("long-horizon stability", Box::new(|| criterion_6(s))),
        ("hybrid Van-der-Pol", Box::new(|| criterion_7(s))),
        ("Nyquist admissibility", Box::new(criterion_8)),
        ("resampling round trip", Box::new(criterion_9)),
        ("external data via CSV ingestion", Box::new(|| criterion_10(s))),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = run();
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
