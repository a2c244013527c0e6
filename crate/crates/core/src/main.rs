//! Command-line front end. Exit codes: 0 success, 1 I/O or data error,
//! 2 usage or config error, 3 divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use compfilt::experiment::{run_all, run_experiment, write_run, Checkpoint, ExperimentConfig, ExperimentData};
use compfilt::filters::{design_butterworth, filtfilt, frequency_response, iir_filter, FilterInit, FilterKind};
use compfilt::signal::{add_noise, read_csv, rmse, rmse_over_time, write_csv, NoiseSpec};
use compfilt::spectrum::{magnitude_spectrum, suggest_cutoff};
use compfilt::systems::{gen_double_mass, gen_vdp_sim, gen_vdp_truth, DoubleMassSpec, VdpSpec};
use compfilt::{Error, Result, Signal};

#[derive(Parser)]
#[command(name = "compfilt", version, about = "Complementary-filter decomposition for learning dynamics models")]
struct Cli {
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed: noise seed for `gen`, the single training seed for `train` and `run`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file: experiment config for `train`/`run`, system spec for `gen`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    DoubleMass,
    VdpTruth,
    VdpSim,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory as CSV.
    Gen {
        #[arg(value_enum)]
        system: System,
        /// Observation noise variance.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Print Butterworth coefficients as JSON.
    DesignFilter {
        #[arg(long)]
        order: usize,
        /// Cutoff in Hz.
        #[arg(long)]
        cutoff: f64,
        /// Sample rate in Hz.
        #[arg(long)]
        fs: f64,
        #[arg(long, default_value = "lowpass")]
        kind: FilterKind,
        /// Also report the response at this many frequencies in [0, fs/2].
        #[arg(long)]
        response: Option<usize>,
    },
    /// Filter a CSV signal.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        /// `kind:order:cutoff_hz:fs_hz`, e.g. `lowpass:1:0.4:10`.
        #[arg(long)]
        design: String,
        /// Forward-backward (zero-phase) instead of a single pass.
        #[arg(long)]
        filtfilt: bool,
    },
    /// Magnitude spectrum of a CSV signal and a suggested cutoff.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train the configured schemes and write checkpoints and loss histories.
    Train,
    /// Predict from a checkpoint.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Observed signal; its first steps initialise the model.
        #[arg(long)]
        context: PathBuf,
        /// Simulator output covering the horizon (hybrid and residual schemes).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Prediction ends at this step.
        #[arg(long)]
        horizon: usize,
    },
    /// RMSE of a prediction against a reference, aligned on the time column.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Full experiment: train, evaluate and write all artifacts.
    Run {
        /// Parallel runs; overrides the config.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Serialize)]
struct DesignReport {
    kind: FilterKind,
    order: usize,
    cutoff_hz: f64,
    fs_hz: f64,
    b: Vec<f64>,
    a: Vec<f64>,
    stable: bool,
    max_pole_magnitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<Vec<compfilt::filters::ResponsePoint>>,
}

#[derive(Serialize)]
struct EvalReport {
    rmse_total: f64,
    rmse_over_time_csv_path: Option<PathBuf>,
    runtime_s: f64,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenSpec {
    #[serde(default)]
    double_mass: DoubleMassSpec,
    #[serde(default)]
    vdp: VdpSpec,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn require_out(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| Error::Config("--out is required for this command".into()))
}

fn require_config(config: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let path = config.ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut c = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        c.seeds = vec![s];
    }
    Ok(c)
}

/// Parses `kind:order:cutoff_hz:fs_hz`.
fn parse_design(spec: &str) -> Result<compfilt::filters::FilterCoefficients> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("--design `{spec}`: expected kind:order:cutoff_hz:fs_hz"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let kind: FilterKind = parts[0].parse()?;
    let order = parts[1].parse().map_err(|_| bad())?;
    let cutoff = parts[2].parse().map_err(|_| bad())?;
    let fs = parts[3].parse().map_err(|_| bad())?;
    design_butterworth(order, cutoff, fs, kind)
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen { system, noise } => {
            let spec: GenSpec = match &cli.config {
                Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
                None => GenSpec {
                    double_mass: DoubleMassSpec::default(),
                    vdp: VdpSpec::default(),
                },
            };
            let y = match system {
                System::DoubleMass => gen_double_mass(&spec.double_mass)?,
                System::VdpTruth => gen_vdp_truth(&spec.vdp)?,
                System::VdpSim => gen_vdp_sim(&spec.vdp)?,
            };
            let y = add_noise(&y, &NoiseSpec::new(noise, cli.seed.unwrap_or(0))?);
            write_csv(&y, require_out(out)?)
        }
        Command::DesignFilter {
            order,
            cutoff,
            fs,
            kind,
            response,
        } => {
            let c = design_butterworth(order, cutoff, fs, kind)?;
            let report = DesignReport {
                kind,
                order,
                cutoff_hz: cutoff,
                fs_hz: fs,
                stable: c.is_stable(),
                max_pole_magnitude: c.max_pole_magnitude(),
                response: response.map(|n| frequency_response(&c, n)).transpose()?,
                b: c.b,
                a: c.a,
            };
            emit(out, &serde_json::to_string_pretty(&report)?)
        }
        Command::Filter { input, design, filtfilt: zero_phase } => {
            let coeffs = parse_design(&design)?;
            let y = read_csv(&input)?;
            let z = if zero_phase {
                filtfilt(&coeffs, &y)?
            } else {
                iir_filter(&coeffs, &y, FilterInit::HoldInput)?
            };
            write_csv(&z, require_out(out)?)
        }
        Command::Spectrum { input } => {
            let y = read_csv(&input)?;
            let spec = magnitude_spectrum(&y)?;
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["frequency_hz", "magnitude"])?;
                for (f, m) in spec.frequencies_hz.iter().zip(&spec.magnitudes) {
                    w.write_record([f.to_string(), m.to_string()])?;
                }
                w.flush()?;
            }
            let mut peaks = spec.peaks();
            peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
            for p in peaks.iter().take(5) {
                println!("peak {:.6} Hz magnitude {:.6} prominence {:.6}", p.frequency_hz, p.magnitude, p.prominence);
            }
            match suggest_cutoff(&spec) {
                Ok(c) => println!("suggested cutoff {c} Hz"),
                Err(e) => println!("no cutoff suggested: {e}"),
            }
            Ok(())
        }
        Command::Train => {
            let mut config = require_config(cli.config.as_deref(), cli.seed)?;
            if let Some(o) = out {
                config.output_dir = o.to_path_buf();
            }
            let data = ExperimentData::build(&config.system)?;
            for r in run_all(&config, &data)? {
                write_run(&r, &config.output_dir.join(r.scheme.name()))?;
                println!("{} seed {}: final loss {:?}", r.scheme.name(), r.seed, r.model.loss_columns().iter().map(|(n, l)| (*n, l.last().copied())).collect::<Vec<_>>());
            }
            Ok(())
        }
        Command::Rollout {
            checkpoint,
            context,
            sim,
            horizon,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ctx = read_csv(&context)?;
            let sim: Option<Signal> = sim.map(read_csv).transpose()?;
            let pred = ck.model.predict(&ctx, sim.as_ref(), horizon)?;
            write_csv(&pred, require_out(out)?)
        }
        Command::Eval { pred, truth } => {
            let clock = Instant::now();
            let p = read_csv(&pred)?;
            let t = read_csv(&truth)?;
            let offset = ((p.start_time_s() - t.start_time_s()) * t.sample_rate_hz()).round();
            if offset < 0.0 || offset as usize + p.len() > t.len() {
                return Err(Error::ShapeMismatch("prediction does not lie inside the reference".into()));
            }
            let offset = offset as usize;
            let t = t.slice(offset..offset + p.len())?;
            let total = rmse(&p, &t)?;
            println!("rmse_total {total}");
            let curve_path = match out {
                Some(o) => {
                    let path = o.with_extension("rmse_time.csv");
                    write_csv(&rmse_over_time(&p, &t)?, &path)?;
                    Some(path)
                }
                None => None,
            };
            let report = EvalReport {
                rmse_total: total,
                rmse_over_time_csv_path: curve_path,
                runtime_s: clock.elapsed().as_secs_f64(),
                seed: cli.seed,
            };
            if let Some(o) = out {
                fs::write(o, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(())
        }
        Command::Run { jobs } => {
            let mut config = require_config(cli.config.as_deref(), cli.seed)?;
            if let Some(j) = jobs {
                config.jobs = j;
            }
            if let Some(o) = out {
                config.output_dir = o.to_path_buf();
            }
            let outcome = run_experiment(&config)?;
            for s in &outcome.summary.schemes {
                println!("{:<14} {}", s.scheme.name(), s.table);
            }
            println!("artifacts in {}", config.output_dir.display());
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument { .. } => 2,
        Error::Diverged { .. } | Error::TrainingDiverged { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
