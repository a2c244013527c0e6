//! Config-driven experiments: build the data, train every requested scheme
//! for every seed, evaluate on a common window and write artifacts.
//!
//! Config sections mirror the hyperparameter tables row by row
//! (`hidden_size_gru_1`, `cutoff_frequency_w`, `training_steps`, ...), so a
//! table column can be copied into a TOML file directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{
    predict_baseline, predict_hybrid, predict_split, train_baseline, train_hybrid, train_residual, train_split, BaselineConfig,
    HybridConfig, ModelSpec, PairSpec, SplitConfig, TrainOptions, TrainedBaseline, TrainedHybrid, TrainedSplit,
};
use crate::neural::LrSchedule;
use crate::resample::ResampleRatio;
use crate::signal::{add_noise, read_csv, rmse, rmse_over_time, write_csv, NoiseSpec, Signal};
use crate::systems::{gen_double_mass, gen_vdp_sim, gen_vdp_truth, DoubleMassSpec, VdpSpec};

pub const CHECKPOINT_FORMAT: &str = "compfilt-checkpoint/1";
pub const SUMMARY_FORMAT: &str = "compfilt-summary/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Split GRUs, `[learning_based]`.
    Split,
    /// Split GRUs with the high-band rollout wrapped in a highpass.
    SplitHp,
    /// Single full-band GRU, `[baseline]`.
    Gru,
    /// GRU on measurements minus simulator, `[baseline]`.
    ResidualGru,
    /// Euler-MLP fused with the simulator, `[hybrid_mlp]`.
    HybridMlp,
    /// Single Euler-MLP, `[hybrid_mlp]` settings.
    Rnn,
    /// Euler-MLP on measurements minus simulator, `[hybrid_mlp]` settings.
    ResidualRnn,
    /// GRU fused with the simulator, `[hybrid_gru]`.
    HybridGru,
    /// The simulator output itself.
    Simulator,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Split => "split",
            Scheme::SplitHp => "split_hp",
            Scheme::Gru => "gru",
            Scheme::ResidualGru => "residual_gru",
            Scheme::HybridMlp => "hybrid_mlp",
            Scheme::Rnn => "rnn",
            Scheme::ResidualRnn => "residual_rnn",
            Scheme::HybridGru => "hybrid_gru",
            Scheme::Simulator => "simulator",
        }
    }

    fn needs_simulator(self) -> bool {
        matches!(
            self,
            Scheme::ResidualGru | Scheme::HybridMlp | Scheme::ResidualRnn | Scheme::HybridGru | Scheme::Simulator
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    DoubleMass,
    Vdp,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Observation noise added to the measurements; evaluation uses the
    /// noise-free signal.
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Length of the training segment at the start of the trajectory.
    pub train_steps: usize,
    /// Prediction horizon; the full trajectory when absent.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// `csv` only: measurement file, relative to the config file.
    #[serde(default)]
    pub measurements: Option<PathBuf>,
    /// `csv` only: optional simulator output on the same grid.
    #[serde(default)]
    pub simulator: Option<PathBuf>,
    #[serde(default)]
    pub double_mass: DoubleMassSpec,
    #[serde(default)]
    pub vdp: VdpSpec,
}

fn default_true() -> bool {
    true
}

fn default_batch() -> usize {
    50
}

fn default_lr() -> f64 {
    1e-3
}

fn default_order_one() -> usize {
    1
}

/// Split-model settings; keys follow the usual hyperparameter table names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningBasedConfig {
    pub hidden_size_gru_1: usize,
    pub hidden_size_gru_2: usize,
    pub cutoff_frequency_w: f64,
    pub filter_order: usize,
    pub sample_frequency_f: f64,
    pub subtrajectory_length: usize,
    pub warmup_phase: usize,
    pub training_steps: usize,
    pub sampling_rate_k: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub perfect_complement: bool,
    #[serde(default = "default_true")]
    pub readout_bias: bool,
}

/// Single full-band GRU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub hidden_size: usize,
    pub training_steps: usize,
    pub subtrajectory_length: usize,
    pub warmup_phase: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_true")]
    pub readout_bias: bool,
}

/// Euler-MLP settings, shared by the filtered, plain and residual variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridMlpConfig {
    pub cutoff_frequency_w: f64,
    pub sample_frequency_f: f64,
    pub subtrajectory_length: usize,
    pub recognition_steps_n: usize,
    pub training_steps: usize,
    pub input_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_rec_dim")]
    pub rec_dim: usize,
    #[serde(default = "default_order_one")]
    pub filter_order: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// `[[epoch, rate], ...]`
    #[serde(default)]
    pub lr_milestones: Vec<(usize, f64)>,
    /// Euler step; the sample period when absent.
    #[serde(default)]
    pub step_size: Option<f64>,
}

fn default_hidden_dim() -> usize {
    500
}

fn default_rec_dim() -> usize {
    100
}

/// Filtered GRU settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridGruConfig {
    pub hidden_size_gru: usize,
    pub cutoff_frequency_w: f64,
    pub sample_frequency_f: f64,
    pub subtrajectory_length: usize,
    pub warmup_phase: usize,
    pub training_steps: usize,
    #[serde(default = "default_order_one")]
    pub filter_order: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_true")]
    pub readout_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Runs trained concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub system: SystemConfig,
    #[serde(default)]
    pub learning_based: Option<LearningBasedConfig>,
    #[serde(default)]
    pub baseline: Option<BaselineSection>,
    #[serde(default)]
    pub hybrid_mlp: Option<HybridMlpConfig>,
    #[serde(default)]
    pub hybrid_gru: Option<HybridGruConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_jobs() -> usize {
    1
}

fn config_error(section: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(msg),
        other => Error::Config(format!("[{section}] {other}")),
    }
}

fn missing(section: &str, scheme: Scheme) -> Error {
    Error::Config(format!("scheme `{}` needs a [{section}] section", scheme.name()))
}

fn check_rate(section: &str, configured: f64, data: f64) -> Result<()> {
    if (configured - data).abs() > 1e-9 * data {
        return Err(Error::Config(format!(
            "[{section}] sample_frequency_f = {configured} does not match the data rate {data} Hz"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths in
    /// the config resolve against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.output_dir);
        config.system.measurements.as_mut().map(resolve);
        config.system.simulator.as_mut().map(resolve);
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without training: section
    /// presence, Nyquist admissibility, window lengths against the training
    /// segment and sample rates against the data.
    pub fn validate(&self, data: &ExperimentData) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("`schemes` is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` is empty".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("`jobs` must be at least 1".into()));
        }
        let n = data.train.len();
        for &scheme in &self.schemes {
            if scheme.needs_simulator() && data.simulator.is_none() {
                return Err(Error::Config(format!(
                    "scheme `{}` needs simulator output, which this system does not provide",
                    scheme.name()
                )));
            }
            let settings = self.scheme_settings(scheme, data.train.sample_rate_hz(), 0)?;
            match &settings {
                SchemeSettings::Split(c) => {
                    c.validate().map_err(|e| config_error("learning_based", e))?;
                    c.train.validate(n).map_err(|e| config_error("learning_based", e))?;
                }
                SchemeSettings::Baseline(c, _) => c.train.validate(n).map_err(|e| config_error(self.section(scheme), e))?,
                SchemeSettings::Hybrid(c) => {
                    c.pair.build().map_err(|e| config_error(self.section(scheme), e))?;
                    c.train.validate(n).map_err(|e| config_error(self.section(scheme), e))?;
                }
                SchemeSettings::Simulator => {}
            }
            if settings.context_len() >= data.horizon {
                return Err(Error::Config(format!(
                    "horizon {} does not exceed the context of scheme `{}`",
                    data.horizon,
                    scheme.name()
                )));
            }
            if settings.context_len() > n {
                return Err(Error::Config(format!(
                    "training segment ({n} steps) is shorter than the context of scheme `{}`",
                    scheme.name()
                )));
            }
        }
        Ok(())
    }

    fn section(&self, scheme: Scheme) -> &'static str {
        match scheme {
            Scheme::Split | Scheme::SplitHp => "learning_based",
            Scheme::Gru | Scheme::ResidualGru => "baseline",
            Scheme::HybridMlp | Scheme::Rnn | Scheme::ResidualRnn => "hybrid_mlp",
            Scheme::HybridGru => "hybrid_gru",
            Scheme::Simulator => "system",
        }
    }

    /// Library-level configuration of one scheme for one seed.
    pub fn scheme_settings(&self, scheme: Scheme, sample_rate_hz: f64, seed: u64) -> Result<SchemeSettings> {
        let section = self.section(scheme);
        Ok(match scheme {
            Scheme::Split | Scheme::SplitHp => {
                let lb = self.learning_based.as_ref().ok_or_else(|| missing(section, scheme))?;
                check_rate(section, lb.sample_frequency_f, sample_rate_hz)?;
                SchemeSettings::Split(SplitConfig {
                    high_hidden: lb.hidden_size_gru_1,
                    low_hidden: lb.hidden_size_gru_2,
                    readout_bias: lb.readout_bias,
                    pair: PairSpec {
                        order: lb.filter_order,
                        cutoff_hz: lb.cutoff_frequency_w,
                        sample_rate_hz: lb.sample_frequency_f,
                        perfect: lb.perfect_complement,
                    },
                    k: ResampleRatio::new(lb.sampling_rate_k).map_err(|e| config_error(section, e))?,
                    train: TrainOptions {
                        epochs: lb.training_steps,
                        batch_size: lb.batch_size,
                        subtraj_len: lb.subtrajectory_length,
                        warmup_len: lb.warmup_phase,
                        lr: LrSchedule::constant(lb.learning_rate),
                        grad_clip: None,
                    },
                    hp_wrap: scheme == Scheme::SplitHp,
                    seed,
                })
            }
            Scheme::Gru | Scheme::ResidualGru => {
                let b = self.baseline.as_ref().ok_or_else(|| missing(section, scheme))?;
                SchemeSettings::Baseline(
                    BaselineConfig {
                        model: ModelSpec::Gru {
                            hidden_size: b.hidden_size,
                            readout_bias: b.readout_bias,
                        },
                        train: TrainOptions {
                            epochs: b.training_steps,
                            batch_size: b.batch_size,
                            subtraj_len: b.subtrajectory_length,
                            warmup_len: b.warmup_phase,
                            lr: LrSchedule::constant(b.learning_rate),
                            grad_clip: None,
                        },
                        seed,
                    },
                    scheme == Scheme::ResidualGru,
                )
            }
            Scheme::HybridMlp | Scheme::Rnn | Scheme::ResidualRnn => {
                let m = self.hybrid_mlp.as_ref().ok_or_else(|| missing(section, scheme))?;
                check_rate(section, m.sample_frequency_f, sample_rate_hz)?;
                let model = ModelSpec::Rnn {
                    input_dim: m.input_dim,
                    hidden_dim: m.hidden_dim,
                    rec_dim: m.rec_dim,
                    step_size: m.step_size,
                };
                let train = TrainOptions {
                    epochs: m.training_steps,
                    batch_size: m.batch_size,
                    subtraj_len: m.subtrajectory_length,
                    warmup_len: m.recognition_steps_n,
                    lr: LrSchedule {
                        initial: m.learning_rate,
                        milestones: m.lr_milestones.clone(),
                    },
                    grad_clip: None,
                };
                if scheme == Scheme::HybridMlp {
                    SchemeSettings::Hybrid(HybridConfig {
                        model,
                        pair: PairSpec {
                            order: m.filter_order,
                            cutoff_hz: m.cutoff_frequency_w,
                            sample_rate_hz: m.sample_frequency_f,
                            perfect: true,
                        },
                        train,
                        seed,
                    })
                } else {
                    SchemeSettings::Baseline(BaselineConfig { model, train, seed }, scheme == Scheme::ResidualRnn)
                }
            }
            Scheme::HybridGru => {
                let g = self.hybrid_gru.as_ref().ok_or_else(|| missing(section, scheme))?;
                check_rate(section, g.sample_frequency_f, sample_rate_hz)?;
                SchemeSettings::Hybrid(HybridConfig {
                    model: ModelSpec::Gru {
                        hidden_size: g.hidden_size_gru,
                        readout_bias: g.readout_bias,
                    },
                    pair: PairSpec {
                        order: g.filter_order,
                        cutoff_hz: g.cutoff_frequency_w,
                        sample_rate_hz: g.sample_frequency_f,
                        perfect: true,
                    },
                    train: TrainOptions {
                        epochs: g.training_steps,
                        batch_size: g.batch_size,
                        subtraj_len: g.subtrajectory_length,
                        warmup_len: g.warmup_phase,
                        lr: LrSchedule::constant(g.learning_rate),
                        grad_clip: None,
                    },
                    seed,
                })
            }
            Scheme::Simulator => SchemeSettings::Simulator,
        })
    }
}

/// Resolved training setup of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeSettings {
    Split(SplitConfig),
    /// Second field: train on the simulator residual.
    Baseline(BaselineConfig, bool),
    Hybrid(HybridConfig),
    Simulator,
}

impl SchemeSettings {
    /// Number of leading steps the scheme consumes before predicting.
    pub fn context_len(&self) -> usize {
        match self {
            SchemeSettings::Split(c) => c.train.warmup_len,
            SchemeSettings::Baseline(c, _) => c.train.warmup_len,
            SchemeSettings::Hybrid(c) => c.train.warmup_len,
            SchemeSettings::Simulator => 0,
        }
    }
}

/// Signals an experiment runs on.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// Noise-free reference over the whole trajectory.
    pub truth: Signal,
    /// What the models see; `truth` plus observation noise.
    pub measurements: Signal,
    pub simulator: Option<Signal>,
    /// `measurements[0..train_steps]`.
    pub train: Signal,
    pub horizon: usize,
}

impl ExperimentData {
    pub fn build(system: &SystemConfig) -> Result<Self> {
        let (truth, simulator) = match system.kind {
            SystemKind::DoubleMass => (gen_double_mass(&system.double_mass)?, None),
            SystemKind::Vdp => (gen_vdp_truth(&system.vdp)?, Some(gen_vdp_sim(&system.vdp)?)),
            SystemKind::Csv => {
                let path = system
                    .measurements
                    .as_ref()
                    .ok_or_else(|| Error::Config("[system] kind = \"csv\" needs `measurements`".into()))?;
                let y = read_csv(path)?;
                let sim = system.simulator.as_ref().map(read_csv).transpose()?;
                if let Some(s) = &sim {
                    if !s.same_shape(&y) {
                        return Err(Error::Config("[system] simulator and measurements differ in shape".into()));
                    }
                }
                (y, sim)
            }
        };
        let noise = NoiseSpec::new(system.noise_variance, system.noise_seed).map_err(|e| config_error("system", e))?;
        let measurements = add_noise(&truth, &noise);
        let horizon = system.horizon.unwrap_or(truth.len());
        if horizon > truth.len() {
            return Err(Error::Config(format!(
                "[system] horizon {horizon} exceeds the trajectory length {}",
                truth.len()
            )));
        }
        if system.train_steps == 0 || system.train_steps > horizon {
            return Err(Error::Config(format!(
                "[system] train_steps must be in 1..={horizon}, got {}",
                system.train_steps
            )));
        }
        let train = measurements.slice(0..system.train_steps)?;
        Ok(Self {
            truth,
            measurements,
            simulator,
            train,
            horizon,
        })
    }

    fn train_sim(&self) -> Result<Signal> {
        self.simulator
            .as_ref()
            .ok_or_else(|| Error::Config("simulator output required".into()))?
            .slice(0..self.train.len())
    }
}

/// A trained model of any scheme, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedScheme {
    Split(TrainedSplit),
    Baseline(TrainedBaseline),
    Hybrid(TrainedHybrid),
    Simulator,
}

impl TrainedScheme {
    pub fn train(settings: &SchemeSettings, data: &ExperimentData) -> Result<Self> {
        Ok(match settings {
            SchemeSettings::Split(c) => TrainedScheme::Split(train_split(c, &data.train)?),
            SchemeSettings::Baseline(c, false) => TrainedScheme::Baseline(train_baseline(c, &data.train)?),
            SchemeSettings::Baseline(c, true) => TrainedScheme::Baseline(train_residual(c, &data.train, &data.train_sim()?)?),
            SchemeSettings::Hybrid(c) => TrainedScheme::Hybrid(train_hybrid(c, &data.train, &data.train_sim()?)?),
            SchemeSettings::Simulator => TrainedScheme::Simulator,
        })
    }

    pub fn context_len(&self) -> usize {
        match self {
            TrainedScheme::Split(t) => t.config.train.warmup_len,
            TrainedScheme::Baseline(t) => t.config.train.warmup_len,
            TrainedScheme::Hybrid(t) => t.config.train.warmup_len,
            TrainedScheme::Simulator => 0,
        }
    }

    /// Prediction for steps `context_len()..horizon`. `simulator` must cover
    /// `0..horizon` for hybrid, residual and simulator schemes.
    pub fn predict(&self, context: &Signal, simulator: Option<&Signal>, horizon: usize) -> Result<Signal> {
        let need_sim = || simulator.ok_or_else(|| Error::invalid("simulator", "this scheme needs simulator output"));
        match self {
            TrainedScheme::Split(t) => Ok(predict_split(t, context, horizon)?.total),
            TrainedScheme::Baseline(t) => predict_baseline(t, context, simulator, horizon),
            TrainedScheme::Hybrid(t) => Ok(predict_hybrid(t, context, need_sim()?, horizon)?.total),
            TrainedScheme::Simulator => need_sim()?.slice(0..horizon),
        }
    }

    /// Named loss histories, one entry per epoch plus the initial loss.
    pub fn loss_columns(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            TrainedScheme::Split(t) => vec![("high", &t.high_loss[..]), ("low", &t.low_loss[..])],
            TrainedScheme::Baseline(t) => vec![("loss", &t.loss[..])],
            TrainedScheme::Hybrid(t) => vec![("loss", &t.loss[..])],
            TrainedScheme::Simulator => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub model: TrainedScheme,
}

impl Checkpoint {
    pub fn new(scheme: Scheme, seed: u64, model: TrainedScheme) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            scheme,
            seed,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("checkpoint format `{}`, expected `{CHECKPOINT_FORMAT}`", ck.format),
            });
        }
        Ok(ck)
    }
}

/// One trained and evaluated (scheme, seed) pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheme: Scheme,
    pub seed: u64,
    pub model: TrainedScheme,
    /// Steps `context_len..horizon`.
    pub prediction: Signal,
    /// Over the common evaluation window.
    pub rmse: f64,
    pub rmse_over_time: Signal,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rmse_per_seed: Vec<f64>,
    /// `mean (std)` with three decimals, as in the result tables.
    pub table: String,
    /// Last value of the seed-averaged RMSE-over-time curve.
    pub rmse_over_time_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub seeds: Vec<u64>,
    /// `[start, end)` steps every scheme is scored on.
    pub eval_window: (usize, usize),
    pub schemes: Vec<SchemeSummary>,
    /// Wall-clock seconds per scheme, summed over seeds; the only field that
    /// varies between identical runs.
    pub runtime_s: Vec<(Scheme, f64)>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Everything [`run_experiment`] produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub runs: Vec<RunResult>,
}

/// First step of the window all schemes are scored on: the longest context.
pub fn eval_start(config: &ExperimentConfig, sample_rate_hz: f64) -> Result<usize> {
    let mut start = 0;
    for &s in &config.schemes {
        start = start.max(config.scheme_settings(s, sample_rate_hz, 0)?.context_len());
    }
    Ok(start)
}

fn run_one(config: &ExperimentConfig, data: &ExperimentData, scheme: Scheme, seed: u64, start: usize) -> Result<RunResult> {
    let clock = Instant::now();
    let settings = config.scheme_settings(scheme, data.train.sample_rate_hz(), seed)?;
    let model = TrainedScheme::train(&settings, data)?;
    let prediction = model.predict(&data.train, data.simulator.as_ref(), data.horizon)?;
    let r = model.context_len();
    let scored = prediction.slice(start - r..data.horizon - r)?;
    let truth = data.truth.slice(start..data.horizon)?;
    let scored = scored.with_start_time(truth.start_time_s());
    Ok(RunResult {
        scheme,
        seed,
        rmse: rmse(&scored, &truth)?,
        rmse_over_time: rmse_over_time(&scored, &truth)?,
        prediction,
        model,
        runtime_s: clock.elapsed().as_secs_f64(),
    })
}

/// Trains and evaluates every (scheme, seed) pair on up to `jobs` threads.
/// Results come back in config order regardless of scheduling.
pub fn run_all(config: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<RunResult>> {
    config.validate(data)?;
    let start = eval_start(config, data.train.sample_rate_hz())?;
    let tasks: Vec<(Scheme, u64)> = config
        .schemes
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunResult>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..config.jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(scheme, seed)) = tasks.get(i) else { break };
                let out = run_one(config, data, scheme, seed, start);
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

/// Aggregates runs into the summary; runs must be grouped by scheme in
/// config order.
pub fn summarize(config: &ExperimentConfig, runs: &[RunResult], eval_window: (usize, usize)) -> Summary {
    let mut schemes = Vec::new();
    let mut runtime_s = Vec::new();
    for &scheme in &config.schemes {
        let mine: Vec<&RunResult> = runs.iter().filter(|r| r.scheme == scheme).collect();
        let per_seed: Vec<f64> = mine.iter().map(|r| r.rmse).collect();
        let (mean, std) = mean_std(&per_seed);
        schemes.push(SchemeSummary {
            scheme,
            rmse_mean: mean,
            rmse_std: std,
            table: format!("{mean:.3} ({std:.3})"),
            rmse_over_time_final: mine.iter().map(|r| r.rmse_over_time.first_channel().last().copied().unwrap_or(f64::NAN)).sum::<f64>()
                / mine.len() as f64,
            rmse_per_seed: per_seed,
        });
        runtime_s.push((scheme, mine.iter().map(|r| r.runtime_s).sum()));
    }
    Summary {
        format: SUMMARY_FORMAT.to_string(),
        seeds: config.seeds.clone(),
        eval_window,
        schemes,
        runtime_s,
    }
}

/// Seed-averaged RMSE-over-time curve of one scheme.
pub fn mean_curve(runs: &[RunResult], scheme: Scheme) -> Result<Signal> {
    let mine: Vec<&RunResult> = runs.iter().filter(|r| r.scheme == scheme).collect();
    let first = mine.first().ok_or_else(|| Error::invalid("scheme", "no runs for this scheme"))?;
    let mut acc = first.rmse_over_time.samples().clone();
    for r in &mine[1..] {
        acc += r.rmse_over_time.samples();
    }
    acc /= mine.len() as f64;
    first.rmse_over_time.with_samples(acc)
}

fn write_loss_csv(model: &TrainedScheme, path: &Path) -> Result<()> {
    let columns = model.loss_columns();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    let rows = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut record = vec![i.to_string()];
        record.extend(columns.iter().map(|(_, c)| c.get(i).map_or(String::new(), |v| v.to_string())));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes checkpoint, loss history, prediction and RMSE-over-time files for
/// one run into `dir`.
pub fn write_run(run: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = run.seed;
    Checkpoint::new(run.scheme, k, run.model.clone()).save(dir.join(format!("checkpoint_seed{k}.json")))?;
    write_csv(&run.prediction, dir.join(format!("pred_seed{k}.csv")))?;
    write_csv(&run.rmse_over_time, dir.join(format!("rmse_time_seed{k}.csv")))?;
    if !run.model.loss_columns().is_empty() {
        write_loss_csv(&run.model, &dir.join(format!("loss_seed{k}.csv")))?;
    }
    Ok(())
}

/// Full pipeline: data, training, evaluation and artifacts under
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let data = ExperimentData::build(&config.system)?;
    let runs = run_all(config, &data)?;
    let window = (eval_start(config, data.train.sample_rate_hz())?, data.horizon);
    let summary = summarize(config, &runs, window);
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    write_csv(&data.measurements.slice(0..data.horizon)?, out.join("measurements.csv"))?;
    write_csv(&data.truth.slice(0..data.horizon)?, out.join("truth.csv"))?;
    if let Some(sim) = &data.simulator {
        write_csv(&sim.slice(0..data.horizon)?, out.join("simulator.csv"))?;
    }
    for &scheme in &config.schemes {
        let dir = out.join(scheme.name());
        for run in runs.iter().filter(|r| r.scheme == scheme) {
            write_run(run, &dir)?;
        }
        write_csv(&mean_curve(&runs, scheme)?, dir.join("rmse_time_mean.csv"))?;
    }
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(ExperimentOutcome { summary, runs })
}
