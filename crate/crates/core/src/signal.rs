//! Uniformly sampled multi-channel time series.
//!
//! [`Signal`] is the value every other module consumes and produces: training
//! measurements, simulator output, filtered bands and model rollouts. Samples
//! are stored channel-major as a `channels × steps` array.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on consecutive time-stamp differences when reading CSV.
pub const UNIFORM_DT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Array2<f64>,
    sample_rate_hz: f64,
    start_time_s: f64,
}

impl Signal {
    /// Builds a signal from a `channels × steps` array.
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::EmptySignal);
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(
                "sample_rate_hz",
                format!("must be positive and finite, got {sample_rate_hz}"),
            ));
        }
        for ((channel, step), v) in samples.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { channel, step });
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time_s: 0.0,
        })
    }

    pub fn from_channel(values: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        let n = values.len();
        let samples = Array2::from_shape_vec((1, n), values)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(samples, sample_rate_hz)
    }

    pub fn zeros(channels: usize, steps: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(Array2::zeros((channels, steps)), sample_rate_hz)
    }

    pub fn with_start_time(mut self, start_time_s: f64) -> Self {
        self.start_time_s = start_time_s;
        self
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    /// Always false for a constructed signal; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.start_time_s + step as f64 / self.sample_rate_hz
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.samples.row(c)
    }

    /// Copies the first channel into a `Vec`. Convenient for the single-output
    /// systems used throughout the experiments.
    pub fn first_channel(&self) -> Vec<f64> {
        self.samples.row(0).to_vec()
    }

    pub fn same_shape(&self, other: &Signal) -> bool {
        self.samples.dim() == other.samples.dim()
    }

    pub(crate) fn check_same_shape(&self, other: &Signal) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.samples.dim(),
                other.samples.dim()
            )));
        }
        Ok(())
    }

    /// Returns the steps in `range`; the start time moves with the slice.
    pub fn slice(&self, range: Range<usize>) -> Result<Signal> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(
                "range",
                format!("{range:?} out of bounds for length {}", self.len()),
            ));
        }
        Ok(Signal {
            samples: self.samples.slice(s![.., range.clone()]).to_owned(),
            sample_rate_hz: self.sample_rate_hz,
            start_time_s: self.time_at(range.start),
        })
    }

    pub fn concat(&self, other: &Signal) -> Result<Signal> {
        if self.channels() != other.channels() {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {} and {} channels",
                self.channels(),
                other.channels()
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid(
                "sample_rate_hz",
                format!("{} vs {}", self.sample_rate_hz, other.sample_rate_hz),
            ));
        }
        let samples = ndarray::concatenate(Axis(1), &[self.samples.view(), other.samples.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(Signal {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            start_time_s: self.start_time_s,
        })
    }

    /// Same rate and start time, new samples. Used by operators that preserve
    /// the time grid.
    pub fn with_samples(&self, samples: Array2<f64>) -> Result<Signal> {
        let mut out = Signal::new(samples, self.sample_rate_hz)?;
        out.start_time_s = self.start_time_s;
        Ok(out)
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_same_shape(other)?;
        self.with_samples(&self.samples + &other.samples)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_same_shape(other)?;
        self.with_samples(&self.samples - &other.samples)
    }

    pub fn scale(&self, factor: f64) -> Result<Signal> {
        self.with_samples(&self.samples * factor)
    }

    pub fn mean(&self) -> f64 {
        self.samples.mean().unwrap_or(0.0)
    }

    /// Population standard deviation over all channels and steps.
    pub fn std(&self) -> f64 {
        self.samples.std(0.0)
    }
}

/// Zero-mean Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(
                "variance",
                format!("must be finite and nonnegative, got {variance}"),
            ));
        }
        Ok(Self { variance, seed })
    }
}

/// Standard normal draws via the Box–Muller transform on a ChaCha8 stream.
///
/// Both outputs of each transform are used. The sequence for a given seed is
/// part of the crate's reproducibility contract: version 1 of the noise
/// stream.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Adds i.i.d. Gaussian noise with the given variance. Deterministic in the
/// seed; channels are filled one after another.
pub fn add_noise(signal: &Signal, noise: &NoiseSpec) -> Signal {
    if noise.variance == 0.0 {
        return signal.clone();
    }
    let sigma = noise.variance.sqrt();
    let mut stream = GaussianStream::new(noise.seed);
    let mut out = signal.clone();
    for v in out.samples.iter_mut() {
        *v += sigma * stream.next_standard();
    }
    out
}

/// Root-mean-squared error over all channels and steps.
pub fn rmse(a: &Signal, b: &Signal) -> Result<f64> {
    a.check_same_shape(b)?;
    let sq: f64 = a
        .samples
        .iter()
        .zip(b.samples.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq / a.samples.len() as f64).sqrt())
}

/// Running RMSE `e_n = sqrt(1/(n+1) * sum_{k<=n} |y_k - ŷ_k|^2)`.
///
/// The per-step squared error is averaged over channels so that the last
/// value equals [`rmse`] over the full window; for one channel this is the
/// plain squared norm.
pub fn rmse_over_time(pred: &Signal, truth: &Signal) -> Result<Signal> {
    pred.check_same_shape(truth)?;
    let channels = pred.channels() as f64;
    let mut acc = 0.0;
    let curve: Vec<f64> = (0..pred.len())
        .map(|n| {
            let step_err: f64 = pred
                .samples
                .column(n)
                .iter()
                .zip(truth.samples.column(n).iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            acc += step_err / channels;
            (acc / (n + 1) as f64).sqrt()
        })
        .collect();
    let mut out = Signal::from_channel(curve, pred.sample_rate_hz)?;
    out.start_time_s = pred.start_time_s;
    Ok(out)
}

/// Writes `t,y0,y1,...` with one header row. Values use the shortest
/// representation that round-trips exactly.
pub fn write_csv(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "t")?;
    for c in 0..signal.channels() {
        write!(w, ",y{c}")?;
    }
    writeln!(w)?;
    for n in 0..signal.len() {
        write!(w, "{}", signal.time_at(n))?;
        for c in 0..signal.channels() {
            write!(w, ",{}", signal.samples[[c, n]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a signal written by [`write_csv`] (or any file with the same
/// layout). The time column must be uniform to within
/// [`UNIFORM_DT_TOLERANCE`] relative to the mean step.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t" {
        return Err(malformed(
            "expected header `t,y0[,y1...]`".to_string(),
        ));
    }
    let channels = headers.len() - 1;
    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(malformed(format!(
                "row {} has {} fields, expected {}",
                row + 1,
                record.len(),
                headers.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| malformed(format!("row {}, column {}: {e}", row + 1, i)))
        };
        times.push(parse(0)?);
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(parse(c + 1)?);
        }
    }
    if times.is_empty() {
        return Err(Error::EmptySignal);
    }
    if times.len() < 2 {
        return Err(malformed(
            "at least two rows are needed to infer the sample rate".to_string(),
        ));
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(malformed(format!("time column is not increasing (dt = {dt})")));
    }
    for (i, pair) in times.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if (step - dt).abs() > UNIFORM_DT_TOLERANCE * dt {
            return Err(Error::NonUniformSampling {
                row: i + 1,
                expected: dt,
                found: step,
            });
        }
    }
    let mut samples = Array2::zeros((channels, n));
    for (c, col) in columns.into_iter().enumerate() {
        samples.row_mut(c).assign(&Array1::from(col));
    }
    Ok(Signal::new(samples, 1.0 / dt)?.with_start_time(times[0]))
}
