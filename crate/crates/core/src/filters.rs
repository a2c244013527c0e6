//! Butterworth IIR design, complementary pairs and the filtering recurrences.
//!
//! Coefficients follow the usual convention with a normalized denominator,
//!
//! ```text
//! y[n] = sum_{k=0..P} b[k] x[n-k] - sum_{k=1..P} a[k] y[n-k],   a[0] = 1
//! ```
//!
//! so that designs match the classic analog-prototype + bilinear-transform
//! procedure and are stable. A complementary pair shares `a`; the fused
//! recurrence adds a second input driven through the low-pass numerator.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

pub const MAX_ORDER: usize = 8;

/// Relative tolerance used when checking that two legs share a denominator.
const SHARED_DENOMINATOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FilterKind::Lowpass => f.write_str("lowpass"),
            FilterKind::Highpass => f.write_str("highpass"),
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowpass" | "low" | "lp" => Ok(FilterKind::Lowpass),
            "highpass" | "high" | "hp" => Ok(FilterKind::Highpass),
            other => Err(Error::invalid("kind", format!("unknown filter kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub order: usize,
    pub kind: FilterKind,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

/// How the first `P` outputs of a direct recurrence are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterInit {
    Zeros,
    #[default]
    HoldInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementaryPair {
    pub high: FilterCoefficients,
    pub low: FilterCoefficients,
    pub perfect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub frequency_hz: f64,
    pub magnitude: f64,
    pub phase: f64,
}

fn check_design_args(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(
            "order",
            format!("must be in 1..={MAX_ORDER}, got {order}"),
        ));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(
            "sample_rate_hz",
            format!("must be positive, got {sample_rate_hz}"),
        ));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::invalid(
            "cutoff_hz",
            format!("must lie in (0, {nyquist}) Hz, got {cutoff_hz}"),
        ));
    }
    Ok(())
}

/// Expands `prod_i (1 - r_i z^-1)` into polynomial coefficients in `z^-1`.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

/// Digital Butterworth design.
///
/// Analog prototype poles `exp(j*pi*(2k+P-1)/(2P))`, frequency scaling (or the
/// lowpass-to-highpass inversion) at the prewarped cutoff
/// `2*fs*tan(pi*fc/fs)`, then the bilinear transform. The gain is finally
/// pinned so the passband edge (DC or Nyquist) is exactly 1.
pub fn design_butterworth(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
    kind: FilterKind,
) -> Result<FilterCoefficients> {
    check_design_args(order, cutoff_hz, sample_rate_hz)?;
    let p = order as f64;
    let prototype: Vec<Complex64> = (1..=order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + p - 1.0) / (2.0 * p)))
        .collect();
    let fs2 = 2.0 * sample_rate_hz;
    let warped = fs2 * (PI * cutoff_hz / sample_rate_hz).tan();

    let (analog_zeros, analog_poles): (Vec<Complex64>, Vec<Complex64>) = match kind {
        FilterKind::Lowpass => (vec![], prototype.iter().map(|&s| s * warped).collect()),
        FilterKind::Highpass => (
            vec![Complex64::new(0.0, 0.0); order],
            prototype.iter().map(|&s| warped / s).collect(),
        ),
    };
    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let mut zeros: Vec<Complex64> = analog_zeros.iter().map(|&z| bilinear(z)).collect();
    // Zeros at infinity map to Nyquist.
    zeros.resize(order, Complex64::new(-1.0, 0.0));
    let poles: Vec<Complex64> = analog_poles.iter().map(|&s| bilinear(s)).collect();

    let mut b: Vec<f64> = poly_from_roots(&zeros).iter().map(|c| c.re).collect();
    let a: Vec<f64> = poly_from_roots(&poles).iter().map(|c| c.re).collect();

    let (num, den) = match kind {
        FilterKind::Lowpass => (b.iter().sum::<f64>(), a.iter().sum::<f64>()),
        FilterKind::Highpass => (alternating_sum(&b), alternating_sum(&a)),
    };
    let gain = den / num;
    b.iter_mut().for_each(|v| *v *= gain);

    Ok(FilterCoefficients {
        b,
        a,
        order,
        kind,
        cutoff_hz,
        sample_rate_hz,
    })
}

fn alternating_sum(c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { *v } else { -*v })
        .sum()
}

impl FilterCoefficients {
    /// Builds coefficients from raw arrays, normalizing so `a[0] = 1`.
    pub fn from_raw(
        b: Vec<f64>,
        a: Vec<f64>,
        kind: FilterKind,
        cutoff_hz: f64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if b.len() != a.len() || a.len() < 2 {
            return Err(Error::invalid(
                "coefficients",
                format!("b and a must have equal length >= 2, got {} and {}", b.len(), a.len()),
            ));
        }
        if a[0] == 0.0 {
            return Err(Error::invalid("a", "a[0] must be nonzero"));
        }
        let a0 = a[0];
        Ok(Self {
            order: a.len() - 1,
            b: b.iter().map(|v| v / a0).collect(),
            a: a.iter().map(|v| v / a0).collect(),
            kind,
            cutoff_hz,
            sample_rate_hz,
        })
    }

    /// Transfer function evaluated at `z = exp(j*omega)`.
    pub fn response_at_omega(&self, omega: f64) -> Complex64 {
        eval_rational(&self.b, &self.a, omega)
    }

    pub fn response_at_hz(&self, frequency_hz: f64) -> Complex64 {
        self.response_at_omega(2.0 * PI * frequency_hz / self.sample_rate_hz)
    }

    /// Roots of the denominator polynomial, from the companion matrix.
    pub fn poles(&self) -> Vec<Complex64> {
        companion_roots(&self.a)
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_magnitude() < 1.0
    }

    /// Output level for a unit constant input, `sum(b) / sum(a)`.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Internal state of the transposed direct form II in steady state for a
    /// unit step input. Scaling it by the first sample starts a filter with no
    /// transient on constant signals.
    pub(crate) fn steady_state_init(&self) -> Vec<f64> {
        let gain = self.dc_gain();
        let p = self.order;
        let mut zi = vec![0.0; p];
        let mut acc = 0.0;
        for i in (1..=p).rev() {
            acc += self.b[i] - self.a[i] * gain;
            zi[i - 1] = acc;
        }
        zi
    }
}

fn eval_rational(b: &[f64], a: &[f64], omega: f64) -> Complex64 {
    let z_inv = Complex64::from_polar(1.0, -omega);
    let horner = |c: &[f64]| {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z_inv + v)
    };
    horner(b) / horner(a)
}

/// Roots of `c[0] z^P + c[1] z^(P-1) + ... + c[P]`.
fn companion_roots(c: &[f64]) -> Vec<Complex64> {
    let p = c.len() - 1;
    if p == 0 {
        return vec![];
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        m[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|e| Complex64::new(e.re, e.im))
        .collect()
}

/// The perfect complement of a lowpass: shared denominator and
/// `b_high[k] = a[k] - b_low[k]`, so the two transfer functions sum to one.
pub fn make_perfect_complement(low: &FilterCoefficients) -> ComplementaryPair {
    let high_b = low.a.iter().zip(&low.b).map(|(a, b)| a - b).collect();
    let high = FilterCoefficients {
        b: high_b,
        a: low.a.clone(),
        order: low.order,
        kind: FilterKind::Highpass,
        cutoff_hz: low.cutoff_hz,
        sample_rate_hz: low.sample_rate_hz,
    };
    ComplementaryPair {
        high,
        low: low.clone(),
        perfect: true,
    }
}

/// Independent Butterworth lowpass and highpass designs sharing one cutoff.
///
/// Butterworth legs at a common cutoff have identical poles, so the pair can
/// still be fused by the joint recurrence.
pub fn make_shared_cutoff_pair(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
) -> Result<ComplementaryPair> {
    Ok(ComplementaryPair {
        high: design_butterworth(order, cutoff_hz, sample_rate_hz, FilterKind::Highpass)?,
        low: design_butterworth(order, cutoff_hz, sample_rate_hz, FilterKind::Lowpass)?,
        perfect: false,
    })
}

impl ComplementaryPair {
    pub fn order(&self) -> usize {
        self.high.order
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.low.cutoff_hz
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.low.sample_rate_hz
    }

    pub fn shares_denominator(&self) -> bool {
        self.high.a.len() == self.low.a.len()
            && self
                .high
                .a
                .iter()
                .zip(&self.low.a)
                .all(|(h, l)| (h - l).abs() <= SHARED_DENOMINATOR_TOL * h.abs().max(1.0))
    }
}

/// Direct recurrence on one channel; the first `P` outputs come from `init`.
fn recurrence(b: &[f64], a: &[f64], x: &[f64], init: FilterInit) -> Vec<f64> {
    let p = a.len() - 1;
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len().min(p) {
        y[n] = match init {
            FilterInit::Zeros => 0.0,
            FilterInit::HoldInput => x[n],
        };
    }
    for n in p..x.len() {
        let mut acc = 0.0;
        for k in 0..=p {
            acc += b[k] * x[n - k];
        }
        for k in 1..=p {
            acc -= a[k] * y[n - k];
        }
        y[n] = acc / a[0];
    }
    y
}

/// Single forward pass of the IIR recurrence on every channel.
pub fn iir_filter(coeffs: &FilterCoefficients, y: &Signal, init: FilterInit) -> Result<Signal> {
    let p = coeffs.order;
    if y.len() < p + 1 {
        return Err(Error::SignalTooShort {
            needed: p + 1,
            got: y.len(),
        });
    }
    let mut out = Array2::zeros(y.samples().dim());
    for c in 0..y.channels() {
        let x = y.channel(c).to_vec();
        let filtered = recurrence(&coeffs.b, &coeffs.a, &x, init);
        out.row_mut(c).assign(&Array1::from(filtered));
    }
    y.with_samples(out)
}

/// Transposed direct form II with explicit initial state.
fn lfilter_with_state(b: &[f64], a: &[f64], x: &[f64], mut z: Vec<f64>) -> Vec<f64> {
    let p = a.len() - 1;
    let mut y = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = b[0] * xn + z.first().copied().unwrap_or(0.0);
        for i in 0..p {
            let next = if i + 1 < p { z[i + 1] } else { 0.0 };
            z[i] = b[i + 1] * xn - a[i + 1] * yn + next;
        }
        y.push(yn);
    }
    y
}

/// Number of samples reflected at each end before forward-backward filtering.
pub fn filtfilt_padlen(order: usize) -> usize {
    3 * (order + 1)
}

/// Zero-phase filtering of one channel: odd reflection padding, forward pass,
/// backward pass, trim. Each pass starts from the steady state of its first
/// sample.
pub fn filtfilt_slice(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let padlen = filtfilt_padlen(coeffs.order).min(n.saturating_sub(1));
    let mut padded = Vec::with_capacity(n + 2 * padlen);
    for i in (1..=padlen).rev() {
        padded.push(2.0 * x[0] - x[i]);
    }
    padded.extend_from_slice(x);
    for i in 1..=padlen {
        padded.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = coeffs.steady_state_init();
    let scaled = |v: f64| zi.iter().map(|z| z * v).collect::<Vec<_>>();

    let forward = lfilter_with_state(&coeffs.b, &coeffs.a, &padded, scaled(padded[0]));
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    let start = scaled(reversed[0]);
    reversed = lfilter_with_state(&coeffs.b, &coeffs.a, &reversed, start);
    reversed.reverse();
    reversed[padlen..padlen + n].to_vec()
}

/// Forward-backward (zero-phase) filtering of every channel.
pub fn filtfilt(coeffs: &FilterCoefficients, y: &Signal) -> Result<Signal> {
    let needed = filtfilt_padlen(coeffs.order);
    if y.len() < needed {
        return Err(Error::SignalTooShort {
            needed,
            got: y.len(),
        });
    }
    let mut out = Array2::zeros(y.samples().dim());
    for c in 0..y.channels() {
        let filtered = filtfilt_slice(coeffs, &y.channel(c).to_vec());
        out.row_mut(c).assign(&Array1::from(filtered));
    }
    y.with_samples(out)
}

/// `filtfilt` on length-`n` inputs as an explicit `n × n` matrix. The map is
/// linear, so column `j` is the response to the `j`-th unit vector; the
/// transpose gives the vector-Jacobian product used in training.
pub fn filtfilt_matrix(coeffs: &FilterCoefficients, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = filtfilt_slice(coeffs, &e);
        m.column_mut(j).assign(&Array1::from(col));
        e[j] = 0.0;
    }
    m
}

fn check_pair(pair: &ComplementaryPair) -> Result<()> {
    if !pair.shares_denominator() {
        return Err(Error::invalid(
            "pair",
            "high and low legs must share the denominator coefficients",
        ));
    }
    Ok(())
}

/// Fused complementary recurrence on one channel,
///
/// ```text
/// y[n] = sum b_h[k] u[n-k] + sum b_l[k] v[n-k] - sum_{k>=1} a[k] y[n-k]
/// ```
///
/// with the first `P` outputs taken from `init`.
pub fn combine_slice(pair: &ComplementaryPair, high: &[f64], low: &[f64], init: &[f64]) -> Vec<f64> {
    let a = &pair.low.a;
    let bh = &pair.high.b;
    let bl = &pair.low.b;
    let p = a.len() - 1;
    let n = high.len();
    let mut y = vec![0.0; n];
    y[..p.min(n)].copy_from_slice(&init[..p.min(n)]);
    for t in p..n {
        let mut acc = 0.0;
        for k in 0..=p {
            acc += bh[k] * high[t - k] + bl[k] * low[t - k];
        }
        for k in 1..=p {
            acc -= a[k] * y[t - k];
        }
        y[t] = acc / a[0];
    }
    y
}

/// Vector-Jacobian product of [`combine_slice`] with respect to the high-band
/// input. The initial outputs are constants and do not propagate gradient.
pub fn combine_vjp_high(pair: &ComplementaryPair, grad_out: &[f64]) -> Vec<f64> {
    let a = &pair.low.a;
    let bh = &pair.high.b;
    let p = a.len() - 1;
    let n = grad_out.len();
    // adjoint of y[t] for t >= p
    let mut lambda = vec![0.0; n];
    for t in (p..n).rev() {
        let mut acc = grad_out[t];
        for k in 1..=p {
            if t + k < n {
                acc -= a[k] * lambda[t + k];
            }
        }
        lambda[t] = acc / a[0];
    }
    let mut grad_in = vec![0.0; n];
    for (t, &l) in lambda.iter().enumerate().skip(p) {
        for k in 0..=p {
            grad_in[t - k] += bh[k] * l;
        }
    }
    grad_in
}

/// Complementary fusion `H(y_high) + L(y_low)` through the joint recurrence.
///
/// The first `P` outputs are copied from `init_values` when given; otherwise
/// `init` decides (`hold_input` copies the low-band input there).
pub fn complementary_combine(
    pair: &ComplementaryPair,
    y_high: &Signal,
    y_low: &Signal,
    init: FilterInit,
    init_values: Option<&Signal>,
) -> Result<Signal> {
    check_pair(pair)?;
    y_high.check_same_shape(y_low)?;
    if y_high.sample_rate_hz() != y_low.sample_rate_hz() {
        return Err(Error::invalid("sample_rate_hz", "inputs must share a rate"));
    }
    let p = pair.order();
    if let Some(iv) = init_values {
        if iv.channels() != y_high.channels() || iv.len() < p.min(y_high.len()) {
            return Err(Error::ShapeMismatch(format!(
                "init_values need {} channels and at least {p} steps",
                y_high.channels()
            )));
        }
    }
    let mut out = Array2::zeros(y_high.samples().dim());
    for c in 0..y_high.channels() {
        let high = y_high.channel(c).to_vec();
        let low = y_low.channel(c).to_vec();
        let head: Vec<f64> = match (init_values, init) {
            (Some(iv), _) => iv.channel(c).iter().take(p).copied().collect(),
            (None, FilterInit::Zeros) => vec![0.0; p],
            (None, FilterInit::HoldInput) => low.iter().take(p).copied().collect(),
        };
        let mut head = head;
        head.resize(p, 0.0);
        let fused = combine_slice(pair, &high, &low, &head);
        out.row_mut(c).assign(&Array1::from(fused));
    }
    y_high.with_samples(out)
}

/// Magnitude and phase at `n_points` frequencies evenly spaced on
/// `[0, fs/2]`.
pub fn frequency_response(coeffs: &FilterCoefficients, n_points: usize) -> Result<Vec<ResponsePoint>> {
    if n_points < 2 {
        return Err(Error::invalid("n_points", "need at least 2 points"));
    }
    let nyquist = coeffs.sample_rate_hz / 2.0;
    Ok((0..n_points)
        .map(|i| {
            let frac = i as f64 / (n_points - 1) as f64;
            let h = coeffs.response_at_omega(PI * frac);
            ResponsePoint {
                frequency_hz: frac * nyquist,
                magnitude: h.norm(),
                phase: h.arg(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn first_order_half_band_lowpass() {
        let f = design_butterworth(1, 2.5, 10.0, FilterKind::Lowpass).unwrap();
        assert!(approx(&f.b, &[0.5, 0.5], 1e-12), "{:?}", f.b);
        assert!(approx(&f.a, &[1.0, 0.0], 1e-12), "{:?}", f.a);
    }

    #[test]
    fn cutoff_at_nyquist_is_rejected() {
        assert!(design_butterworth(2, 5.0, 10.0, FilterKind::Lowpass).is_err());
        assert!(design_butterworth(0, 1.0, 10.0, FilterKind::Lowpass).is_err());
        assert!(design_butterworth(9, 1.0, 10.0, FilterKind::Lowpass).is_err());
        assert!(design_butterworth(2, 0.0, 10.0, FilterKind::Highpass).is_err());
    }

    #[test]
    fn minus_three_db_at_cutoff() {
        for order in 1..=MAX_ORDER {
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                for &(fc, fs) in &[(0.4, 10.0), (0.5, 20.0), (2.0, 10.0), (4.0, 10.0)] {
                    let f = design_butterworth(order, fc, fs, kind).unwrap();
                    let mag = f.response_at_hz(fc).norm();
                    assert!(
                        (mag - 0.5f64.sqrt()).abs() <= 1e-6,
                        "order {order} {kind} fc {fc}: {mag}"
                    );
                }
            }
        }
    }

    #[test]
    fn passband_edges_have_unit_gain() {
        let lp = design_butterworth(3, 0.4, 10.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(3, 0.4, 10.0, FilterKind::Highpass).unwrap();
        let r_lp = frequency_response(&lp, 16).unwrap();
        let r_hp = frequency_response(&hp, 16).unwrap();
        assert!((r_lp[0].magnitude - 1.0).abs() < 1e-12);
        assert!(r_hp[0].magnitude < 1e-12);
        assert!((r_hp[15].magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_band_average_has_zero_at_nyquist() {
        let f = FilterCoefficients::from_raw(
            vec![0.5, 0.5],
            vec![1.0, 0.0],
            FilterKind::Lowpass,
            2.5,
            10.0,
        )
        .unwrap();
        let r = frequency_response(&f, 5).unwrap();
        assert!(r[4].magnitude < 1e-15);
        assert!((r[4].frequency_hz - 5.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_complement_arithmetic() {
        let low = design_butterworth(1, 2.5, 10.0, FilterKind::Lowpass).unwrap();
        let pair = make_perfect_complement(&low);
        assert!(approx(&pair.high.b, &[0.5, -0.5], 1e-12));
        assert!(approx(&pair.high.a, &[1.0, 0.0], 1e-12));
        assert!(pair.perfect);
    }

    #[test]
    fn first_order_highpass_is_already_the_perfect_complement() {
        // b_hp = [1, -1] / (1 + K) equals a - b_lp for K = tan(pi fc / fs).
        let shared = make_shared_cutoff_pair(1, 0.4, 10.0).unwrap();
        let perfect = make_perfect_complement(&shared.low);
        assert!(approx(&shared.high.b, &perfect.high.b, 1e-15));
    }

    #[test]
    fn shared_cutoff_pair_differs_from_perfect_complement() {
        let shared = make_shared_cutoff_pair(2, 0.4, 10.0).unwrap();
        let perfect = make_perfect_complement(&shared.low);
        assert!(!shared.perfect);
        assert!(shared.shares_denominator());
        let diff: f64 = shared
            .high
            .b
            .iter()
            .zip(&perfect.high.b)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-3, "high legs should differ, diff {diff}");
    }

    #[test]
    fn system_i_pair_is_valid() {
        let pair = make_shared_cutoff_pair(3, 0.4, 10.0).unwrap();
        assert!(pair.high.is_stable() && pair.low.is_stable());
        assert_eq!(pair.high.cutoff_hz, pair.low.cutoff_hz);
        assert!(pair.shares_denominator());
    }

    #[test]
    fn impulse_through_half_band_average() {
        let f = FilterCoefficients::from_raw(
            vec![0.5, 0.5],
            vec![1.0, 0.0],
            FilterKind::Lowpass,
            2.5,
            10.0,
        )
        .unwrap();
        let x = Signal::from_channel(vec![1.0, 0.0, 0.0, 0.0], 10.0).unwrap();
        let zeros = iir_filter(&f, &x, FilterInit::Zeros).unwrap();
        assert_eq!(zeros.first_channel(), vec![0.0, 0.5, 0.0, 0.0]);
        let hold = iir_filter(&f, &x, FilterInit::HoldInput).unwrap();
        assert_eq!(hold.first_channel(), vec![1.0, 0.5, 0.0, 0.0]);
        let short = Signal::from_channel(vec![1.0], 10.0).unwrap();
        assert!(matches!(
            iir_filter(&f, &short, FilterInit::Zeros),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn single_pass_dc_behavior() {
        let lp = design_butterworth(2, 0.5, 10.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(2, 0.5, 10.0, FilterKind::Highpass).unwrap();
        let c = Signal::from_channel(vec![3.0; 600], 10.0).unwrap();
        let l = iir_filter(&lp, &c, FilterInit::Zeros).unwrap().first_channel();
        let h = iir_filter(&hp, &c, FilterInit::Zeros).unwrap().first_channel();
        assert!((l[599] - 3.0).abs() < 1e-9);
        assert!(h[599].abs() < 1e-9);
    }

    #[test]
    fn filtfilt_keeps_constants() {
        for order in 1..=4 {
            let lp = design_butterworth(order, 0.3, 10.0, FilterKind::Lowpass).unwrap();
            let c = Signal::from_channel(vec![-1.75; 200], 10.0).unwrap();
            let out = filtfilt(&lp, &c).unwrap().first_channel();
            assert!(out.iter().all(|v| (v + 1.75).abs() < 1e-9), "order {order}");
        }
    }

    #[test]
    fn filtfilt_rejects_short_input() {
        let lp = design_butterworth(3, 0.3, 10.0, FilterKind::Lowpass).unwrap();
        let s = Signal::from_channel(vec![1.0; 11], 10.0).unwrap();
        assert!(matches!(filtfilt(&lp, &s), Err(Error::SignalTooShort { needed: 12, .. })));
        let s = Signal::from_channel(vec![1.0; 12], 10.0).unwrap();
        assert!(filtfilt(&lp, &s).is_ok());
    }

    #[test]
    fn filtfilt_matrix_matches_direct_application() {
        let hp = design_butterworth(3, 0.4, 10.0, FilterKind::Highpass).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() + 0.1 * i as f64).collect();
        let m = filtfilt_matrix(&hp, x.len());
        let via_matrix = m.dot(&Array1::from(x.clone()));
        let direct = filtfilt_slice(&hp, &x);
        assert!(approx(via_matrix.as_slice().unwrap(), &direct, 1e-12));
    }

    #[test]
    fn combine_steady_state_follows_low_input() {
        let low = design_butterworth(1, 0.25, 20.0, FilterKind::Lowpass).unwrap();
        let pair = make_perfect_complement(&low);
        let n = 2000;
        let out = combine_slice(&pair, &vec![0.0; n], &vec![2.5; n], &[0.0]);
        assert!((out[n - 1] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn combine_rejects_mismatched_denominators() {
        let lp = design_butterworth(1, 0.25, 20.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(1, 1.0, 20.0, FilterKind::Highpass).unwrap();
        let pair = ComplementaryPair {
            high: hp,
            low: lp,
            perfect: false,
        };
        let s = Signal::from_channel(vec![1.0; 10], 20.0).unwrap();
        assert!(complementary_combine(&pair, &s, &s, FilterInit::Zeros, None).is_err());
    }

    #[test]
    fn combine_vjp_matches_explicit_jacobian() {
        let pair = make_shared_cutoff_pair(2, 0.7, 10.0).unwrap();
        let n = 12;
        let low: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let base: Vec<f64> = (0..n).map(|i| 0.3 * i as f64).collect();
        let g: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let vjp = combine_vjp_high(&pair, &g);
        let f0 = combine_slice(&pair, &base, &low, &[0.1, 0.2]);
        for j in 0..n {
            let mut bumped = base.clone();
            bumped[j] += 1.0;
            let f1 = combine_slice(&pair, &bumped, &low, &[0.1, 0.2]);
            let col: f64 = f1.iter().zip(&f0).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            assert!((col - vjp[j]).abs() < 1e-10, "j={j}: {col} vs {}", vjp[j]);
        }
    }
}
