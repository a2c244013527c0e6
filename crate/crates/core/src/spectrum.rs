//! Magnitude spectra for choosing cutoffs, and the plausibility check for a
//! designed pair.
//!
//! The transform is an iterative radix-2 FFT; other lengths go through
//! Bluestein's chirp-z algorithm on a power-of-two grid, so bin frequencies
//! are always `k * fs / N` for the original `N`. A rectangular window is used,
//! so tones off the bin grid leak into neighbours.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{complementary_combine, ComplementaryPair, FilterInit};
use crate::signal::{rmse, Signal};

/// Peaks below this fraction of the largest magnitude are ignored by
/// [`suggest_cutoff`].
pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies_hz: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub source_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub frequency_hz: f64,
    pub magnitude: f64,
    pub prominence: f64,
}

fn bit_reverse_permute(data: &mut [Complex64]) {
    let n = data.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
}

/// In-place radix-2 transform; `data.len()` must be a power of two.
/// `inverse` flips the twiddle sign but does not rescale.
fn radix2_in_place(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    bit_reverse_permute(data);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles for this stage, computed directly to limit drift.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| {
                if k == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64)
                }
            })
            .collect();
        for chunk in data.chunks_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * twiddles[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
}

fn bluestein(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp w_k = exp(-j*pi*k^2/n); k^2 mod 2n keeps the angle small.
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
            Complex64::from_polar(1.0, -PI * k2 / n as f64)
        })
        .collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = input[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2_in_place(&mut a, false);
    radix2_in_place(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    radix2_in_place(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}

/// Forward discrete Fourier transform `X_k = sum_n x_n exp(-2*pi*j*k*n/N)`.
pub fn fft(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    if n <= 1 {
        return input.to_vec();
    }
    if n.is_power_of_two() {
        let mut data = input.to_vec();
        radix2_in_place(&mut data, false);
        data
    } else {
        bluestein(input)
    }
}

pub fn fft_real(input: &[f64]) -> Vec<Complex64> {
    let data: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&data)
}

/// One-sided magnitude `|X_k| / N` of the mean-removed first channel, for
/// `k = 0..=N/2`.
pub fn magnitude_spectrum(y: &Signal) -> Result<Spectrum> {
    if y.len() < 2 {
        return Err(Error::SignalTooShort {
            needed: 2,
            got: y.len(),
        });
    }
    let x = y.first_channel();
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let spectrum = fft_real(&centered);
    let bins = n / 2 + 1;
    let fs = y.sample_rate_hz();
    Ok(Spectrum {
        frequencies_hz: (0..bins).map(|k| k as f64 * fs / n as f64).collect(),
        magnitudes: spectrum[..bins].iter().map(|c| c.norm() / n as f64).collect(),
        source_length: n,
    })
}

impl Spectrum {
    /// Local maxima with their topographic prominence: height above the
    /// higher of the two lowest points separating the peak from taller
    /// terrain (or from the spectrum ends).
    pub fn peaks(&self) -> Vec<Peak> {
        let m = &self.magnitudes;
        let n = m.len();
        let mut peaks = Vec::new();
        for i in 0..n {
            let left_ok = i == 0 || m[i] > m[i - 1];
            let right_ok = i + 1 == n || m[i] >= m[i + 1];
            if !(left_ok && right_ok) || m[i] <= 0.0 {
                continue;
            }
            let mut left_min = m[i];
            let mut j = i;
            while j > 0 {
                j -= 1;
                if m[j] > m[i] {
                    break;
                }
                left_min = left_min.min(m[j]);
            }
            let mut right_min = m[i];
            let mut j = i;
            while j + 1 < n {
                j += 1;
                if m[j] > m[i] {
                    break;
                }
                right_min = right_min.min(m[j]);
            }
            peaks.push(Peak {
                index: i,
                frequency_hz: self.frequencies_hz[i],
                magnitude: m[i],
                prominence: m[i] - left_min.max(right_min),
            });
        }
        peaks
    }
}

/// Geometric mean of the frequencies of the two most prominent peaks.
///
/// Only peaks whose prominence reaches `prominence_fraction` of the largest
/// magnitude count; fewer than two such peaks is an error.
pub fn suggest_cutoff_with(spec: &Spectrum, prominence_fraction: f64) -> Result<f64> {
    let max = spec.magnitudes.iter().copied().fold(0.0, f64::max);
    let threshold = prominence_fraction * max;
    let mut peaks: Vec<Peak> = spec
        .peaks()
        .into_iter()
        .filter(|p| p.frequency_hz > 0.0 && p.prominence >= threshold)
        .collect();
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks);
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    Ok((peaks[0].frequency_hz * peaks[1].frequency_hz).sqrt())
}

pub fn suggest_cutoff(spec: &Spectrum) -> Result<f64> {
    suggest_cutoff_with(spec, DEFAULT_PROMINENCE_FRACTION)
}

/// RMSE between `H(measurements) + L(simulator)` and the measurements.
/// Both legs run through the joint complementary recurrence, started from
/// the first measurements, so a perfect pair with identical inputs returns
/// zero. Small values mean the simulator's low band can stand in for the
/// measured one.
pub fn plausibility_check(
    pair: &ComplementaryPair,
    measurements: &Signal,
    simulator: &Signal,
) -> Result<f64> {
    measurements.check_same_shape(simulator)?;
    let fused = complementary_combine(pair, measurements, simulator, FilterInit::HoldInput, Some(measurements))?;
    rmse(&fused, measurements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{design_butterworth, make_perfect_complement, FilterKind};

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| {
                        let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, angle)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_on_small_sizes() {
        for n in [1usize, 2, 3, 5, 8, 12, 17, 64, 100] {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
                .collect();
            let fast = fft(&x);
            let slow = naive_dft(&x);
            let err = fast
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n}: {err}");
        }
    }

    #[test]
    fn bin_centered_sinusoid_has_half_amplitude_peak() {
        let n = 256;
        let fs = 32.0;
        let bin = 20;
        let amp = 1.7;
        let f0 = bin as f64 * fs / n as f64;
        let x: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * PI * f0 * i as f64 / fs + 0.3).cos())
            .collect();
        let spec = magnitude_spectrum(&Signal::from_channel(x, fs).unwrap()).unwrap();
        assert!((spec.magnitudes[bin] - amp / 2.0).abs() < 1e-9);
        for (k, m) in spec.magnitudes.iter().enumerate() {
            if k != bin {
                assert!(*m < 1e-9, "bin {k}: {m}");
            }
        }
    }

    #[test]
    fn constant_signal_has_flat_zero_spectrum() {
        let spec = magnitude_spectrum(&Signal::from_channel(vec![4.2; 50], 1.0).unwrap()).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m < 1e-12));
    }

    #[test]
    fn geometric_mean_of_two_tones() {
        let fs = 64.0;
        let n = 640;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * t).sin() + (2.0 * PI * 4.0 * t).sin()
            })
            .collect();
        let spec = magnitude_spectrum(&Signal::from_channel(x, fs).unwrap()).unwrap();
        let cutoff = suggest_cutoff(&spec).unwrap();
        assert!((cutoff - 2.0).abs() < 1e-12, "{cutoff}");
    }

    #[test]
    fn single_tone_has_no_cutoff() {
        let x: Vec<f64> = (0..128).map(|i| (2.0 * PI * 8.0 * i as f64 / 128.0).sin()).collect();
        let spec = magnitude_spectrum(&Signal::from_channel(x, 1.0).unwrap()).unwrap();
        assert!(matches!(suggest_cutoff(&spec), Err(Error::TooFewPeaks)));
    }

    #[test]
    fn identical_inputs_are_plausible() {
        let low = design_butterworth(1, 0.25, 20.0, FilterKind::Lowpass).unwrap();
        let pair = make_perfect_complement(&low);
        let y: Vec<f64> = (0..800).map(|i| (i as f64 * 0.05).sin() * 2.0 + (i as f64 * 0.9).cos()).collect();
        let s = Signal::from_channel(y, 20.0).unwrap();
        assert!(plausibility_check(&pair, &s, &s).unwrap() < 1e-12);
    }
}
