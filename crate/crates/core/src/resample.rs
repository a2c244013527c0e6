//! Decimation and linear-interpolation upsampling on the sample grid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Integer resampling factor `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ResampleRatio(usize);

impl ResampleRatio {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("k", "resampling ratio must be at least 1"));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for ResampleRatio {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        Self::new(k)
    }
}

impl From<ResampleRatio> for usize {
    fn from(r: ResampleRatio) -> usize {
        r.0
    }
}

/// Length of the decimated sequence: indices `0, k, 2k, ... <= n - 1`.
pub fn downsampled_len(n: usize, k: usize) -> usize {
    (n - 1) / k + 1
}

pub fn downsample_slice(x: &[f64], k: usize) -> Vec<f64> {
    x.iter().step_by(k).copied().collect()
}

/// Keeps every `k`-th step. No anti-alias filtering happens here; callers
/// lowpass first.
pub fn downsample(y: &Signal, k: ResampleRatio) -> Result<Signal> {
    let k = k.get();
    let m = downsampled_len(y.len(), k);
    let mut out = Array2::zeros((y.channels(), m));
    for (c, row) in y.samples().rows().into_iter().enumerate() {
        for i in 0..m {
            out[[c, i]] = row[i * k];
        }
    }
    Ok(Signal::new(out, y.sample_rate_hz() / k as f64)?.with_start_time(y.start_time_s()))
}

pub fn upsample_slice(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(k * (n - 1) + 1);
    for i in 0..n - 1 {
        let (lo, hi) = (x[i], x[i + 1]);
        out.push(lo);
        for j in 1..k {
            let w = j as f64 / k as f64;
            out.push(lo + w * (hi - lo));
        }
    }
    out.push(x[n - 1]);
    out
}

/// Adjoint of [`upsample_slice`]: each fine-grid gradient is shared between
/// the two coarse samples it was interpolated from.
pub fn upsample_vjp(grad_fine: &[f64], k: usize) -> Vec<f64> {
    let n = (grad_fine.len() - 1) / k + 1;
    let mut g = vec![0.0; n];
    for (idx, &gf) in grad_fine.iter().enumerate() {
        let i = idx / k;
        let j = idx % k;
        if j == 0 {
            g[i] += gf;
        } else {
            let w = j as f64 / k as f64;
            g[i] += (1.0 - w) * gf;
            g[i + 1] += w * gf;
        }
    }
    g
}

/// Linear interpolation between retained samples; output length
/// `k*(n-1)+1`, and `output[k*i] == input[i]` exactly.
pub fn upsample(y: &Signal, k: ResampleRatio) -> Result<Signal> {
    if y.len() < 2 {
        return Err(Error::SignalTooShort {
            needed: 2,
            got: y.len(),
        });
    }
    let k = k.get();
    let m = k * (y.len() - 1) + 1;
    let mut out = Array2::zeros((y.channels(), m));
    for c in 0..y.channels() {
        let up = upsample_slice(&y.channel(c).to_vec(), k);
        for (i, v) in up.into_iter().enumerate() {
            out[[c, i]] = v;
        }
    }
    Ok(Signal::new(out, y.sample_rate_hz() * k as f64)?.with_start_time(y.start_time_s()))
}

/// True when the cutoff stays strictly below the Nyquist frequency of the
/// decimated rate `fs / k`.
pub fn check_nyquist(cutoff_hz: f64, sample_rate_hz: f64, k: usize) -> bool {
    k >= 1 && cutoff_hz < sample_rate_hz / (2.0 * k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::from_channel(v.to_vec(), 10.0).unwrap()
    }

    fn k(v: usize) -> ResampleRatio {
        ResampleRatio::new(v).unwrap()
    }

    #[test]
    fn ratio_must_be_positive() {
        assert!(ResampleRatio::new(0).is_err());
        assert!(serde_json::from_str::<ResampleRatio>("0").is_err());
        assert_eq!(serde_json::from_str::<ResampleRatio>("3").unwrap().get(), 3);
    }

    #[test]
    fn downsample_examples() {
        let y = sig(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(downsample(&y, k(1)).unwrap(), y);
        let d = downsample(&y, k(2)).unwrap();
        assert_eq!(d.first_channel(), vec![0.0, 2.0, 4.0]);
        assert_eq!(d.sample_rate_hz(), 5.0);
        assert_eq!(downsample(&sig(&[1.0]), k(4)).unwrap().len(), 1);
        assert_eq!(downsampled_len(7, 3), 3);
    }

    #[test]
    fn upsample_examples() {
        let u = upsample(&sig(&[0.0, 2.0]), k(2)).unwrap();
        assert_eq!(u.first_channel(), vec![0.0, 1.0, 2.0]);
        assert_eq!(u.sample_rate_hz(), 20.0);
        let y = sig(&[1.0, -1.0, 4.0]);
        assert_eq!(upsample(&y, k(1)).unwrap(), y);
        assert!(upsample(&sig(&[1.0]), k(2)).is_err());
    }

    #[test]
    fn nyquist_examples() {
        assert!(check_nyquist(0.4, 10.0, 10));
        assert!(!check_nyquist(0.4, 10.0, 13));
        assert!(check_nyquist(0.07, 10.0, 2));
        assert!(!check_nyquist(0.5, 10.0, 10));
    }

    #[test]
    fn upsample_vjp_is_the_adjoint() {
        let x = [0.3, -1.2, 2.0, 0.7];
        let g: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).sin()).collect();
        let up = upsample_slice(&x, 3);
        let lhs: f64 = up.iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = upsample_vjp(&g, 3);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
