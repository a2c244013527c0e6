//! Synthetic ground truth and simulators: a two-tone double-mass spring
//! signal and a forced Van-der-Pol oscillator with its unforced simulator.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{read_csv, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleMassSpec {
    pub amplitudes: [f64; 2],
    pub frequencies_hz: [f64; 2],
    /// Phase of the slow tone, radians.
    pub phase: f64,
    pub offset: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Default for DoubleMassSpec {
    fn default() -> Self {
        Self {
            amplitudes: [1.28, 0.677],
            frequencies_hz: [0.115, 0.57],
            phase: -7.7,
            offset: -0.009,
            dt: 0.1,
            duration: 100.0,
        }
    }
}

fn grid_len(dt: f64, duration: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    Ok(((duration / dt).round() as usize).max(1))
}

/// `x(t) = A0 cos(2 pi f0 t + phase) + A1 cos(2 pi f1 t) + offset` on
/// `t = 0, dt, ..` for `duration / dt` samples.
pub fn gen_double_mass(spec: &DoubleMassSpec) -> Result<Signal> {
    let n = grid_len(spec.dt, spec.duration)?;
    let [a0, a1] = spec.amplitudes;
    let [f0, f1] = spec.frequencies_hz;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * spec.dt;
            a0 * (2.0 * PI * f0 * t + spec.phase).cos() + a1 * (2.0 * PI * f1 * t).cos() + spec.offset
        })
        .collect();
    Signal::from_channel(x, 1.0 / spec.dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdpSpec {
    pub a: f64,
    pub b: f64,
    pub a_tilde: f64,
    /// Angular frequency of the forcing oscillator, rad/s.
    pub omega: f64,
    pub dt: f64,
    /// `(x, y, u, v)` at `t = 0`; the simulator starts from `(x, y)`.
    pub initial_state: [f64; 4],
    pub duration: f64,
}

impl Default for VdpSpec {
    fn default() -> Self {
        Self {
            a: 5.0,
            b: 80.0,
            a_tilde: 3.81,
            omega: 20.0,
            dt: 0.05,
            initial_state: [1.0, 0.0, 1.0, 0.0],
            duration: 100.0,
        }
    }
}

/// One classic fourth-order Runge-Kutta step.
pub fn rk4_step<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], x: &[f64; D], dt: f64) -> [f64; D] {
    let shift = |base: &[f64; D], k: &[f64; D], s: f64| {
        let mut out = *base;
        for i in 0..D {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(x);
    let k2 = f(&shift(x, &k1, dt / 2.0));
    let k3 = f(&shift(x, &k2, dt / 2.0));
    let k4 = f(&shift(x, &k3, dt));
    let mut out = *x;
    for i in 0..D {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn integrate<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], x0: [f64; D], dt: f64, n: usize) -> Result<Vec<[f64; D]>> {
    let mut states = Vec::with_capacity(n);
    let mut x = x0;
    states.push(x);
    for step in 1..n {
        x = rk4_step(&f, &x, dt);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step });
        }
        states.push(x);
    }
    Ok(states)
}

/// Full `(x, y, u, v)` trajectory of the forced oscillator.
pub fn vdp_truth_states(spec: &VdpSpec) -> Result<Vec<[f64; 4]>> {
    let n = grid_len(spec.dt, spec.duration)?;
    let (a, b, w2) = (spec.a, spec.b, spec.omega * spec.omega);
    let f = |s: &[f64; 4]| {
        let [x, y, u, v] = *s;
        [y, -x + a * (1.0 - x * x) * y + b * u, v, -w2 * u]
    };
    integrate(f, spec.initial_state, spec.dt, n)
}

/// Full `(x, y)` trajectory of the unforced simulator with damping `a_tilde`.
pub fn vdp_sim_states(spec: &VdpSpec) -> Result<Vec<[f64; 2]>> {
    let n = grid_len(spec.dt, spec.duration)?;
    let a = spec.a_tilde;
    let f = |s: &[f64; 2]| {
        let [x, y] = *s;
        [y, -x + a * (1.0 - x * x) * y]
    };
    let [x0, y0, _, _] = spec.initial_state;
    integrate(f, [x0, y0], spec.dt, n)
}

/// Observed position `x` of the forced oscillator.
pub fn gen_vdp_truth(spec: &VdpSpec) -> Result<Signal> {
    let x = vdp_truth_states(spec)?.iter().map(|s| s[0]).collect();
    Signal::from_channel(x, 1.0 / spec.dt)
}

/// Position `x` of the unforced simulator.
pub fn gen_vdp_sim(spec: &VdpSpec) -> Result<Signal> {
    let x = vdp_sim_states(spec)?.iter().map(|s| s[0]).collect();
    Signal::from_channel(x, 1.0 / spec.dt)
}

/// Reads user-supplied measurements in the signal CSV format.
pub fn load_measurements(path: impl AsRef<Path>) -> Result<Signal> {
    read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_mass_first_sample_and_length() {
        let s = gen_double_mass(&DoubleMassSpec::default()).unwrap();
        assert_eq!(s.len(), 1000);
        assert_eq!(s.sample_rate_hz(), 10.0);
        let expected = 1.28 * (-7.7f64).cos() + 0.677 - 0.009;
        assert!((s.first_channel()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.864).abs() < 1e-3);
    }

    #[test]
    fn unforced_truth_matches_simulator() {
        let spec = VdpSpec {
            b: 0.0,
            a_tilde: 5.0,
            duration: 5.0,
            ..VdpSpec::default()
        };
        let truth = vdp_truth_states(&spec).unwrap();
        let sim = vdp_sim_states(&spec).unwrap();
        assert_eq!(truth.len(), 100);
        for (t, s) in truth.iter().zip(&sim) {
            assert!((t[0] - s[0]).abs() < 1e-6 && (t[1] - s[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn divergent_integration_reports_the_step() {
        let spec = VdpSpec {
            omega: 2.0 * PI * 0.1,
            ..VdpSpec::default()
        };
        assert!(matches!(gen_vdp_truth(&spec), Err(Error::Diverged { .. })));
    }
}
