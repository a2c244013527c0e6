use std::f64::consts::PI;

use compfilt::filters::{
    complementary_combine, design_butterworth, frequency_response, make_perfect_complement, FilterInit, FilterKind,
};
use compfilt::neural::{Forecaster, GruModel};
use compfilt::resample::{downsample, upsample, ResampleRatio};
use compfilt::signal::{read_csv, rmse, write_csv};
use compfilt::spectrum::fft_real;
use compfilt::systems::{rk4_step, vdp_sim_states, vdp_truth_states, VdpSpec};
use compfilt::Signal;
use ndarray::Array3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signal(values: Vec<f64>, fs: f64) -> Signal {
    Signal::from_channel(values, fs).unwrap()
}

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, len)
}

proptest! {
    #[test]
    fn designs_are_stable_with_half_power_at_cutoff(order in 1usize..=8, ratio in 0.02..0.47f64, high in any::<bool>()) {
        let fs = 10.0;
        let kind = if high { FilterKind::Highpass } else { FilterKind::Lowpass };
        let c = design_butterworth(order, ratio * fs, fs, kind).unwrap();
        prop_assert!(c.is_stable());
        prop_assert!(c.max_pole_magnitude() < 1.0);
        let gain = c.response_at_hz(ratio * fs).norm();
        prop_assert!((gain - 0.5f64.sqrt()).abs() < 1e-6, "gain {gain}");
    }

    #[test]
    fn lowpass_magnitude_is_monotone(order in 1usize..=8, ratio in 0.02..0.47f64) {
        let c = design_butterworth(order, ratio * 10.0, 10.0, FilterKind::Lowpass).unwrap();
        let r = frequency_response(&c, 256).unwrap();
        // Slack at the -3 dB tolerance: order 8 near the low end of the band
        // ripples by ~2e-7 from coefficient rounding.
        for w in r.windows(2) {
            prop_assert!(w[1].magnitude <= w[0].magnitude + 1e-6, "{} > {} at {} Hz", w[1].magnitude, w[0].magnitude, w[1].frequency_hz);
        }
    }

    #[test]
    fn perfect_pair_reproduces_the_input(order in 1usize..=3, ratio in 0.02..0.45f64, y in values(5..200)) {
        let pair = make_perfect_complement(&design_butterworth(order, ratio * 10.0, 10.0, FilterKind::Lowpass).unwrap());
        let y = signal(y, 10.0);
        let out = complementary_combine(&pair, &y, &y, FilterInit::HoldInput, Some(&y)).unwrap();
        let err = out.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "max error {err}");
    }

    #[test]
    fn perfect_pair_transfer_functions_sum_to_one(order in 1usize..=3, ratio in 0.02..0.47f64, omega in 0.0..PI) {
        let pair = make_perfect_complement(&design_butterworth(order, ratio * 10.0, 10.0, FilterKind::Lowpass).unwrap());
        let sum = pair.high.response_at_omega(omega) + pair.low.response_at_omega(omega);
        prop_assert!((sum.re - 1.0).abs() < 1e-10 && sum.im.abs() < 1e-10, "sum {sum}");
    }

    #[test]
    fn rmse_is_a_metric(a in values(1..50), seed in 0u64..1000) {
        let n = a.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..n).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect::<Vec<f64>>();
        let (a, b, c) = (signal(a, 1.0), signal(draw(), 1.0), signal(draw(), 1.0));
        prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        // sqrt(mean) is the scaled Euclidean norm, so the triangle inequality holds.
        prop_assert!(rmse(&a, &c).unwrap() <= rmse(&a, &b).unwrap() + rmse(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact(y in prop::collection::vec(-1e6..1e6f64, 2..100), fs in 0.5..100.0f64) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let s = signal(y, fs);
        write_csv(&s, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.samples(), s.samples());
        prop_assert!((back.sample_rate_hz() - fs).abs() < 1e-9 * fs);
    }

    #[test]
    fn upsampling_keeps_retained_samples_and_is_piecewise_linear(y in values(2..120), k in 1usize..=10) {
        prop_assume!(y.len() > k);
        let s = signal(y.clone(), 10.0);
        let ratio = ResampleRatio::new(k).unwrap();
        let coarse = downsample(&s, ratio).unwrap();
        let fine = upsample(&coarse, ratio).unwrap();
        let f = fine.first_channel();
        for (i, v) in f.iter().enumerate().step_by(k) {
            prop_assert_eq!(*v, y[i]);
        }
        for i in 1..f.len() - 1 {
            if i % k != 0 {
                let second = f[i + 1] - 2.0 * f[i] + f[i - 1];
                prop_assert!(second.abs() < 1e-9, "second difference {second} at {i}");
            }
        }
    }

    #[test]
    fn parseval_holds(y in values(1..300)) {
        let x = fft_real(&y);
        let time: f64 = y.iter().map(|v| v * v).sum();
        let freq: f64 = x.iter().map(|c| c.norm_sqr()).sum::<f64>() / y.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1.0));
    }

    #[test]
    fn gru_outputs_are_bounded_and_prefix_consistent(seed in 0u64..500, hidden in 1usize..12, ctx in values(3..20)) {
        let model = GruModel::new(1, hidden, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let context = Array3::from_shape_vec((ctx.len(), 1, 1), ctx).unwrap();
        let (long, _) = model.forecast(context.view(), 25).unwrap();
        let (short, _) = model.forecast(context.view(), 10).unwrap();
        for t in 0..10 {
            prop_assert_eq!(long[[t, 0, 0]], short[[t, 0, 0]]);
        }
        // Every hidden unit is a convex mix of the previous state and a tanh,
        // so |h| <= 1 and the readout is bounded by its absolute row sum.
        let bound = model.readout.row(0).iter().map(|w| w.abs()).sum::<f64>() + model.readout_bias[0].abs();
        for v in long.iter() {
            prop_assert!(v.abs() <= bound + 1e-12);
        }
    }
}

#[test]
fn rk4_error_shrinks_with_fourth_order() {
    let f = |s: &[f64; 2]| [s[1], -s[0]];
    let error = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let mut s = [1.0, 0.0];
        for _ in 0..steps {
            s = rk4_step(f, &s, dt);
        }
        (s[0] - 1f64.cos()).abs()
    };
    let ratio = error(0.1) / error(0.05);
    assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
}

#[test]
fn forcing_oscillator_energy_is_conserved() {
    let spec = VdpSpec {
        b: 0.0,
        omega: 2.0 * PI * 0.1,
        duration: 50.0,
        ..VdpSpec::default()
    };
    let states = vdp_truth_states(&spec).unwrap();
    let w2 = spec.omega * spec.omega;
    let energy = |s: &[f64; 4]| s[2] * s[2] * w2 + s[3] * s[3];
    let e0 = energy(&states[0]);
    for s in &states[..1000] {
        assert!((energy(s) - e0).abs() <= 1e-6 * e0);
    }
}

#[test]
fn unforced_simulator_reaches_the_limit_cycle() {
    let spec = VdpSpec {
        duration: 200.0,
        ..VdpSpec::default()
    };
    let states = vdp_sim_states(&spec).unwrap();
    let late = &states[states.len() / 2..];
    let amplitude = late.iter().map(|s| s[0].abs()).fold(0.0, f64::max);
    assert!((amplitude - 2.0).abs() < 0.2, "amplitude {amplitude}");
}
