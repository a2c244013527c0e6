//! Cutoff selection from the spectrum, then a plausibility check of the
//! Van-der-Pol simulator against the measurements at that cutoff.

use compfilt::filters::{design_butterworth, make_perfect_complement, FilterKind};
use compfilt::signal::rmse;
use compfilt::spectrum::{magnitude_spectrum, plausibility_check, suggest_cutoff};
use compfilt::systems::{gen_double_mass, gen_vdp_sim, gen_vdp_truth, DoubleMassSpec, VdpSpec};

fn main() -> compfilt::Result<()> {
    let y = gen_double_mass(&DoubleMassSpec::default())?;
    let spec = magnitude_spectrum(&y)?;
    let mut peaks = spec.peaks();
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    for p in peaks.iter().take(3) {
        println!("peak at {:.3} Hz, magnitude {:.3}", p.frequency_hz, p.magnitude);
    }
    println!("suggested cutoff for the double-mass signal: {:.3} Hz", suggest_cutoff(&spec)?);

    let vdp = VdpSpec::default();
    let (truth, sim) = (gen_vdp_truth(&vdp)?, gen_vdp_sim(&vdp)?);
    println!("\nVan-der-Pol simulator RMSE against measurements: {:.3}", rmse(&truth, &sim)?);
    for cutoff in [0.1, 0.25, 0.5, 1.0] {
        let pair = make_perfect_complement(&design_butterworth(1, cutoff, truth.sample_rate_hz(), FilterKind::Lowpass)?);
        println!("  H(measured) + L(simulator) at {cutoff:.2} Hz: RMSE {:.3}", plausibility_check(&pair, &truth, &sim)?);
    }
    Ok(())
}
