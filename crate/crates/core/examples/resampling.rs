//! Low band of the double-mass signal on a coarser clock: Nyquist check and
//! reconstruction error for several decimation ratios.

use compfilt::filters::{design_butterworth, filtfilt, FilterKind};
use compfilt::resample::{check_nyquist, downsample, upsample, ResampleRatio};
use compfilt::signal::rmse;
use compfilt::systems::{gen_double_mass, DoubleMassSpec};
use compfilt::Signal;

fn main() -> compfilt::Result<()> {
    let (cutoff, fs) = (0.4, 10.0);
    let y = gen_double_mass(&DoubleMassSpec::default())?;
    let low = filtfilt(&design_butterworth(3, cutoff, fs, FilterKind::Lowpass)?, &y)?;
    for k in [1, 2, 4, 10, 13] {
        if !check_nyquist(cutoff, fs, k) {
            println!("k = {k:2}: cutoff {cutoff} Hz is above the decimated Nyquist {:.3} Hz, rejected", fs / (2.0 * k as f64));
            continue;
        }
        let ratio = ResampleRatio::new(k)?;
        let coarse = downsample(&low, ratio)?;
        let back = upsample(&coarse, ratio)?;
        let reference = low.slice(0..back.len())?;
        let scale = rmse(&reference, &Signal::zeros(1, back.len(), fs)?)?;
        println!(
            "k = {k:2}: {} coarse steps, relative reconstruction RMSE {:.3}%",
            coarse.len(),
            100.0 * rmse(&back, &reference)? / scale
        );
    }
    Ok(())
}
