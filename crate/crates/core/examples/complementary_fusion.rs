//! Fusing two sources through a complementary pair: the identity for equal
//! inputs, and the simulator's low band with the measured high band.

use compfilt::filters::{complementary_combine, design_butterworth, make_perfect_complement, make_shared_cutoff_pair, FilterInit, FilterKind};
use compfilt::signal::rmse;
use compfilt::systems::{gen_vdp_sim, gen_vdp_truth, VdpSpec};

fn main() -> compfilt::Result<()> {
    let spec = VdpSpec::default();
    let (y, sim) = (gen_vdp_truth(&spec)?, gen_vdp_sim(&spec)?);
    let fs = y.sample_rate_hz();

    let perfect = make_perfect_complement(&design_butterworth(1, 0.25, fs, FilterKind::Lowpass)?);
    let same = complementary_combine(&perfect, &y, &y, FilterInit::HoldInput, Some(&y))?;
    println!("perfect pair, equal inputs: max deviation {:.2e}", same.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

    let shared = make_shared_cutoff_pair(2, 0.25, fs)?;
    let leaky = complementary_combine(&shared, &y, &y, FilterInit::HoldInput, Some(&y))?;
    println!("order-2 shared-cutoff pair, equal inputs: RMSE {:.3}", rmse(&leaky, &y)?);

    let fused = complementary_combine(&perfect, &y, &sim, FilterInit::HoldInput, Some(&y))?;
    println!("simulator alone: RMSE {:.3}", rmse(&sim, &y)?);
    println!("H(measured) + L(simulator): RMSE {:.3}", rmse(&fused, &y)?);
    Ok(())
}
