//! Butterworth design, pole check and the two ways of building a
//! complementary pair.

use compfilt::filters::{design_butterworth, frequency_response, make_perfect_complement, make_shared_cutoff_pair, FilterKind};

fn main() -> compfilt::Result<()> {
    let (cutoff, fs) = (0.4, 10.0);
    for order in [1, 3, 6] {
        let low = design_butterworth(order, cutoff, fs, FilterKind::Lowpass)?;
        println!(
            "order {order}: b = {:?}\n         a = {:?}\n         |H(fc)| = {:.6}, max pole {:.4}",
            low.b,
            low.a,
            low.response_at_hz(cutoff).norm(),
            low.max_pole_magnitude()
        );
    }

    let shared = make_shared_cutoff_pair(3, cutoff, fs)?;
    let perfect = make_perfect_complement(&design_butterworth(3, cutoff, fs, FilterKind::Lowpass)?);
    println!("\n f (Hz)   |H+L-1| shared   |H+L-1| perfect");
    let hs = frequency_response(&shared.high, 11)?;
    for (i, p) in hs.iter().enumerate() {
        let w = std::f64::consts::PI * i as f64 / 10.0;
        let s = shared.high.response_at_omega(w) + shared.low.response_at_omega(w);
        let q = perfect.high.response_at_omega(w) + perfect.low.response_at_omega(w);
        println!("{:7.2}   {:14.6}   {:15.2e}", p.frequency_hz, (s - 1.0).norm(), (q - 1.0).norm());
    }
    Ok(())
}
