//! Runs an experiment config through the library and prints the summary
//! table. Usage: `cargo run --release --example run_config -- configs/system_i_smoke.toml`.

use compfilt::experiment::{run_experiment, ExperimentConfig};

fn main() -> compfilt::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/system_i_smoke.toml").into());
    let config = ExperimentConfig::load(&path)?;
    let outcome = run_experiment(&config)?;
    println!("evaluation window: steps {}..{}", outcome.summary.eval_window.0, outcome.summary.eval_window.1);
    for s in &outcome.summary.schemes {
        println!("{:<12} {}", s.scheme.name(), s.table);
    }
    println!("artifacts in {}", config.output_dir.display());
    Ok(())
}
