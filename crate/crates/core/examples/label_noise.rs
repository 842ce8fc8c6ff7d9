//! Corrupt a share of the true labels and watch the scores.

use polycone::metrics::NoiseRedraw;
use polycone::pipeline::{noise_sweep, sweep_csv, RunConfig};
use polycone::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dataset, truth) = generate(&SynthConfig {
        noise_sigma: 0.005,
        seed: 1,
        ..SynthConfig::default()
    })?;
    // heavy noise can leave a class region empty; regularize the basis then
    let config = RunConfig {
        tikhonov_fallback: true,
        ..RunConfig::default()
    };
    let rows = noise_sweep(
        &dataset,
        &truth,
        &config,
        &[0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.8],
        &[0, 1, 2, 3, 4],
        NoiseRedraw::AnyClass,
    )?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
