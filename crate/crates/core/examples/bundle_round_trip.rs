//! Write an input bundle, unmix it from disk, save the result and score it
//! the way `polycone evaluate` does.

use polycone::io::{load_bundle, load_result, save_bundle, save_input_bundle};
use polycone::pipeline::{evaluate, run_pipeline, RunConfig};
use polycone::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let input = tmp.path().join("scene");
    let output = tmp.path().join("result");

    let (dataset, truth) = generate(&SynthConfig {
        bands: 50,
        pixels: 1600,
        noise_sigma: 0.01,
        seed: 5,
        ..SynthConfig::default()
    })?;
    save_input_bundle(&input, &dataset, Some(&truth), false)?;

    let bundle = load_bundle(&input)?;
    let truth = bundle.ground_truth.expect("synthetic bundles carry ground truth");
    let config = RunConfig {
        clustering: polycone::pipeline::Segmentation::Kmeans,
        ..RunConfig::default()
    };
    let out = run_pipeline(&bundle.dataset, truth.materials(), None, &config)?;
    save_bundle(&out.to_bundle(&config), &output, false)?;

    let mut names: Vec<String> = std::fs::read_dir(&output)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    println!("result bundle: {}", names.join(", "));

    let result = load_result(&output)?;
    let report = evaluate(&result.endmembers, &result.abundances, &truth, Some(&result.config))?;
    println!(
        "Avg. SAD {:.2}, Avg. RMSE {:.2} (x 1e-2), accuracy {:.3}",
        report.avg_sad * 100.0,
        report.avg_rmse * 100.0,
        report.accuracy.unwrap_or(f64::NAN)
    );
    println!("config hash {}", report.config_hash.unwrap_or_default());
    Ok(())
}
