//! Compare the two ways of turning pairwise hyperplanes into class regions.

use polycone::partition::{fit_partition, RegionRule, SvmConfig};
use polycone::preprocess::{preprocess, PreprocessConfig};
use polycone::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for materials in [3, 4, 5] {
        let (dataset, truth) = generate(&SynthConfig {
            bands: 24,
            materials,
            pixels: 3600,
            seed: 3,
            ..SynthConfig::default()
        })?;
        let labels = truth.dominant_labels();
        let pre = preprocess(
            &dataset.data,
            &PreprocessConfig {
                sphere_normalize: true,
                reduce_to: Some(materials),
            },
        )?;
        for rule in [RegionRule::ClassCones, RegionRule::Arrangement] {
            match fit_partition(&pre.reduced, &labels, &SvmConfig::default(), rule) {
                Ok(partition) => {
                    let agree = partition
                        .pixel_regions
                        .iter()
                        .zip(&labels.labels)
                        .filter(|(r, l)| **r == Some(**l))
                        .count();
                    println!(
                        "m = {materials}, {rule:?}: {} hyperplanes, {} populated cells, region/label agreement {:.1}%",
                        partition.hyperplanes.len(),
                        partition.populated_cells,
                        100.0 * agree as f64 / labels.len() as f64
                    );
                }
                Err(e) => println!("m = {materials}, {rule:?}: {e}"),
            }
        }
    }
    Ok(())
}
