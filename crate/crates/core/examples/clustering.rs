//! k-means and the diagonal GMM on the same scene, scored against the
//! dominant-material labels.

use polycone::cluster::{segment, ClusterMethod};
use polycone::metrics::segmentation_accuracy;
use polycone::preprocess::{preprocess, PreprocessConfig};
use polycone::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dataset, truth) = generate(&SynthConfig {
        bands: 40,
        pixels: 4900,
        noise_sigma: 0.01,
        dirichlet_alpha: 0.3,
        seed: 21,
        ..SynthConfig::default()
    })?;
    let labels = truth.dominant_labels();
    let pre = preprocess(
        &dataset.data,
        &PreprocessConfig {
            sphere_normalize: true,
            reduce_to: Some(3),
        },
    )?;
    if let Some(basis) = &pre.basis {
        println!("projection keeps {:.2}% of the energy", basis.captured_energy * 100.0);
    }

    for (name, method) in [("k-means", ClusterMethod::Kmeans), ("GMM", ClusterMethod::Gmm)] {
        for fraction in [0.1, 0.25, 1.0] {
            let map = segment(&pre.reduced, 3, method, fraction, 0)?;
            let acc = segmentation_accuracy(&map, &labels)?;
            println!("{name:7} fit on {:3.0}% of pixels: accuracy {acc:.3}, sizes {:?}", fraction * 100.0, map.counts());
        }
    }
    Ok(())
}
