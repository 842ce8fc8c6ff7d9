//! End-to-end runs: preprocessing, segmentation, cone partition and
//! unmixing, driven by a flat [`RunConfig`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cluster::{segment, ClusterMethod};
use crate::dataset::{dominant_labels, ClassificationMap, GroundTruth, SpectralDataset};
use crate::error::{Error, Result};
use crate::geometry::ProjectionOptions;
use crate::io::ResultBundle;
use crate::metrics::{config_hash, inject_label_noise, match_and_score, segmentation_accuracy, EvaluationReport, NoiseRedraw};
use crate::partition::{fit_partition, ConePartition, RegionRule, SvmConfig};
use crate::preprocess::{preprocess, PreprocessConfig, Preprocessed};
use crate::unmix::{unmix, Param, ReferenceSelection, UnmixConfig, UnmixResult, DEFAULT_COND_LIMIT};

/// Where the segmentation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    Kmeans,
    Gmm,
    /// Labels supplied by the caller.
    External,
}

impl std::str::FromStr for Segmentation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" => Ok(Segmentation::Kmeans),
            "gmm" => Ok(Segmentation::Gmm),
            "external" => Ok(Segmentation::External),
            other => Err(format!("unknown clustering method '{other}'")),
        }
    }
}

/// Every knob of a run, as one flat record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of materials; taken from the bundle header when absent.
    pub materials: Option<usize>,
    pub sphere_normalize: bool,
    /// Apply the uncentered PCA projection.
    pub reduce: bool,
    /// Target dimension of the projection; defaults to the material count.
    pub pca_dim: Option<usize>,
    pub clustering: Segmentation,
    pub cluster_fraction: f64,
    pub cluster_seed: u64,
    pub svm_c: f64,
    pub svm_sample_fraction: f64,
    pub svm_seed: u64,
    pub svm_tol: f64,
    pub svm_max_epochs: usize,
    pub regions: RegionRule,
    pub saturation: Param,
    pub lambda: Param,
    pub cond_limit: f64,
    pub tikhonov_fallback: bool,
    pub project_abundances: bool,
    pub reference: ReferenceSelection,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let svm = SvmConfig::default();
        let projection = ProjectionOptions::default();
        Self {
            materials: None,
            sphere_normalize: true,
            reduce: true,
            pca_dim: None,
            clustering: Segmentation::Gmm,
            cluster_fraction: 0.25,
            cluster_seed: 0,
            svm_c: svm.c,
            svm_sample_fraction: svm.sample_fraction,
            svm_seed: svm.seed,
            svm_tol: svm.tol,
            svm_max_epochs: svm.max_epochs,
            regions: RegionRule::default(),
            saturation: Param::Auto,
            lambda: Param::Auto,
            cond_limit: DEFAULT_COND_LIMIT,
            tikhonov_fallback: false,
            project_abundances: false,
            reference: ReferenceSelection::default(),
            projection_tol: projection.tol,
            projection_max_iter: projection.max_iter,
            input: None,
            labels: None,
            output: None,
        }
    }
}

fn in_unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("run config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.unmix_config().validate()?;
        in_unit_interval("cluster_fraction", self.cluster_fraction)?;
        in_unit_interval("svm_sample_fraction", self.svm_sample_fraction)?;
        if !(self.svm_c > 0.0) {
            return Err(Error::InvalidArgument(format!("svm_c must be positive, got {}", self.svm_c)));
        }
        if !(self.svm_tol > 0.0) || !(self.projection_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if let Some(m) = self.materials {
            if m < 2 {
                return Err(Error::InvalidArgument(format!("need at least 2 materials, got {m}")));
            }
        }
        if self.pca_dim == Some(0) {
            return Err(Error::InvalidArgument("pca_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            sample_fraction: self.svm_sample_fraction,
            seed: self.svm_seed,
            tol: self.svm_tol,
            max_epochs: self.svm_max_epochs,
        }
    }

    pub fn unmix_config(&self) -> UnmixConfig {
        UnmixConfig {
            saturation: self.saturation,
            lambda: self.lambda,
            cond_limit: self.cond_limit,
            tikhonov_fallback: self.tikhonov_fallback,
            project_abundances: self.project_abundances,
            reference: self.reference,
        }
    }

    pub fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            tol: self.projection_tol,
            max_iter: self.projection_max_iter,
            ..ProjectionOptions::default()
        }
    }

    pub fn preprocess_config(&self, materials: usize) -> PreprocessConfig {
        PreprocessConfig {
            sphere_normalize: self.sphere_normalize,
            reduce_to: self.reduce.then(|| self.pca_dim.unwrap_or(materials)),
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub materials: usize,
    pub preprocessed: Preprocessed,
    pub segmentation: ClassificationMap,
    pub partition: ConePartition,
    pub unmixed: UnmixResult,
    /// Wall-clock seconds for `preprocess`, `segmentation` and `unmixing`
    /// (the latter covers partition and recovery).
    pub timings: BTreeMap<String, f64>,
}

impl PipelineOutput {
    /// Dominant labels of the final abundances.
    pub fn abundance_labels(&self) -> ClassificationMap {
        dominant_labels(&self.unmixed.abundances)
    }

    /// The persisted form, with `config` and resolved values as the snapshot.
    pub fn to_bundle(&self, config: &RunConfig) -> ResultBundle {
        ResultBundle {
            endmembers: self.unmixed.endmembers.clone(),
            abundances: self.unmixed.abundances.clone(),
            initial_abundances: Some(self.unmixed.initial_abundances.clone()),
            labels: self.abundance_labels().labels,
            config: self.config_snapshot(config),
            timings: self.timings.clone(),
            metrics: None,
        }
    }

    pub fn config_snapshot(&self, config: &RunConfig) -> serde_json::Value {
        json!({
            "run": config,
            "resolved": {
                "materials": self.materials,
                "reduced_dim": self.preprocessed.reduced.ncols(),
                "captured_energy": self.preprocessed.basis.as_ref().map(|b| b.captured_energy),
                "saturation": self.unmixed.saturation,
                "lambda_endmembers": self.unmixed.lambda,
                "lambda_abundances": self.unmixed.lambda_abundances,
                "populated_cells": self.partition.populated_cells,
                "reference_pixels": self.unmixed.distances.reference_pixels,
            }
        })
    }

    /// `"segmentation: X.XXs, unmixing: Y.YYs"`
    pub fn timing_line(&self) -> String {
        format!(
            "segmentation: {:.2}s, unmixing: {:.2}s",
            self.timings.get("segmentation").copied().unwrap_or(0.0),
            self.timings.get("unmixing").copied().unwrap_or(0.0)
        )
    }
}

/// Preprocesses `dataset` and segments it with the configured clustering.
pub fn segment_dataset(
    dataset: &SpectralDataset,
    materials: usize,
    config: &RunConfig,
) -> Result<(Preprocessed, ClassificationMap)> {
    let pre = preprocess(&dataset.data, &config.preprocess_config(materials)).map_err(|e| e.in_stage("preprocess"))?;
    let method = match config.clustering {
        Segmentation::Kmeans => ClusterMethod::Kmeans,
        Segmentation::Gmm => ClusterMethod::Gmm,
        Segmentation::External => {
            return Err(Error::InvalidArgument("external segmentation needs labels".into()).in_stage("segmentation"))
        }
    };
    let labels = segment(&pre.reduced, materials, method, config.cluster_fraction, config.cluster_seed)
        .map_err(|e| e.in_stage("segmentation"))?;
    Ok((pre, labels))
}

/// Runs every stage. `external` labels are required when the clustering
/// method is [`Segmentation::External`] and ignored otherwise.
pub fn run_pipeline(
    dataset: &SpectralDataset,
    materials: usize,
    external: Option<&ClassificationMap>,
    config: &RunConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    if materials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 materials, got {materials}")));
    }
    let mut timings = BTreeMap::new();

    let clock = Instant::now();
    let preprocessed =
        preprocess(&dataset.data, &config.preprocess_config(materials)).map_err(|e| e.in_stage("preprocess"))?;
    timings.insert("preprocess".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let segmentation = match config.clustering {
        Segmentation::External => {
            let labels = external.ok_or_else(|| {
                Error::InvalidArgument("external segmentation needs labels".into()).in_stage("segmentation")
            })?;
            if labels.len() != dataset.pixels() || labels.classes != materials {
                return Err(Error::Shape(format!(
                    "{} labels over {} classes for {} pixels and {materials} materials",
                    labels.len(),
                    labels.classes,
                    dataset.pixels()
                ))
                .in_stage("segmentation"));
            }
            labels.clone()
        }
        Segmentation::Kmeans | Segmentation::Gmm => {
            let method = if config.clustering == Segmentation::Kmeans {
                ClusterMethod::Kmeans
            } else {
                ClusterMethod::Gmm
            };
            segment(
                &preprocessed.reduced,
                materials,
                method,
                config.cluster_fraction,
                config.cluster_seed,
            )
            .map_err(|e| e.in_stage("segmentation"))?
        }
    };
    timings.insert("segmentation".to_string(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let partition = fit_partition(&preprocessed.reduced, &segmentation, &config.svm_config(), config.regions)
        .map_err(|e| e.in_stage("partition"))?;
    let unmixed = unmix(
        &dataset.data,
        &preprocessed.reduced,
        &partition,
        &segmentation,
        &config.unmix_config(),
        &config.projection_options(),
    )
    .map_err(|e| e.in_stage("unmixing"))?;
    timings.insert("unmixing".to_string(), clock.elapsed().as_secs_f64());

    Ok(PipelineOutput {
        materials,
        preprocessed,
        segmentation,
        partition,
        unmixed,
        timings,
    })
}

/// Scores a run against ground truth, including segmentation accuracy of
/// the abundance labels when true labels exist.
pub fn evaluate(
    endmembers: &DMatrix<f64>,
    abundances: &DMatrix<f64>,
    truth: &GroundTruth,
    config: Option<&serde_json::Value>,
) -> Result<EvaluationReport> {
    let mut report = match_and_score(endmembers, abundances, truth)?;
    if let Some(true_labels) = &truth.labels {
        let pred = dominant_labels(abundances);
        report.accuracy = Some(segmentation_accuracy(&pred, true_labels)?);
    }
    report.config_hash = config.map(config_hash);
    Ok(report)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores of repeated runs that differ only in the SVM subsample seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub svm_seeds: Vec<u64>,
    pub avg_sad: Vec<f64>,
    pub avg_rmse: Vec<f64>,
    pub avg_sad_mean: f64,
    pub avg_sad_std: f64,
    pub avg_rmse_mean: f64,
    pub avg_rmse_std: f64,
}

impl RepeatSummary {
    pub fn from_reports(svm_seeds: Vec<u64>, reports: &[EvaluationReport]) -> Self {
        let avg_sad: Vec<f64> = reports.iter().map(|r| r.avg_sad).collect();
        let avg_rmse: Vec<f64> = reports.iter().map(|r| r.avg_rmse).collect();
        let (avg_sad_mean, avg_sad_std) = mean_std(&avg_sad);
        let (avg_rmse_mean, avg_rmse_std) = mean_std(&avg_rmse);
        Self {
            svm_seeds,
            avg_sad,
            avg_rmse,
            avg_sad_mean,
            avg_sad_std,
            avg_rmse_mean,
            avg_rmse_std,
        }
    }
}

/// Runs `repeats` times with SVM seeds `svm_seed, svm_seed + 1, ...`.
pub fn run_repeats(
    dataset: &SpectralDataset,
    materials: usize,
    external: Option<&ClassificationMap>,
    config: &RunConfig,
    repeats: usize,
) -> Result<Vec<(RunConfig, PipelineOutput)>> {
    (0..repeats as u64)
        .map(|r| {
            let cfg = RunConfig {
                svm_seed: config.svm_seed + r,
                ..config.clone()
            };
            run_pipeline(dataset, materials, external, &cfg).map(|out| (cfg, out))
        })
        .collect()
}

/// One row of a label-noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub avg_sad_mean: f64,
    pub avg_sad_std: f64,
    pub avg_rmse_mean: f64,
    pub avg_rmse_std: f64,
}

/// For each noise fraction and seed: corrupt the true labels, run the
/// pipeline on them as an external segmentation and score the result. The
/// seed drives both the noise and the SVM subsample.
pub fn noise_sweep(
    dataset: &SpectralDataset,
    truth: &GroundTruth,
    config: &RunConfig,
    fractions: &[f64],
    seeds: &[u64],
    redraw: NoiseRedraw,
) -> Result<Vec<SweepRow>> {
    let clean = truth
        .labels
        .clone()
        .unwrap_or_else(|| truth.dominant_labels());
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("noise sweep needs at least one seed".into()));
    }
    let m = truth.materials();
    let mut rows = Vec::with_capacity(fractions.len());
    for &p in fractions {
        let mut sads = Vec::with_capacity(seeds.len());
        let mut rmses = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let noisy = inject_label_noise(&clean, p, seed, redraw)?;
            let cfg = RunConfig {
                clustering: Segmentation::External,
                svm_seed: seed,
                ..config.clone()
            };
            let out = run_pipeline(dataset, m, Some(&noisy), &cfg)?;
            let report = match_and_score(&out.unmixed.endmembers, &out.unmixed.abundances, truth)?;
            sads.push(report.avg_sad);
            rmses.push(report.avg_rmse);
        }
        let (avg_sad_mean, avg_sad_std) = mean_std(&sads);
        let (avg_rmse_mean, avg_rmse_std) = mean_std(&rmses);
        log::info!("noise {p}: avg SAD {avg_sad_mean:.4e}, avg RMSE {avg_rmse_mean:.4e}");
        rows.push(SweepRow {
            p,
            avg_sad_mean,
            avg_sad_std,
            avg_rmse_mean,
            avg_rmse_std,
        });
    }
    Ok(rows)
}

/// CSV with header `p,avg_sad_mean,avg_sad_std,avg_rmse_mean,avg_rmse_std`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p,avg_sad_mean,avg_sad_std,avg_rmse_mean,avg_rmse_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.p, r.avg_sad_mean, r.avg_sad_std, r.avg_rmse_mean, r.avg_rmse_std
        ));
    }
    out
}
