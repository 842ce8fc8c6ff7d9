//! Dataset and result bundles on disk.
//!
//! An input bundle is a directory holding `header.json` and `data.npy`
//! (`n x d`, pixel-major), plus optional `gt_endmembers.npy` (`d x m`),
//! `gt_abundances.npy` (`m x n`) and `gt_labels.npy` (length `n`).
//!
//! A result bundle holds `endmembers.npy`, `abundances.npy`,
//! `initial_abundances.npy`, `labels.npy`, `config.json`, `timings.json` and,
//! when attached, `metrics.json`.

pub mod npy;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassificationMap, GroundTruth, SpectralDataset};
use crate::error::{Error, Result};

/// Contents of `header.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_materials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub header: Header,
    pub dataset: SpectralDataset,
    pub ground_truth: Option<GroundTruth>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labels_from_i64(raw: Vec<i64>, classes: usize, what: &str) -> Result<ClassificationMap> {
    let labels = raw
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            usize::try_from(l)
                .ok()
                .filter(|&l| l < classes)
                .ok_or_else(|| Error::format(what, format!("label {l} at pixel {i} outside 0..{classes}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ClassificationMap::new(labels, classes)
}

/// Loads an input bundle and validates all shapes against the header.
pub fn load_bundle(dir: &Path) -> Result<LoadedBundle> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found"),
        ));
    }
    let header: Header = read_json(&dir.join("header.json"))?;
    let data = npy::read(&dir.join("data.npy"))?.into_matrix("data.npy")?;
    let n = header.height * header.width;
    if data.shape() != (n, header.bands) {
        return Err(Error::Shape(format!(
            "data.npy is {}x{} but header declares {n}x{}",
            data.nrows(),
            data.ncols(),
            header.bands
        )));
    }
    let dataset = SpectralDataset::new(data, header.height, header.width, header.wavelengths.clone())?;

    let em_path = dir.join("gt_endmembers.npy");
    let ab_path = dir.join("gt_abundances.npy");
    let lb_path = dir.join("gt_labels.npy");
    let ground_truth = match (em_path.exists(), ab_path.exists()) {
        (true, true) => {
            let endmembers = npy::read(&em_path)?.into_matrix("gt_endmembers.npy")?;
            let abundances = npy::read(&ab_path)?.into_matrix("gt_abundances.npy")?;
            let m = endmembers.ncols();
            if endmembers.nrows() != header.bands {
                return Err(Error::Shape(format!(
                    "gt_endmembers.npy has {} bands, header declares {}",
                    endmembers.nrows(),
                    header.bands
                )));
            }
            if abundances.shape() != (m, n) {
                return Err(Error::Shape(format!(
                    "gt_abundances.npy is {}x{}, expected {m}x{n}",
                    abundances.nrows(),
                    abundances.ncols()
                )));
            }
            if let Some(k) = header.num_materials {
                if k != m {
                    return Err(Error::Shape(format!(
                        "header declares {k} materials, ground truth has {m}"
                    )));
                }
            }
            let labels = if lb_path.exists() {
                let raw = npy::read(&lb_path)?.into_labels("gt_labels.npy")?;
                if raw.len() != n {
                    return Err(Error::Shape(format!("gt_labels.npy has {} entries, expected {n}", raw.len())));
                }
                Some(labels_from_i64(raw, m, "gt_labels.npy")?)
            } else {
                None
            };
            Some(GroundTruth::new(endmembers, abundances, labels)?)
        }
        (false, false) => None,
        _ => {
            return Err(Error::format(
                dir.display().to_string(),
                "ground truth needs both gt_endmembers.npy and gt_abundances.npy",
            ))
        }
    };
    Ok(LoadedBundle {
        header,
        dataset,
        ground_truth,
    })
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if occupied && !overwrite {
            return Err(Error::io(
                dir,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "directory exists and is not empty (overwrite disabled)",
                ),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes an input bundle (used by the synthetic generator).
pub fn save_input_bundle(
    dir: &Path,
    dataset: &SpectralDataset,
    ground_truth: Option<&GroundTruth>,
    overwrite: bool,
) -> Result<()> {
    prepare_dir(dir, overwrite)?;
    let header = Header {
        height: dataset.height,
        width: dataset.width,
        bands: dataset.bands(),
        num_materials: ground_truth.map(GroundTruth::materials),
        wavelengths: dataset.wavelengths.clone(),
    };
    write_json(&dir.join("header.json"), &header)?;
    npy::write_matrix(&dir.join("data.npy"), &dataset.data)?;
    if let Some(gt) = ground_truth {
        npy::write_matrix(&dir.join("gt_endmembers.npy"), &gt.endmembers)?;
        npy::write_matrix(&dir.join("gt_abundances.npy"), &gt.abundances)?;
        if let Some(labels) = &gt.labels {
            npy::write_labels(&dir.join("gt_labels.npy"), &labels.labels)?;
        }
    }
    Ok(())
}

/// Output of an unmixing run as persisted on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    /// `d x m`
    pub endmembers: DMatrix<f64>,
    /// `m x n`
    pub abundances: DMatrix<f64>,
    /// `m x n`, simplex-projected distance coordinates.
    pub initial_abundances: Option<DMatrix<f64>>,
    pub labels: Vec<usize>,
    pub config: serde_json::Value,
    pub timings: BTreeMap<String, f64>,
    pub metrics: Option<serde_json::Value>,
}

impl ResultBundle {
    pub fn materials(&self) -> usize {
        self.endmembers.ncols()
    }

    fn validate(&self) -> Result<()> {
        let m = self.endmembers.ncols();
        if m == 0 || self.abundances.ncols() == 0 {
            return Err(Error::Degenerate("result has no materials or pixels".into()));
        }
        if self.abundances.nrows() != m {
            return Err(Error::Shape(format!(
                "{m} endmembers but {} abundance rows",
                self.abundances.nrows()
            )));
        }
        if self.labels.len() != self.abundances.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} pixels",
                self.labels.len(),
                self.abundances.ncols()
            )));
        }
        if let Some(init) = &self.initial_abundances {
            if init.shape() != self.abundances.shape() {
                return Err(Error::Shape("initial abundances shape differs from abundances".into()));
            }
        }
        Ok(())
    }
}

pub fn save_bundle(result: &ResultBundle, dir: &Path, overwrite: bool) -> Result<()> {
    result.validate()?;
    prepare_dir(dir, overwrite)?;
    npy::write_matrix(&dir.join("endmembers.npy"), &result.endmembers)?;
    npy::write_matrix(&dir.join("abundances.npy"), &result.abundances)?;
    if let Some(init) = &result.initial_abundances {
        npy::write_matrix(&dir.join("initial_abundances.npy"), init)?;
    }
    npy::write_labels(&dir.join("labels.npy"), &result.labels)?;
    write_json(&dir.join("config.json"), &result.config)?;
    write_json(&dir.join("timings.json"), &result.timings)?;
    if let Some(metrics) = &result.metrics {
        write_json(&dir.join("metrics.json"), metrics)?;
    }
    Ok(())
}

pub fn load_result(dir: &Path) -> Result<ResultBundle> {
    let endmembers = npy::read(&dir.join("endmembers.npy"))?.into_matrix("endmembers.npy")?;
    let abundances = npy::read(&dir.join("abundances.npy"))?.into_matrix("abundances.npy")?;
    let init_path = dir.join("initial_abundances.npy");
    let initial_abundances = if init_path.exists() {
        Some(npy::read(&init_path)?.into_matrix("initial_abundances.npy")?)
    } else {
        None
    };
    let m = endmembers.ncols();
    let labels = labels_from_i64(
        npy::read(&dir.join("labels.npy"))?.into_labels("labels.npy")?,
        m.max(1),
        "labels.npy",
    )?
    .labels;
    let config = read_json(&dir.join("config.json"))?;
    let timings_path = dir.join("timings.json");
    let timings = if timings_path.exists() {
        read_json(&timings_path)?
    } else {
        BTreeMap::new()
    };
    let metrics_path = dir.join("metrics.json");
    let metrics = if metrics_path.exists() {
        Some(read_json(&metrics_path)?)
    } else {
        None
    };
    let result = ResultBundle {
        endmembers,
        abundances,
        initial_abundances,
        labels,
        config,
        timings,
        metrics,
    };
    result.validate()?;
    Ok(result)
}

/// Parsed label grid from a CSV file.
#[derive(Debug, Clone)]
pub struct LabelGrid {
    pub map: ClassificationMap,
    pub height: usize,
    pub width: usize,
}

/// Parses an `h x w` grid of integer labels in `0..classes` (row-major).
/// Classes without any pixel are accepted and logged as warnings.
pub fn parse_labels_csv(text: &str, classes: usize) -> Result<LabelGrid> {
    let mut labels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let cell = cell.trim();
            let value: i64 = cell
                .parse()
                .map_err(|_| Error::format("labels csv", format!("row {row}: '{cell}' is not an integer")))?;
            if value < 0 || value as usize >= classes {
                return Err(Error::format(
                    "labels csv",
                    format!("row {row}: label {value} outside 0..{classes}"),
                ));
            }
            labels.push(value as usize);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::format(
                    "labels csv",
                    format!("ragged row {row}: {count} columns, expected {w}"),
                ))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::format("labels csv", "no rows"))?;
    let map = ClassificationMap::new(labels, classes)?;
    for c in map.empty_classes() {
        log::warn!("empty class {c} in label map");
    }
    Ok(LabelGrid { map, height, width })
}

pub fn load_labels_csv(path: &Path, classes: usize) -> Result<LabelGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_csv(&text, classes)
}

/// Loads labels from a `.npy` vector or a `.csv` grid.
pub fn load_labels(path: &Path, classes: usize) -> Result<ClassificationMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("npy") => {
            let raw = npy::read(path)?.into_labels(&path.display().to_string())?;
            labels_from_i64(raw, classes, &path.display().to_string())
        }
        _ => Ok(load_labels_csv(path, classes)?.map),
    }
}

pub fn save_labels_csv(path: &Path, map: &ClassificationMap, width: usize) -> Result<()> {
    let mut text = String::new();
    for row in map.labels.chunks(width.max(1)) {
        let cells: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
