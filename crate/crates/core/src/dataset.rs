//! Core data containers shared across the pipeline.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Abundance sum-to-one tolerance applied when ingesting ground truth.
pub const SUM_TO_ONE_TOL: f64 = 1e-6;
/// Lower bound tolerated on abundance entries when ingesting ground truth.
pub const NONNEG_TOL: f64 = 1e-9;

/// An observed spectral cube flattened to an `n x d` matrix (one pixel per
/// row, row-major over the image).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDataset {
    pub data: DMatrix<f64>,
    pub height: usize,
    pub width: usize,
    pub wavelengths: Option<Vec<f64>>,
}

impl SpectralDataset {
    pub fn new(
        data: DMatrix<f64>,
        height: usize,
        width: usize,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (n, d) = data.shape();
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("empty data matrix {n}x{d}")));
        }
        if height * width != n {
            return Err(Error::Shape(format!(
                "height {height} x width {width} != {n} pixels"
            )));
        }
        if let Some(w) = &wavelengths {
            if w.len() != d {
                return Err(Error::Shape(format!(
                    "{} wavelengths for {d} bands",
                    w.len()
                )));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::NonFinite(format!(
                "pixel {}, band {}",
                pos % n,
                pos / n
            )));
        }
        Ok(Self {
            data,
            height,
            width,
            wavelengths,
        })
    }

    /// Wraps a matrix as a single-row image.
    pub fn from_pixels(data: DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        Self::new(data, 1, n, None)
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn bands(&self) -> usize {
        self.data.ncols()
    }

    /// Returns a copy with the pixel matrix replaced, keeping spatial metadata.
    pub fn with_data(&self, data: DMatrix<f64>) -> Self {
        let wavelengths = if data.ncols() == self.bands() {
            self.wavelengths.clone()
        } else {
            None
        };
        Self {
            data,
            height: self.height,
            width: self.width,
            wavelengths,
        }
    }
}

/// Per-pixel class labels in `0..classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationMap {
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl ClassificationMap {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} at pixel {i} is out of range for {classes} classes"
            )));
        }
        Ok(Self { labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Classes with no pixel.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn members(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Per-column argmax of an `m x n` abundance matrix.
pub fn dominant_labels(abundances: &DMatrix<f64>) -> ClassificationMap {
    let labels = abundances
        .column_iter()
        .map(|col| argmax(col.iter().copied()))
        .collect();
    ClassificationMap {
        labels,
        classes: abundances.nrows(),
    }
}

/// Reference endmembers (`d x m`) and abundances (`m x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub endmembers: DMatrix<f64>,
    pub abundances: DMatrix<f64>,
    pub labels: Option<ClassificationMap>,
}

impl GroundTruth {
    pub fn new(
        endmembers: DMatrix<f64>,
        abundances: DMatrix<f64>,
        labels: Option<ClassificationMap>,
    ) -> Result<Self> {
        let gt = Self {
            endmembers,
            abundances,
            labels,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn materials(&self) -> usize {
        self.endmembers.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.endmembers.ncols();
        if self.abundances.nrows() != m {
            return Err(Error::Shape(format!(
                "endmembers have {m} columns but abundances have {} rows",
                self.abundances.nrows()
            )));
        }
        check_simplex_columns(&self.abundances, NONNEG_TOL, SUM_TO_ONE_TOL)?;
        if let Some(labels) = &self.labels {
            if labels.len() != self.abundances.ncols() {
                return Err(Error::Shape(format!(
                    "{} labels for {} abundance columns",
                    labels.len(),
                    self.abundances.ncols()
                )));
            }
            for (j, (&l, col)) in labels
                .labels
                .iter()
                .zip(self.abundances.column_iter())
                .enumerate()
            {
                let max = col.max();
                if l >= m || col[l] < max - NONNEG_TOL {
                    return Err(Error::format(
                        "ground-truth labels",
                        format!("label {l} at pixel {j} is not the dominant abundance"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Labels stored with the ground truth, or the abundance argmax.
    pub fn dominant_labels(&self) -> ClassificationMap {
        self.labels
            .clone()
            .unwrap_or_else(|| dominant_labels(&self.abundances))
    }
}

/// Checks every column is entrywise `>= -nonneg_tol` and sums to one
/// within `sum_tol`.
pub fn check_simplex_columns(a: &DMatrix<f64>, nonneg_tol: f64, sum_tol: f64) -> Result<()> {
    for (j, col) in a.column_iter().enumerate() {
        if let Some(v) = col.iter().find(|v| !v.is_finite()) {
            return Err(Error::SimplexViolation {
                column: j,
                reason: format!("non-finite entry {v}"),
            });
        }
        let min = col.min();
        if min < -nonneg_tol {
            return Err(Error::SimplexViolation {
                column: j,
                reason: format!("negative entry {min}"),
            });
        }
        let sum = col.sum();
        if (sum - 1.0).abs() > sum_tol {
            return Err(Error::SimplexViolation {
                column: j,
                reason: format!("column sums to {sum}"),
            });
        }
    }
    Ok(())
}
