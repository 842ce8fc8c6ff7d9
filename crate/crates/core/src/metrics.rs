//! Evaluation against ground truth: spectral angle distance, abundance
//! RMSE, permutation-matched scoring, segmentation accuracy and the label
//! noise protocol.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assign::{max_weight_assignment, min_cost_assignment};
use crate::cluster::rng;
use crate::dataset::{ClassificationMap, GroundTruth};
use crate::error::{Error, Result};

/// Angle in radians between two spectra.
pub fn sad(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("spectra of length {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu <= 1e-12 || nv <= 1e-12 {
        return Err(Error::InvalidArgument("SAD of a zero vector".into()));
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialScore {
    pub sad: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Indexed by ground-truth material.
    pub per_material: Vec<MaterialScore>,
    pub avg_sad: f64,
    pub avg_rmse: f64,
    /// `assignment[estimated] = true material`.
    pub assignment: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvaluationReport {
    pub fn per_material_sad(&self) -> Vec<f64> {
        self.per_material.iter().map(|s| s.sad).collect()
    }

    pub fn per_material_rmse(&self) -> Vec<f64> {
        self.per_material.iter().map(|s| s.rmse).collect()
    }
}

/// Matches estimated to true endmembers by minimum total SAD, then scores
/// the abundance rows under the same permutation.
pub fn match_and_score(
    endmembers: &DMatrix<f64>,
    abundances: &DMatrix<f64>,
    truth: &GroundTruth,
) -> Result<EvaluationReport> {
    let m = truth.materials();
    if endmembers.ncols() != m || abundances.nrows() != m {
        return Err(Error::Shape(format!(
            "estimate has {} endmembers / {} abundance rows, ground truth has {m} materials",
            endmembers.ncols(),
            abundances.nrows()
        )));
    }
    if endmembers.nrows() != truth.endmembers.nrows() || abundances.ncols() != truth.abundances.ncols() {
        return Err(Error::Shape(format!(
            "estimate is {} bands x {} pixels, ground truth {} x {}",
            endmembers.nrows(),
            abundances.ncols(),
            truth.endmembers.nrows(),
            truth.abundances.ncols()
        )));
    }
    let mut cost = DMatrix::zeros(m, m);
    for e in 0..m {
        let est = endmembers.column(e).into_owned();
        for t in 0..m {
            cost[(e, t)] = sad(&est, &truth.endmembers.column(t).into_owned())?;
        }
    }
    let assignment = min_cost_assignment(&cost);
    let mut per_material = vec![MaterialScore { sad: 0.0, rmse: 0.0 }; m];
    for (e, &t) in assignment.iter().enumerate() {
        let est_row: Vec<f64> = abundances.row(e).iter().copied().collect();
        let true_row: Vec<f64> = truth.abundances.row(t).iter().copied().collect();
        per_material[t] = MaterialScore {
            sad: cost[(e, t)],
            rmse: rmse(&est_row, &true_row)?,
        };
    }
    let avg_sad = per_material.iter().map(|s| s.sad).sum::<f64>() / m as f64;
    let avg_rmse = per_material.iter().map(|s| s.rmse).sum::<f64>() / m as f64;
    Ok(EvaluationReport {
        per_material,
        avg_sad,
        avg_rmse,
        assignment,
        accuracy: None,
        config_hash: None,
    })
}

/// Best agreement fraction over label permutations.
pub fn segmentation_accuracy(pred: &ClassificationMap, truth: &ClassificationMap) -> Result<f64> {
    if pred.classes != truth.classes {
        return Err(Error::Shape(format!(
            "{} predicted classes vs {} true classes",
            pred.classes, truth.classes
        )));
    }
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} vs {} labels", pred.len(), truth.len())));
    }
    let m = pred.classes;
    let mut confusion = DMatrix::zeros(m, m);
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        confusion[(p, t)] += 1.0;
    }
    let assignment = max_weight_assignment(&confusion);
    let agree: f64 = assignment.iter().enumerate().map(|(p, &t)| confusion[(p, t)]).sum();
    Ok(agree / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRedraw {
    /// Redraw uniformly from all classes, the original included.
    #[default]
    AnyClass,
    /// Redraw uniformly from the other classes.
    OtherClass,
}

/// Redraws the labels of `floor(p n)` distinct, uniformly chosen pixels.
pub fn inject_label_noise(
    labels: &ClassificationMap,
    fraction: f64,
    seed: u64,
    redraw: NoiseRedraw,
) -> Result<ClassificationMap> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction {fraction} outside [0, 1]"
        )));
    }
    let n = labels.len();
    let m = labels.classes;
    let count = ((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut out = labels.clone();
    if count == 0 || m <= 1 {
        return Ok(out);
    }
    let mut rng = rng(seed);
    let chosen = index::sample(&mut rng, n, count).into_vec();
    for k in chosen {
        out.labels[k] = match redraw {
            NoiseRedraw::AnyClass => rng.random_range(0..m),
            NoiseRedraw::OtherClass => {
                let draw = rng.random_range(0..m - 1);
                if draw >= labels.labels[k] {
                    draw + 1
                } else {
                    draw
                }
            }
        };
    }
    Ok(out)
}

/// Hex SHA-256 of a JSON value's compact serialization.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
