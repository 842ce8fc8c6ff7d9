//! Polyhedral-cone partition of the (reduced) spectral space.
//!
//! One unbiased linear SVM is trained per class pair, giving `m(m-1)/2`
//! hyperplanes through the origin. By default the region of class `c` is
//! the cone on the `c` side of its `m - 1` separators. Alternatively the
//! `m` most populated cells of the full arrangement become the regions,
//! matched to classes by maximum-weight assignment.

pub mod svm;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::max_weight_assignment;
use crate::cluster::subsample;
use crate::dataset::ClassificationMap;
use crate::error::{Error, Result};
use crate::geometry::{Halfspace, PolyhedralCone};

pub use svm::{primal_objective, train_unbiased, SvmOptions, SvmSolution};

/// Decision values within this of zero count as the nonpositive side.
pub const ON_PLANE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// Share of pixels drawn (once, for all pairs) to train the SVMs.
    pub sample_fraction: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            sample_fraction: 0.20,
            seed: 0,
            tol: 1e-6,
            max_epochs: 20_000,
        }
    }
}

/// Hyperplane `<x, w> = 0` separating `classes.0` (on the `<= 0` side) from
/// `classes.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatingHyperplane {
    pub classes: (usize, usize),
    /// Unit normal.
    pub normal: DVector<f64>,
    pub primal_objective: f64,
    pub epochs: usize,
}

impl SeparatingHyperplane {
    pub fn decision(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x)
    }
}

fn class_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect()
}

/// Trains the `m(m-1)/2` pairwise unbiased SVMs on a seeded subsample.
pub fn train_pairwise_svm(
    data: &DMatrix<f64>,
    labels: &ClassificationMap,
    config: &SvmConfig,
) -> Result<Vec<SeparatingHyperplane>> {
    let m = labels.classes;
    if m < 2 {
        return Err(Error::InvalidArgument("pairwise separation needs m >= 2".into()));
    }
    if labels.len() != data.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} pixels",
            labels.len(),
            data.nrows()
        )));
    }
    if !(config.c > 0.0) {
        return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", config.c)));
    }
    if let Some(&c) = labels.empty_classes().first() {
        return Err(Error::EmptyClass(c));
    }

    let sample = subsample(data.nrows(), config.sample_fraction, config.seed)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &k in &sample {
        by_class[labels.labels[k]].push(k);
    }
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            log::warn!("class {class} absent from the SVM subsample; using all its pixels");
            *members = labels.members(class);
        }
    }

    class_pairs(m)
        .into_par_iter()
        .enumerate()
        .map(|(pair_index, (i, j))| {
            let rows: Vec<usize> = by_class[i].iter().chain(&by_class[j]).copied().collect();
            let x = DMatrix::from_fn(rows.len(), data.ncols(), |r, c| data[(rows[r], c)]);
            let y: Vec<f64> = rows
                .iter()
                .map(|&k| if labels.labels[k] == i { -1.0 } else { 1.0 })
                .collect();
            let options = SvmOptions {
                c: config.c,
                tol: config.tol,
                max_epochs: config.max_epochs,
                seed: config.seed.wrapping_add(pair_index as u64 + 1),
            };
            let sol = train_unbiased(&x, &y, &options);
            let norm = sol.weights.norm();
            if !(norm > ON_PLANE) {
                return Err(Error::InseparablePair(i, j));
            }
            let mut normal = sol.weights / norm;
            // class i must sit on the nonpositive side by majority
            let margins = &x * &normal;
            let class_i: Vec<f64> = margins
                .iter()
                .zip(&y)
                .filter(|(_, &yk)| yk < 0.0)
                .map(|(&v, _)| v)
                .collect();
            let nonpositive = class_i.iter().filter(|&&v| v <= ON_PLANE).count();
            if 2 * nonpositive < class_i.len() {
                normal = -normal;
            }
            Ok(SeparatingHyperplane {
                classes: (i, j),
                normal,
                primal_objective: sol.primal_objective,
                epochs: sol.epochs,
            })
        })
        .collect()
}

/// Sign pattern of `x`: `true` where `<x, w> > ON_PLANE`.
pub fn sign_pattern(hyperplanes: &[SeparatingHyperplane], x: &DVector<f64>) -> Vec<bool> {
    hyperplanes.iter().map(|h| h.decision(x) > ON_PLANE).collect()
}

fn cone_for_pattern(hyperplanes: &[SeparatingHyperplane], pattern: &[Option<bool>]) -> Result<PolyhedralCone> {
    let halfspaces = hyperplanes
        .iter()
        .zip(pattern)
        .filter_map(|(h, side)| side.map(|positive| (h, positive)))
        .map(|(h, positive)| {
            let normal = if positive { -&h.normal } else { h.normal.clone() };
            Halfspace::through_origin(normal)
        })
        .collect::<Result<Vec<_>>>()?;
    PolyhedralCone::new(halfspaces)
}

/// How the class regions are carved out of the hyperplanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRule {
    /// The `m` most populated cells of the full arrangement, every region
    /// bounded by all `m(m-1)/2` hyperplanes.
    Arrangement,
    /// Region `c` is the intersection of the `m - 1` halfspaces on the
    /// class-`c` side of the hyperplanes separating `c` from the others.
    #[default]
    ClassCones,
}

impl std::str::FromStr for RegionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "arrangement" => Ok(RegionRule::Arrangement),
            "class_cones" | "class-cones" => Ok(RegionRule::ClassCones),
            other => Err(format!("unknown region rule '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConePartition {
    pub hyperplanes: Vec<SeparatingHyperplane>,
    /// Region of each class, indexed by class.
    pub regions: Vec<PolyhedralCone>,
    /// Side of every hyperplane each class region lies on: `Some(true)` for
    /// the positive side, `None` where the hyperplane does not bound it.
    pub patterns: Vec<Vec<Option<bool>>>,
    /// Pixels in each class region.
    pub populations: Vec<usize>,
    /// Number of populated arrangement cells.
    pub populated_cells: usize,
    /// Class region containing each pixel, `None` for pixels outside every
    /// region.
    pub pixel_regions: Vec<Option<usize>>,
    pub rule: RegionRule,
}

fn matches(pattern: &[Option<bool>], signs: &[bool]) -> bool {
    pattern.iter().zip(signs).all(|(p, s)| p.is_none_or(|p| p == *s))
}

impl ConePartition {
    pub fn classes(&self) -> usize {
        self.regions.len()
    }

    /// Classes whose region contains no pixel.
    pub fn degenerate_regions(&self) -> Vec<usize> {
        (0..self.classes()).filter(|&c| self.populations[c] == 0).collect()
    }

    /// Class region containing `x`, if any.
    pub fn region_of(&self, x: &DVector<f64>) -> Option<usize> {
        let signs = sign_pattern(&self.hyperplanes, x);
        self.patterns.iter().position(|p| matches(p, &signs))
    }
}

/// Builds the class regions from trained hyperplanes under `rule`.
///
/// With [`RegionRule::Arrangement`], pixels are grouped by sign pattern, the
/// `m` most populated cells are kept (ties by lexicographic pattern) and
/// mapped one-to-one onto classes by maximum-weight assignment on the
/// cell/label counts.
pub fn build_partition(
    hyperplanes: Vec<SeparatingHyperplane>,
    data: &DMatrix<f64>,
    labels: &ClassificationMap,
    rule: RegionRule,
) -> Result<ConePartition> {
    let m = labels.classes;
    if m < 2 {
        return Err(Error::InvalidArgument("a partition needs m >= 2".into()));
    }
    if data.nrows() == 0 || labels.len() != data.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} pixels",
            labels.len(),
            data.nrows()
        )));
    }

    let signs: Vec<Vec<bool>> = (0..data.nrows())
        .into_par_iter()
        .map(|k| sign_pattern(&hyperplanes, &data.row(k).transpose()))
        .collect();

    let mut cells: BTreeMap<&[bool], Vec<usize>> = BTreeMap::new();
    for (k, p) in signs.iter().enumerate() {
        cells.entry(p.as_slice()).or_default().push(k);
    }
    let populated_cells = cells.len();

    let class_patterns: Vec<Vec<Option<bool>>> = match rule {
        RegionRule::Arrangement => {
            if populated_cells < m {
                return Err(Error::DegenerateArrangement {
                    cells: populated_cells,
                    classes: m,
                });
            }
            // BTreeMap iterates patterns in lexicographic order; the stable sort keeps it for ties
            let mut ranked: Vec<(&[bool], Vec<usize>)> = cells.into_iter().collect();
            ranked.sort_by_key(|cell| std::cmp::Reverse(cell.1.len()));
            ranked.truncate(m);

            let mut contingency = DMatrix::zeros(m, m);
            for (cell, (_, members)) in ranked.iter().enumerate() {
                for &k in members {
                    contingency[(cell, labels.labels[k])] += 1.0;
                }
            }
            let cell_to_class = max_weight_assignment(&contingency);
            let mut patterns = vec![Vec::new(); m];
            for (cell, (pattern, _)) in ranked.iter().enumerate() {
                patterns[cell_to_class[cell]] = pattern.iter().map(|&s| Some(s)).collect();
            }
            patterns
        }
        RegionRule::ClassCones => (0..m)
            .map(|c| {
                hyperplanes
                    .iter()
                    .map(|h| {
                        if h.classes.0 == c {
                            Some(false)
                        } else if h.classes.1 == c {
                            Some(true)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect(),
    };

    let pixel_regions: Vec<Option<usize>> = signs
        .iter()
        .map(|s| class_patterns.iter().position(|p| matches(p, s)))
        .collect();
    let mut populations = vec![0; m];
    for r in pixel_regions.iter().flatten() {
        populations[*r] += 1;
    }
    for (c, &p) in populations.iter().enumerate() {
        if p == 0 {
            log::warn!("region of class {c} contains no pixel");
        }
    }
    let regions = class_patterns
        .iter()
        .map(|p| cone_for_pattern(&hyperplanes, p))
        .collect::<Result<Vec<_>>>()?;

    Ok(ConePartition {
        hyperplanes,
        regions,
        patterns: class_patterns,
        populations,
        populated_cells,
        pixel_regions,
        rule,
    })
}

/// Trains the pairwise SVMs and builds the partition.
pub fn fit_partition(
    data: &DMatrix<f64>,
    labels: &ClassificationMap,
    config: &SvmConfig,
    rule: RegionRule,
) -> Result<ConePartition> {
    let hyperplanes = train_pairwise_svm(data, labels, config)?;
    build_partition(hyperplanes, data, labels, rule)
}
