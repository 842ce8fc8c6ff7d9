//! From a cone partition to endmembers and abundances.
//!
//! 1. Signed distance of every (reduced) pixel to every class region.
//! 2. Change of basis onto reference distance vectors, one per class: the
//!    pixel of that class lying deepest inside its own region.
//! 3. Scaling by the saturation `s` and projection onto the probability
//!    simplex, giving the initial abundances.
//! 4. Ridge-regularized pseudo-inverses against the original data give the
//!    endmembers, then the final abundances.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::ClassificationMap;
use crate::error::{Error, Result};
use crate::geometry::{project_columns_onto_simplex, ProjectionOptions};
use crate::partition::ConePartition;

/// Gram matrices above this condition number are treated as ill-conditioned.
pub const DEFAULT_COND_LIMIT: f64 = 1e10;

/// A hyperparameter that is either derived from the data or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Param {
    #[default]
    Auto,
    Fixed(f64),
}

impl Param {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Param::Auto => None,
            Param::Fixed(v) => Some(v),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Auto => f.write_str("auto"),
            Param::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(Param::Auto)
        } else {
            s.parse()
                .map(Param::Fixed)
                .map_err(|_| format!("expected 'auto' or a number, got '{s}'"))
        }
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Param::Auto => serializer.serialize_str("auto"),
            Param::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Param::Fixed(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which pixels may serve as the reference vector of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSelection {
    /// Every pixel carrying the class label.
    #[default]
    SegmentationLabels,
    /// Pixels whose label agrees with the partition region containing them;
    /// falls back to the label alone for classes with no such pixel.
    LabelAndRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixConfig {
    pub saturation: Param,
    pub lambda: Param,
    pub cond_limit: f64,
    /// Use a ridge inverse of the reference basis when it is ill-conditioned
    /// instead of failing.
    pub tikhonov_fallback: bool,
    /// Project the final abundances onto the simplex.
    pub project_abundances: bool,
    pub reference: ReferenceSelection,
}

impl Default for UnmixConfig {
    fn default() -> Self {
        Self {
            saturation: Param::Auto,
            lambda: Param::Auto,
            cond_limit: DEFAULT_COND_LIMIT,
            tikhonov_fallback: false,
            project_abundances: false,
            reference: ReferenceSelection::SegmentationLabels,
        }
    }
}

impl UnmixConfig {
    pub fn validate(&self) -> Result<()> {
        if let Param::Fixed(s) = self.saturation {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument("saturation must be positive".into()));
            }
        }
        if let Param::Fixed(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Signed distances (`m x n`), the reference basis and the transformed
/// distances `B^-1 D`.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub values: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    pub reference_pixels: Vec<usize>,
    pub transformed: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct UnmixResult {
    /// `d x m`
    pub endmembers: DMatrix<f64>,
    /// `m x n`
    pub abundances: DMatrix<f64>,
    /// `m x n`, columns on the probability simplex.
    pub initial_abundances: DMatrix<f64>,
    pub saturation: f64,
    /// Ridge parameter used for the endmember solve.
    pub lambda: f64,
    /// Ridge parameter used for the abundance solve.
    pub lambda_abundances: f64,
    pub distances: DistanceMatrix,
}

/// `D[c][j]` = signed distance of pixel `j` (row of `data`) to region `c`.
pub fn compute_distance_matrix(
    partition: &ConePartition,
    data: &DMatrix<f64>,
    options: &ProjectionOptions,
) -> Result<DMatrix<f64>> {
    let m = partition.classes();
    let n = data.nrows();
    if let Some(r) = partition.regions.first() {
        if r.dim() != data.ncols() {
            return Err(Error::Shape(format!(
                "data has {} columns, regions live in dimension {}",
                data.ncols(),
                r.dim()
            )));
        }
    }
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = data.row(j).transpose();
            partition
                .regions
                .iter()
                .enumerate()
                .map(|(c, region)| {
                    region
                        .signed_distance(&x, options)
                        .map_err(|e| Error::DistanceFailed {
                            pixel: j,
                            region: c,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(m, n, |c, j| columns[j][c]))
}

/// For each class `c`, the column of `D` at the class pixel with the
/// smallest `D[c][j]` (lowest index on ties). Pixels with `eligible[j] ==
/// false` are skipped when a mask is given.
pub fn select_reference_basis(
    distances: &DMatrix<f64>,
    labels: &ClassificationMap,
    eligible: Option<&[bool]>,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let m = distances.nrows();
    if labels.classes != m || labels.len() != distances.ncols() {
        return Err(Error::Shape(format!(
            "distance matrix is {}x{}, labels cover {} pixels over {} classes",
            m,
            distances.ncols(),
            labels.len(),
            labels.classes
        )));
    }
    let mut best: Vec<Option<(usize, f64)>> = vec![None; m];
    for (j, &c) in labels.labels.iter().enumerate() {
        if eligible.is_some_and(|mask| !mask[j]) {
            continue;
        }
        let value = distances[(c, j)];
        if best[c].is_none_or(|(_, b)| value < b) {
            best[c] = Some((j, value));
        }
    }
    let indices = best
        .iter()
        .enumerate()
        .map(|(c, b)| b.map(|(j, _)| j).ok_or(Error::EmptyClass(c)))
        .collect::<Result<Vec<_>>>()?;
    let basis = DMatrix::from_fn(m, m, |r, c| distances[(r, indices[c])]);
    Ok((basis, indices))
}

/// 2-norm condition number from singular values.
pub fn condition_number(matrix: &DMatrix<f64>) -> f64 {
    let sv = matrix.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `D' = B^-1 D` through a pivoted LU solve.
pub fn change_of_basis(
    distances: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    cond_limit: f64,
    tikhonov_fallback: bool,
) -> Result<DMatrix<f64>> {
    let m = basis.nrows();
    if basis.ncols() != m || distances.nrows() != m {
        return Err(Error::Shape(format!(
            "basis is {}x{}, distances have {} rows",
            basis.nrows(),
            basis.ncols(),
            distances.nrows()
        )));
    }
    let cond = condition_number(basis);
    if cond <= cond_limit {
        if let Some(solved) = basis.clone().lu().solve(distances) {
            return Ok(solved);
        }
    }
    if !tikhonov_fallback {
        return Err(Error::IllConditioned {
            cond,
            limit: cond_limit,
        });
    }
    let gram = basis.transpose() * basis;
    let eps = 1e-8 * gram.trace() / m as f64;
    let regularized = &gram + DMatrix::identity(m, m) * eps;
    let rhs = basis.transpose() * distances;
    regularized
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or(Error::Singular("ridge change of basis"))
}

/// `1 / (2 std)` with the population standard deviation over all entries.
pub fn saturation_default(transformed: &DMatrix<f64>) -> Result<f64> {
    let count = transformed.len();
    if count < 2 {
        return Err(Error::Degenerate("degenerate distance spread: fewer than two entries".into()));
    }
    let mean = transformed.iter().sum::<f64>() / count as f64;
    let var = transformed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Degenerate(format!("degenerate distance spread (std = {std})")));
    }
    Ok(1.0 / (2.0 * std))
}

/// Columns of `s * D'` projected onto the probability simplex.
pub fn initial_abundances(transformed: &DMatrix<f64>, saturation: f64) -> Result<DMatrix<f64>> {
    if !(saturation > 0.0) {
        return Err(Error::InvalidArgument("saturation must be positive".into()));
    }
    Ok(project_columns_onto_simplex(&(transformed * saturation)))
}

/// Resolves an automatic ridge parameter for the Gram matrix `G`: zero when
/// `cond(G) <= cond_limit`, else `1e-8 * trace(G) / m`.
pub fn resolve_lambda(lambda: Param, gram: &DMatrix<f64>, cond_limit: f64) -> f64 {
    match lambda {
        Param::Fixed(v) => v,
        Param::Auto => {
            if condition_number(gram) > cond_limit {
                let l = 1e-8 * gram.trace() / gram.nrows() as f64;
                log::warn!("ill-conditioned Gram matrix, using lambda = {l:e}");
                l
            } else {
                0.0
            }
        }
    }
}

fn ridge_solve(gram: &DMatrix<f64>, rhs: &DMatrix<f64>, lambda: f64, what: &'static str) -> Result<DMatrix<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let m = gram.nrows();
    let system = gram + DMatrix::identity(m, m) * lambda;
    let solved = system.cholesky().map(|ch| ch.solve(rhs)).ok_or(Error::Singular(what))?;
    if solved.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(solved)
}

/// `M = Y A^T (A A^T + lambda I)^-1` for `Y` (`d x n`) and `A` (`m x n`).
pub fn recover_endmembers(y: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if y.ncols() != a.ncols() {
        return Err(Error::Shape(format!(
            "Y has {} pixels, A has {}",
            y.ncols(),
            a.ncols()
        )));
    }
    let gram = a * a.transpose();
    let rhs = a * y.transpose();
    Ok(ridge_solve(&gram, &rhs, lambda, "endmember recovery")?.transpose())
}

/// `A = (M^T M + lambda I)^-1 M^T Y` for `Y` (`d x n`) and `M` (`d x m`).
pub fn recover_abundances(y: &DMatrix<f64>, m: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if y.nrows() != m.nrows() {
        return Err(Error::Shape(format!(
            "Y has {} bands, M has {}",
            y.nrows(),
            m.nrows()
        )));
    }
    let gram = m.transpose() * m;
    let rhs = m.transpose() * y;
    ridge_solve(&gram, &rhs, lambda, "abundance recovery")
}

/// Stages two and three.
///
/// `original` is the `n x d` observation matrix used for recovery;
/// `reduced` is the `n x d'` preprocessed data the partition lives in.
pub fn unmix(
    original: &DMatrix<f64>,
    reduced: &DMatrix<f64>,
    partition: &ConePartition,
    labels: &ClassificationMap,
    config: &UnmixConfig,
    projection: &ProjectionOptions,
) -> Result<UnmixResult> {
    config.validate()?;
    if original.nrows() != reduced.nrows() {
        return Err(Error::Shape(format!(
            "{} original pixels vs {} reduced pixels",
            original.nrows(),
            reduced.nrows()
        )));
    }
    let values = compute_distance_matrix(partition, reduced, projection)?;

    let consistent: Vec<bool>;
    let mask = match config.reference {
        ReferenceSelection::SegmentationLabels => None,
        ReferenceSelection::LabelAndRegion => {
            consistent = labels
                .labels
                .iter()
                .zip(&partition.pixel_regions)
                .map(|(&l, r)| *r == Some(l))
                .collect();
            Some(consistent.as_slice())
        }
    };
    let (basis, reference_pixels) = match select_reference_basis(&values, labels, mask) {
        Ok(found) => found,
        Err(Error::EmptyClass(c)) if mask.is_some() => {
            log::warn!("class {c} has no pixel inside its own region; using labels alone");
            select_reference_basis(&values, labels, None)?
        }
        Err(e) => return Err(e),
    };
    let transformed = change_of_basis(&values, &basis, config.cond_limit, config.tikhonov_fallback)?;

    let saturation = match config.saturation {
        Param::Fixed(s) => s,
        Param::Auto => saturation_default(&transformed)?,
    };
    let initial = initial_abundances(&transformed, saturation)?;

    let y = original.transpose();
    let gram_a = &initial * initial.transpose();
    let lambda = resolve_lambda(config.lambda, &gram_a, config.cond_limit);
    let endmembers = recover_endmembers(&y, &initial, lambda)?;
    let gram_m = endmembers.transpose() * &endmembers;
    let lambda_abundances = resolve_lambda(config.lambda, &gram_m, config.cond_limit);
    let mut abundances = recover_abundances(&y, &endmembers, lambda_abundances)?;
    if config.project_abundances {
        abundances = project_columns_onto_simplex(&abundances);
    }

    Ok(UnmixResult {
        endmembers,
        abundances,
        initial_abundances: initial,
        saturation,
        lambda,
        lambda_abundances,
        distances: DistanceMatrix {
            values,
            basis,
            reference_pixels,
            transformed,
        },
    })
}

/// Gradient residual `|(M A - Y) A^T + lambda M|_F` of the endmember objective.
pub fn endmember_gradient_residual(y: &DMatrix<f64>, a: &DMatrix<f64>, m: &DMatrix<f64>, lambda: f64) -> f64 {
    ((m * a - y) * a.transpose() + m * lambda).norm()
}

/// Gradient residual `|M^T (M A - Y) + lambda A|_F` of the abundance objective.
pub fn abundance_gradient_residual(y: &DMatrix<f64>, m: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> f64 {
    (m.transpose() * (m * a - y) + a * lambda).norm()
}
