//! Luminance normalization and origin-preserving dimensionality reduction.
//!
//! The reduction is an uncentered PCA: the basis is spanned by the leading
//! right singular vectors of the raw data matrix. No mean is subtracted, so
//! the origin maps to the origin and cones through the origin stay cones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SpectralDataset;
use crate::error::{Error, Result};

/// Pixels with a norm at or below this are rejected by [`sphere_normalize`].
pub const ZERO_NORM: f64 = 1e-12;

/// Scales every pixel spectrum to unit Euclidean norm.
pub fn sphere_normalize(data: &SpectralDataset) -> Result<SpectralDataset> {
    Ok(data.with_data(sphere_normalize_rows(&data.data)?))
}

pub fn sphere_normalize_rows(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = data.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm <= ZERO_NORM {
            return Err(Error::ZeroSpectrum(i));
        }
        row /= norm;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    /// `d x d'`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Share of the total squared singular values kept by the basis.
    pub captured_energy: f64,
    /// Numerical rank of the data matrix.
    pub rank: usize,
}

impl ProjectionBasis {
    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }

    /// `Y' = Y * components`
    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "data has {} bands, projection expects {}",
                data.ncols(),
                self.input_dim()
            )));
        }
        Ok(data * &self.components)
    }

    /// Maps reduced coordinates back into the original space.
    pub fn lift(&self, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if reduced.ncols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "reduced data has {} columns, projection has {}",
                reduced.ncols(),
                self.output_dim()
            )));
        }
        Ok(reduced * self.components.transpose())
    }
}

/// Fits the top-`reduced_dim` uncentered principal directions.
pub fn fit_projection(data: &DMatrix<f64>, reduced_dim: usize) -> Result<ProjectionBasis> {
    let (n, d) = data.shape();
    if reduced_dim == 0 || reduced_dim > d {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {reduced_dim} must be in 1..={d}"
        )));
    }
    if n < reduced_dim {
        return Err(Error::InvalidArgument(format!(
            "{n} pixels cannot support a {reduced_dim}-dimensional basis"
        )));
    }

    let svd = data.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let sigma_max = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let rank_tol = sigma_max * (n.max(d) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol).count();
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let kept: f64 = order
        .iter()
        .take(reduced_dim)
        .map(|&i| svd.singular_values[i].powi(2))
        .sum();

    let mut columns: Vec<DVector<f64>> = order
        .iter()
        .take(reduced_dim.min(rank))
        .map(|&i| v_t.row(i).transpose())
        .collect();
    if rank < reduced_dim {
        log::warn!("data rank {rank} < {reduced_dim}; padding basis with an orthonormal complement");
        pad_orthonormal(&mut columns, d, reduced_dim);
    }
    let components = DMatrix::from_columns(&columns);
    Ok(ProjectionBasis {
        components,
        captured_energy: if total > 0.0 { kept / total } else { 0.0 },
        rank,
    })
}

/// Extends `columns` with Gram-Schmidt completions drawn from the standard
/// basis until it holds `target` orthonormal vectors.
fn pad_orthonormal(columns: &mut Vec<DVector<f64>>, dim: usize, target: usize) {
    for axis in 0..dim {
        if columns.len() >= target {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[axis] = 1.0;
        for _ in 0..2 {
            for c in columns.iter() {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            columns.push(v / norm);
        }
    }
}

/// Preprocessing switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub sphere_normalize: bool,
    /// Target dimension; `None` keeps all bands.
    pub reduce_to: Option<usize>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sphere_normalize: true,
            reduce_to: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// `n x d'`
    pub reduced: DMatrix<f64>,
    pub basis: Option<ProjectionBasis>,
}

pub fn preprocess(data: &DMatrix<f64>, config: &PreprocessConfig) -> Result<Preprocessed> {
    let normalized = if config.sphere_normalize {
        sphere_normalize_rows(data)?
    } else {
        data.clone()
    };
    match config.reduce_to {
        Some(dim) => {
            let basis = fit_projection(&normalized, dim)?;
            let reduced = basis.apply(&normalized)?;
            Ok(Preprocessed {
                reduced,
                basis: Some(basis),
            })
        }
        None => Ok(Preprocessed {
            reduced: normalized,
            basis: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = Pcg64::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn normalizes_three_four_five() {
        let ds = SpectralDataset::from_pixels(DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.6, 0.8])).unwrap();
        let out = sphere_normalize(&ds).unwrap();
        assert!((out.data[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((out.data[(0, 1)] - 0.8).abs() < 1e-12);
        assert!((out.data[(1, 0)] - 0.6).abs() < 1e-15);
        let again = sphere_normalize(&out).unwrap();
        assert!((again.data.clone() - out.data).abs().max() < 1e-15);
    }

    #[test]
    fn zero_pixel_rejected() {
        let ds = SpectralDataset::from_pixels(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let err = sphere_normalize(&ds).unwrap_err();
        assert_eq!(err.to_string(), "zero spectrum at pixel 1");
    }

    #[test]
    fn exact_subspace_reconstructs() {
        let coeffs = random(40, 2, 1);
        let basis = random(2, 6, 2);
        let data = &coeffs * &basis;
        let proj = fit_projection(&data, 2).unwrap();
        let back = proj.lift(&proj.apply(&data).unwrap()).unwrap();
        assert!((back - &data).abs().max() < 1e-9);
        assert_eq!(proj.rank, 2);
        assert!((proj.captured_energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_dimension_is_isometry() {
        let data = random(30, 4, 3);
        let proj = fit_projection(&data, 4).unwrap();
        let reduced = proj.apply(&data).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let a = (data.row(i) - data.row(j)).norm();
                let b = (reduced.row(i) - reduced.row(j)).norm();
                assert!((a - b).abs() < 1e-9);
            }
        }
        let gram = data.transpose() * &data;
        let gram_r = reduced.transpose() * &reduced;
        assert!((gram.trace() - gram_r.trace()).abs() < 1e-9);
    }

    #[test]
    fn captured_energy_matches_gram_eigenvalues() {
        let data = random(100, 5, 4);
        let gram = data.transpose() * &data;
        let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = eig.iter().sum();
        for k in 1..=5 {
            let expected = eig[..k].iter().sum::<f64>() / total;
            let proj = fit_projection(&data, k).unwrap();
            assert!((proj.captured_energy - expected).abs() < 1e-8, "k={k}");
            let gram_c = proj.components.transpose() * &proj.components;
            assert!((gram_c - DMatrix::identity(k, k)).abs().max() < 1e-8);
        }
    }

    #[test]
    fn origin_and_contraction() {
        let data = random(20, 5, 5);
        let proj = fit_projection(&data, 3).unwrap();
        let zero = DMatrix::zeros(1, 5);
        assert!(proj.apply(&zero).unwrap().iter().all(|&v| v == 0.0));
        let x = random(10, 5, 6);
        let back = proj.lift(&proj.apply(&x).unwrap()).unwrap();
        for i in 0..10 {
            assert!(back.row(i).norm() <= x.row(i).norm() + 1e-12);
        }
        assert!(proj.apply(&DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn coordinate_sub_basis_selects() {
        let mut components = DMatrix::zeros(4, 2);
        components[(1, 0)] = 1.0;
        components[(3, 1)] = 1.0;
        let basis = ProjectionBasis {
            components,
            captured_energy: 1.0,
            rank: 2,
        };
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(basis.apply(&x).unwrap(), DMatrix::from_row_slice(1, 2, &[2.0, 4.0]));
    }

    #[test]
    fn rank_deficient_data_padded() {
        let coeffs = random(10, 1, 7);
        let dir = random(1, 4, 8);
        let data = &coeffs * &dir;
        let proj = fit_projection(&data, 3).unwrap();
        assert_eq!(proj.rank, 1);
        let gram = proj.components.transpose() * &proj.components;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        assert!(fit_projection(&data, 5).is_err());
    }
}
