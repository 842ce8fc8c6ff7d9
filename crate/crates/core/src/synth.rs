//! Synthetic linear-mixing data and a Monte-Carlo check of the
//! dominant-material cone structure.
//!
//! Under `Y = MA + E` with linearly independent endmembers, every point `x`
//! has unique coefficients `l = (M^T M)^-1 M^T x`. The region where
//! coefficient `c` is largest is the polyhedral cone
//! `{x : <x, p_j - p_c> <= 0 for all j}` (rows `p_i` of the pseudo-inverse),
//! so the regions are convex, closed under positive scaling, all contain
//! the origin, and tile space up to ties.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::rng;
use crate::dataset::{dominant_labels, GroundTruth, SpectralDataset};
use crate::error::{Error, Result};
use crate::geometry::PolyhedralCone;

/// Coefficient gaps below this are ties and are not judged.
pub const TIE_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub bands: usize,
    pub materials: usize,
    pub pixels: usize,
    pub noise_sigma: f64,
    pub dirichlet_alpha: f64,
    pub seed: u64,
    /// Image height; defaults to a square image when `pixels` is a perfect
    /// square, else a single row.
    #[serde(default)]
    pub height: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            bands: 16,
            materials: 3,
            pixels: 2500,
            noise_sigma: 0.0,
            dirichlet_alpha: 0.5,
            seed: 0,
            height: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.materials < 2 || self.bands < self.materials || self.pixels < self.materials {
            return Err(Error::InvalidArgument(format!(
                "synthetic data needs d >= m >= 2 and n >= m (d = {}, m = {}, n = {})",
                self.bands, self.materials, self.pixels
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.dirichlet_alpha > 0.0) {
            return Err(Error::InvalidArgument(
                "noise sigma must be >= 0 and the Dirichlet concentration > 0".into(),
            ));
        }
        Ok(())
    }

    fn image_shape(&self) -> Result<(usize, usize)> {
        let n = self.pixels;
        match self.height {
            Some(h) if h > 0 && n.is_multiple_of(h) => Ok((h, n / h)),
            Some(h) => Err(Error::InvalidArgument(format!("height {h} does not divide {n} pixels"))),
            None => {
                let side = (n as f64).sqrt().round() as usize;
                Ok(if side * side == n { (side, side) } else { (1, n) })
            }
        }
    }
}

/// Endmembers with entries uniform in `[0.1, 1.0)`, redrawn until the
/// smallest singular value exceeds 5% of the largest.
pub fn sample_endmembers(bands: usize, materials: usize, rng: &mut Pcg64) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(bands, materials, |_, _| rng.random_range(0.1..1.0));
        let sv = m.singular_values();
        if sv.min() > 0.05 * sv.max() {
            return m;
        }
    }
}

/// One symmetric Dirichlet draw, computed in log space so that small
/// concentrations do not underflow.
pub fn sample_dirichlet(alpha: f64, dim: usize, rng: &mut Pcg64) -> DVector<f64> {
    let logs: Vec<f64> = if alpha < 1.0 {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let boosted = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
        (0..dim)
            .map(|_| {
                let g: f64 = boosted.sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / alpha
            })
            .collect()
    } else {
        let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
        (0..dim).map(|_| gamma.sample(rng).ln()).collect()
    };
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    DVector::from_iterator(dim, weights.into_iter().map(|w| w / total))
}

/// Draws `(Y, M, A, labels)` with `Y = MA + E`.
pub fn generate(config: &SynthConfig) -> Result<(SpectralDataset, GroundTruth)> {
    config.validate()?;
    let (height, width) = config.image_shape()?;
    let (d, m, n) = (config.bands, config.materials, config.pixels);
    let mut rng = rng(config.seed);
    let endmembers = sample_endmembers(d, m, &mut rng);
    let mut abundances = DMatrix::zeros(m, n);
    for j in 0..n {
        abundances.set_column(j, &sample_dirichlet(config.dirichlet_alpha, m, &mut rng));
    }
    let mut y = &endmembers * &abundances;
    if config.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let labels = dominant_labels(&abundances);
    let dataset = SpectralDataset::new(y.transpose(), height, width, None)?;
    let truth = GroundTruth::new(endmembers, abundances, Some(labels))?;
    Ok((dataset, truth))
}

/// Exact linear coefficients of points over linearly independent endmembers.
#[derive(Debug, Clone)]
pub struct CoefficientMap {
    /// `m x d` pseudo-inverse `(M^T M)^-1 M^T`.
    pseudo_inverse: DMatrix<f64>,
}

impl CoefficientMap {
    pub fn new(endmembers: &DMatrix<f64>) -> Result<Self> {
        let gram = endmembers.transpose() * endmembers;
        let chol = gram
            .cholesky()
            .ok_or(Error::Singular("endmember Gram matrix"))?;
        Ok(Self {
            pseudo_inverse: chol.solve(&endmembers.transpose()),
        })
    }

    pub fn coefficients(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.pseudo_inverse * x
    }

    /// Dominant class and its lead over the runner-up.
    pub fn dominant(&self, x: &DVector<f64>) -> (usize, f64) {
        let coeffs = self.coefficients(x);
        let best = crate::dataset::argmax(coeffs.iter().copied());
        let runner_up = coeffs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        (best, coeffs[best] - runner_up)
    }

    /// Region of class `c` as a cone: `<x, p_j - p_c> <= 0` for `j != c`.
    pub fn region_cone(&self, class: usize) -> Result<PolyhedralCone> {
        let m = self.pseudo_inverse.nrows();
        let pc = self.pseudo_inverse.row(class);
        PolyhedralCone::from_normals(
            (0..m)
                .filter(|&j| j != class)
                .map(|j| (self.pseudo_inverse.row(j) - pc).transpose()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Convexity,
    Homogeneity,
    ConeMembership,
    Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub kind: CheckKind,
    pub expected_class: usize,
    pub found_class: usize,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub trials: usize,
    pub convexity_checks: usize,
    pub homogeneity_checks: usize,
    pub membership_checks: usize,
    /// Checks skipped because the judged point sat inside the tie band.
    pub ties_skipped: usize,
    pub counterexamples: usize,
    /// Up to ten witnesses.
    pub witnesses: Vec<Counterexample>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.counterexamples == 0
    }

    pub fn merge(&mut self, other: &TheoremReport) {
        self.trials += other.trials;
        self.convexity_checks += other.convexity_checks;
        self.homogeneity_checks += other.homogeneity_checks;
        self.membership_checks += other.membership_checks;
        self.ties_skipped += other.ties_skipped;
        self.counterexamples += other.counterexamples;
        for w in &other.witnesses {
            if self.witnesses.len() < 10 {
                self.witnesses.push(w.clone());
            }
        }
    }

    fn fail(&mut self, kind: CheckKind, expected: usize, found: usize, point: &DVector<f64>) {
        self.counterexamples += 1;
        if self.witnesses.len() < 10 {
            self.witnesses.push(Counterexample {
                kind,
                expected_class: expected,
                found_class: found,
                point: point.iter().copied().collect(),
            });
        }
    }
}

fn gaussian_vector(dim: usize, rng: &mut Pcg64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A random point `M l + r` (with `r` orthogonal to the endmember span)
/// whose largest coefficient sits at `class`.
fn point_in_region(
    endmembers: &DMatrix<f64>,
    map: &CoefficientMap,
    class: usize,
    rng: &mut Pcg64,
) -> DVector<f64> {
    let (d, m) = endmembers.shape();
    let mut coeffs = gaussian_vector(m, rng);
    let top = crate::dataset::argmax(coeffs.iter().copied());
    coeffs.swap_rows(top, class);
    let raw = gaussian_vector(d, rng);
    let residual = &raw - endmembers * map.coefficients(&raw);
    endmembers * coeffs + residual
}

/// Monte-Carlo certificate of convexity, positive homogeneity, cone
/// membership and the origin property for the dominant-material regions
/// of `truth.endmembers`.
pub fn verify_theorem(endmembers: &DMatrix<f64>, trials: usize, seed: u64) -> Result<TheoremReport> {
    let (d, m) = endmembers.shape();
    if m < 2 || d < m {
        return Err(Error::InvalidArgument(format!(
            "need d >= m >= 2 endmembers, got {d} x {m}"
        )));
    }
    let map = CoefficientMap::new(endmembers)?;
    let cones = (0..m).map(|c| map.region_cone(c)).collect::<Result<Vec<_>>>()?;
    let mut rng = rng(seed);
    let mut report = TheoremReport::default();

    // the origin has all-zero coefficients, hence lies in every region
    let origin = DVector::zeros(d);
    if map.coefficients(&origin).iter().any(|&v| v != 0.0) {
        report.fail(CheckKind::Origin, 0, 0, &origin);
    }
    for (c, cone) in cones.iter().enumerate() {
        if !cone.contains(&origin, 0.0) {
            report.fail(CheckKind::Origin, c, c, &origin);
        }
    }

    for _ in 0..trials {
        report.trials += 1;
        let class = rng.random_range(0..m);
        let x = point_in_region(endmembers, &map, class, &mut rng);
        let x2 = point_in_region(endmembers, &map, class, &mut rng);
        let (cx, gap_x) = map.dominant(&x);
        let (cx2, gap_x2) = map.dominant(&x2);
        if gap_x < TIE_BAND || gap_x2 < TIE_BAND {
            report.ties_skipped += 1;
            continue;
        }
        if cx != class || cx2 != class {
            report.fail(CheckKind::Convexity, class, if cx != class { cx } else { cx2 }, &x);
            continue;
        }

        // convex combination stays in the region
        let rho: f64 = rng.random_range(0.0..1.0);
        let z = &x * rho + &x2 * (1.0 - rho);
        let (cz, gap_z) = map.dominant(&z);
        if gap_z < TIE_BAND {
            report.ties_skipped += 1;
        } else {
            report.convexity_checks += 1;
            if cz != class {
                report.fail(CheckKind::Convexity, class, cz, &z);
            }
        }

        // positive scaling stays in the region
        for t in [7.3, rng.random_range(1e-3..1e3)] {
            let scaled = &x * t;
            let (cs, gap_s) = map.dominant(&scaled);
            if gap_s < TIE_BAND {
                report.ties_skipped += 1;
                continue;
            }
            report.homogeneity_checks += 1;
            if cs != class {
                report.fail(CheckKind::Homogeneity, class, cs, &scaled);
            }
        }

        // argmax region agrees with the explicit cone, for an arbitrary point
        let free = gaussian_vector(d, &mut rng);
        let (cf, gap_f) = map.dominant(&free);
        if gap_f < TIE_BAND {
            report.ties_skipped += 1;
        } else {
            report.membership_checks += 1;
            let inside: Vec<usize> = (0..m).filter(|&c| cones[c].contains(&free, 0.0)).collect();
            if inside != [cf] {
                let found = inside.first().copied().unwrap_or(usize::MAX);
                report.fail(CheckKind::ConeMembership, cf, found, &free);
            }
        }
    }
    Ok(report)
}

/// Theorem check on one random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub bands: usize,
    pub materials: usize,
    pub report: TheoremReport,
}

/// Runs [`verify_theorem`] on `instances` random endmember matrices with
/// `m` in `2..=max_materials` and `d` in `m..=max_bands`.
pub fn theorem_suite(
    instances: usize,
    trials: usize,
    seed: u64,
    max_materials: usize,
    max_bands: usize,
) -> Result<Vec<InstanceReport>> {
    if max_materials < 2 || max_bands < max_materials {
        return Err(Error::InvalidArgument(format!(
            "need max_bands >= max_materials >= 2, got {max_bands} and {max_materials}"
        )));
    }
    (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(seed.wrapping_add(i));
            let materials = r.random_range(2..=max_materials);
            let bands = r.random_range(materials..=max_bands);
            let endmembers = sample_endmembers(bands, materials, &mut r);
            let report = verify_theorem(&endmembers, trials, r.random())?;
            Ok(InstanceReport {
                bands,
                materials,
                report,
            })
        })
        .collect()
}
