//! Convex-geometry kernel: halfspaces, polyhedral cones, Euclidean
//! projection onto polyhedra, signed distance to cones, and projection
//! onto the probability simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Normals shorter than this are rejected.
pub const MIN_NORMAL: f64 = 1e-12;

/// Closed halfspace `{x : <x, normal> <= offset}` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: DVector<f64>,
    offset: f64,
}

impl Halfspace {
    /// Builds the halfspace, rescaling `(normal, offset)` so the normal has
    /// unit length.
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > MIN_NORMAL) || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "halfspace normal has norm {norm}"
            )));
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    /// Halfspace through the origin.
    pub fn through_origin(normal: DVector<f64>) -> Result<Self> {
        Self::new(normal, 0.0)
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed violation `<x, w> - b`; nonpositive inside.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// Euclidean projection of `x` onto the halfspace, in place.
    fn project_in_place(&self, x: &mut DVector<f64>) {
        let excess = self.violation(x);
        if excess > 0.0 {
            x.axpy(-excess, &self.normal, 1.0);
        }
    }

    /// The complementary closed halfspace.
    pub fn flipped(&self) -> Self {
        Self {
            normal: -&self.normal,
            offset: -self.offset,
        }
    }
}

/// Intersection of finitely many halfspaces through the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralCone {
    halfspaces: Vec<Halfspace>,
}

impl PolyhedralCone {
    pub fn new(halfspaces: Vec<Halfspace>) -> Result<Self> {
        let Some(first) = halfspaces.first() else {
            return Err(Error::InvalidArgument("a cone needs at least one halfspace".into()));
        };
        let dim = first.dim();
        for h in &halfspaces {
            if h.offset != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cone halfspaces must pass through the origin (offset {})",
                    h.offset
                )));
            }
            if h.dim() != dim {
                return Err(Error::Shape(format!(
                    "halfspace of dimension {} in a {dim}-dimensional cone",
                    h.dim()
                )));
            }
        }
        Ok(Self { halfspaces })
    }

    /// Cone `{x : <x, w_i> <= 0}` from raw normals.
    pub fn from_normals(normals: impl IntoIterator<Item = DVector<f64>>) -> Result<Self> {
        let halfspaces = normals
            .into_iter()
            .map(Halfspace::through_origin)
            .collect::<Result<Vec<_>>>()?;
        Self::new(halfspaces)
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn dim(&self) -> usize {
        self.halfspaces[0].dim()
    }

    /// `true` iff `<x, w_i> <= tol` for every face.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.violation(x) <= tol)
    }

    /// Largest face value `max_i <x, w_i>`; nonpositive inside the cone.
    pub fn max_face_value(&self, x: &DVector<f64>) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.violation(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Signed Euclidean distance: distance to the cone when outside, minus
    /// the distance to the complement when inside.
    ///
    /// Inside, the complement is a union of open halfspaces, so its
    /// distance is the smallest margin `-<x, w_i>`.
    pub fn signed_distance(&self, x: &DVector<f64>, options: &ProjectionOptions) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let face = self.max_face_value(x);
        if face <= 0.0 {
            return Ok(face);
        }
        let p = project_onto_polyhedron(&self.halfspaces, x, options)?;
        Ok((x - p).norm())
    }
}

fn check_dim(dim: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Shape(format!(
            "point has dimension {}, set has {dim}",
            x.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Convergence threshold on the change of iterate and corrections over
    /// one cycle.
    pub tol: f64,
    /// Maximum number of Dykstra cycles.
    pub max_iter: usize,
    /// Attempt an exact active-set step after each cycle, accepted only if
    /// it satisfies the KKT conditions.
    pub polish: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            polish: true,
        }
    }
}

/// Nearest point to `x` in the intersection of `halfspaces`, by Dykstra's
/// cyclic projection algorithm.
///
/// With `polish` enabled, after each cycle the faces carrying a nonzero
/// Dykstra correction are taken as an active-set guess; the exact
/// projection onto their intersection is returned as soon as it is feasible
/// with nonnegative multipliers.
pub fn project_onto_polyhedron(
    halfspaces: &[Halfspace],
    x: &DVector<f64>,
    options: &ProjectionOptions,
) -> Result<DVector<f64>> {
    let Some(first) = halfspaces.first() else {
        return Ok(x.clone());
    };
    check_dim(first.dim(), x)?;
    if halfspaces.iter().all(|h| h.violation(x) <= 0.0) {
        return Ok(x.clone());
    }

    let k = halfspaces.len();
    let dim = x.len();
    let mut current = x.clone();
    let mut corrections = vec![DVector::<f64>::zeros(dim); k];
    let mut y = DVector::<f64>::zeros(dim);
    let mut change = f64::INFINITY;

    for _cycle in 0..options.max_iter {
        let start = current.clone();
        let mut correction_change = 0.0;
        for (h, corr) in halfspaces.iter().zip(corrections.iter_mut()) {
            y.copy_from(&current);
            y += &*corr;
            current.copy_from(&y);
            h.project_in_place(&mut current);
            let new_corr = &y - &current;
            correction_change += (&new_corr - &*corr).norm_squared();
            *corr = new_corr;
        }
        change = ((&current - &start).norm_squared() + correction_change).sqrt();

        if options.polish {
            let active: Vec<usize> = (0..k).filter(|&i| corrections[i].norm() > 0.0).collect();
            if let Some(p) = active_set_projection(halfspaces, &active, x, options.tol) {
                return Ok(p);
            }
        }
        if change <= options.tol {
            return Ok(current);
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iter,
        residual: change,
    })
}

/// Exact projection onto `{z : <z, w_i> = b_i, i in active}`, returned only
/// if it is feasible for every halfspace (within `tol`) and its Lagrange
/// multipliers are nonnegative, i.e. it is the KKT point of the full
/// problem.
fn active_set_projection(
    halfspaces: &[Halfspace],
    active: &[usize],
    x: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    if active.is_empty() || active.len() > x.len() {
        return None;
    }
    let a = active.len();
    let normals = DMatrix::from_fn(a, x.len(), |r, c| halfspaces[active[r]].normal[c]);
    let gram = &normals * normals.transpose();
    let rhs = DVector::from_fn(a, |r, _| halfspaces[active[r]].violation(x));
    let chol = gram.cholesky()?;
    let multipliers = chol.solve(&rhs);
    if multipliers.iter().any(|&mu| mu < -tol || !mu.is_finite()) {
        return None;
    }
    let p = x - normals.transpose() * multipliers;
    let scale = 1.0 + x.norm();
    if halfspaces.iter().any(|h| h.violation(&p) > tol * scale) {
        return None;
    }
    Some(p)
}

/// Euclidean projection onto `{a : a >= 0, sum(a) = 1}` by sorting and
/// thresholding.
pub fn project_onto_simplex(v: &DVector<f64>) -> DVector<f64> {
    let m = v.len();
    if m == 0 {
        return v.clone();
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Applies [`project_onto_simplex`] to every column.
pub fn project_columns_onto_simplex(values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = values.clone();
    for mut col in out.column_iter_mut() {
        let projected = project_onto_simplex(&col.clone_owned());
        col.copy_from(&projected);
    }
    out
}
