//! Brute-force oracles shared by the integration tests. None of them call
//! into the solvers they check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn gaussian(dim: usize, r: &mut Pcg64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal))
}

pub fn unit(dim: usize, r: &mut Pcg64) -> DVector<f64> {
    gaussian(dim, r).normalize()
}

/// Unit normals of a random cone `{x : <x, w_i> <= 0}` with nonempty
/// interior: every normal makes an obtuse angle with a hidden direction.
pub fn random_cone_normals(dim: usize, count: usize, r: &mut Pcg64) -> Vec<DVector<f64>> {
    let inside = unit(dim, r);
    let mut normals = Vec::with_capacity(count);
    while normals.len() < count {
        let w = unit(dim, r);
        if w.dot(&inside) < -0.2 {
            normals.push(w);
        }
    }
    normals
}

fn max_face(normals: &[DVector<f64>], y: &[f64]) -> f64 {
    normals
        .iter()
        .map(|w| w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn for_each_grid_point(center: &[f64], half: f64, points: usize, mut visit: impl FnMut(&[f64])) {
    let dim = center.len();
    let step = 2.0 * half / (points - 1) as f64;
    let mut idx = vec![0usize; dim];
    let mut y = vec![0.0; dim];
    loop {
        for k in 0..dim {
            y[k] = center[k] - half + step * idx[k] as f64;
        }
        visit(&y);
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            return;
        }
    }
}

/// Maximizes `f` over the box `[lo, hi]^dim`: a coarse grid, then repeated
/// re-gridding of a shrinking box around the best point. Coordinates are
/// clamped to the box so its faces stay reachable.
fn grid_maximize(dim: usize, lo: f64, hi: f64, coarse: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mid = vec![0.5 * (lo + hi); dim];
    let mut best = f64::NEG_INFINITY;
    let mut center = mid.clone();
    for_each_grid_point(&mid, 0.5 * (hi - lo), coarse, |y| {
        let v = f(y);
        if v > best {
            best = v;
            center = y.to_vec();
        }
    });
    let mut half = (hi - lo) / (coarse - 1) as f64;
    for _ in 0..80 {
        let mut next = center.clone();
        for_each_grid_point(&center, half, 11, |y| {
            let y: Vec<f64> = y.iter().map(|v| v.clamp(lo, hi)).collect();
            let v = f(&y);
            if v > best {
                best = v;
                next = y;
            }
        });
        center = next;
        half *= 0.6;
    }
    best
}

/// Distance from outside: by Moreau decomposition, the largest `<x, v>`
/// over unit `v` in the polar cone, i.e. over normalized nonnegative
/// combinations of the normals.
fn brute_outside(normals: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let dim = x.len();
    let value = |lambda: &[f64]| -> f64 {
        let mut v = DVector::zeros(dim);
        for (w, l) in normals.iter().zip(lambda) {
            v.axpy(*l, w, 1.0);
        }
        let n = v.norm();
        if n < 1e-300 {
            0.0
        } else {
            x.dot(&v) / n
        }
    };
    let coarse = [0, 201, 61, 21, 13][normals.len().min(4)];
    grid_maximize(normals.len(), 0.0, 1.0, coarse, value).max(0.0)
}

/// Distance along `u` from `x` to the first point leaving the cone, capped
/// at `cap`; found by bisection on membership.
fn exit_distance(normals: &[DVector<f64>], x: &DVector<f64>, u: &DVector<f64>, cap: f64) -> f64 {
    let inside = |t: f64| max_face(normals, (x + u * t).as_slice()) < 0.0;
    if inside(cap) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Distance from inside: the shortest exit distance over all directions,
/// searched over polar angles.
fn brute_inside(normals: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let cap = 1.0001 * x.norm();
    let direction = |angles: &[f64]| -> DVector<f64> {
        if x.len() == 2 {
            DVector::from_vec(vec![angles[0].cos(), angles[0].sin()])
        } else {
            let (t, p) = (angles[0], angles[1]);
            DVector::from_vec(vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
        }
    };
    let angles = x.len() - 1;
    let coarse = if angles == 1 { 721 } else { 121 };
    -grid_maximize(angles, 0.0, std::f64::consts::TAU, coarse, |a| {
        -exit_distance(normals, x, &direction(a), cap)
    })
}

/// Signed distance to `{x : <x, w_i> <= 0}` (unit `w_i`, `x` in R^2 or
/// R^3) by brute-force search.
pub fn brute_signed_distance(normals: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    if max_face(normals, x.as_slice()) <= 0.0 {
        -brute_inside(normals, x)
    } else {
        brute_outside(normals, x)
    }
}

/// Smallest distance from `v` to the points of the probability simplex in
/// R^3 whose coordinates are multiples of `1 / steps`.
pub fn simplex_grid_distance(v: &[f64; 3], steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let a0 = i as f64 * h;
        let d0 = (v[0] - a0).powi(2);
        for j in 0..=(steps - i) {
            let a1 = j as f64 * h;
            let a2 = (steps - i - j) as f64 * h;
            let d = d0 + (v[1] - a1).powi(2) + (v[2] - a2).powi(2);
            if d < best {
                best = d;
            }
        }
    }
    best.sqrt()
}

/// `1/2 |w|^2 + C sum max(0, 1 - y <x, w>)` for rows of `x`.
pub fn svm_objective(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, c: f64) -> f64 {
    let mut hinge = 0.0;
    for k in 0..x.nrows() {
        let margin: f64 = (0..x.ncols()).map(|j| x[(k, j)] * w[j]).sum();
        hinge += (1.0 - y[k] * margin).max(0.0);
    }
    0.5 * w.norm_squared() + c * hinge
}

/// Best objective seen by full-batch subgradient descent with step `1/t`
/// (the objective is 1-strongly convex), iterates kept in a ball that
/// contains the optimum.
pub fn svm_subgradient_oracle(x: &DMatrix<f64>, y: &[f64], c: f64, steps: usize) -> f64 {
    let (n, d) = x.shape();
    // f(0) = C n bounds 1/2 |w*|^2
    let ball = (2.0 * c * n as f64).sqrt();
    let mut w = DVector::zeros(d);
    let mut best = svm_objective(x, y, &w, c);
    let mut g = DVector::zeros(d);
    for t in 1..=steps {
        g.copy_from(&w);
        for k in 0..n {
            let margin: f64 = (0..d).map(|j| x[(k, j)] * w[j]).sum();
            if y[k] * margin < 1.0 {
                for j in 0..d {
                    g[j] -= c * y[k] * x[(k, j)];
                }
            }
        }
        w.axpy(-1.0 / t as f64, &g, 1.0);
        let norm = w.norm();
        if norm > ball {
            w *= ball / norm;
        }
        let f = svm_objective(x, y, &w, c);
        if f < best {
            best = f;
        }
    }
    best
}

/// Random separable two-class problem through the origin with a margin gap.
pub fn separable_problem(n: usize, dim: usize, r: &mut Pcg64) -> (DMatrix<f64>, Vec<f64>) {
    let w_true = unit(dim, r);
    let mut rows = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let x = gaussian(dim, r);
        let s = x.dot(&w_true);
        if s.abs() < 0.2 {
            continue;
        }
        rows.extend(x.iter());
        labels.push(s.signum());
    }
    (DMatrix::from_row_slice(n, dim, &rows), labels)
}

/// Frobenius norm of `(M A - Y) A^T + lambda M`.
pub fn endmember_gradient(y: &DMatrix<f64>, a: &DMatrix<f64>, m: &DMatrix<f64>, lambda: f64) -> f64 {
    let resid = m * a - y;
    (resid * a.transpose() + m * lambda).norm()
}

/// Frobenius norm of `M^T (M A - Y) + lambda A`.
pub fn abundance_gradient(y: &DMatrix<f64>, m: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> f64 {
    (m.transpose() * (m * a - y) + a * lambda).norm()
}

/// Fraction of pixels with true abundance margin `>= margin` whose
/// estimated dominant label, mapped through `assignment` (estimate to
/// truth), equals the true dominant label.
pub fn dominant_agreement(est: &DMatrix<f64>, truth: &DMatrix<f64>, assignment: &[usize], margin: f64) -> (f64, usize) {
    let argmax = |col: nalgebra::DVectorView<f64>| -> usize {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i] > col[best] {
                best = i;
            }
        }
        best
    };
    let mut considered = 0;
    let mut agree = 0;
    for j in 0..truth.ncols() {
        let col = truth.column(j);
        let mut sorted: Vec<f64> = col.iter().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted[0] - sorted[1] < margin {
            continue;
        }
        considered += 1;
        let t = argmax(truth.column(j));
        let e = argmax(est.column(j));
        if assignment[e] == t {
            agree += 1;
        }
    }
    (agree as f64 / considered.max(1) as f64, considered)
}
