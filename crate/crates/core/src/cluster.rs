//! Built-in pixel clustering: k-means (k-means++ seeding, Lloyd updates)
//! and a diagonal-covariance Gaussian mixture fitted by EM.
//!
//! Every reduction runs in pixel order so results are bitwise reproducible
//! for a given seed.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassificationMap;
use crate::error::{Error, Result};

/// Lower bound on every GMM variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// `floor(fraction * n)` distinct indices drawn uniformly without
/// replacement, returned in increasing order.
pub fn subsample(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling fraction {fraction} outside (0, 1]"
        )));
    }
    let count = ((fraction * n as f64) + 1e-9).floor() as usize;
    let count = count.min(n);
    if count == n {
        return Ok((0..n).collect());
    }
    let mut picked = index::sample(&mut rng(seed), n, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn select_rows(data: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), data.ncols(), |i, j| data[(rows[i], j)])
}

fn sq_dist(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, k: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..data.ncols() {
        let diff = data[(i, j)] - centers[(k, j)];
        acc += diff * diff;
    }
    acc
}

fn nearest(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..centers.nrows() {
        let d = sq_dist(data, i, centers, k);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Independent k-means++ restarts; the lowest inertia wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub map: ClassificationMap,
    /// `m x d`
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn kmeans_plus_plus(data: &DMatrix<f64>, m: usize, rng: &mut Pcg64) -> DMatrix<f64> {
    let n = data.nrows();
    let mut centers = DMatrix::zeros(m, data.ncols());
    let first = rng.random_range(0..n);
    centers.set_row(0, &data.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers, 0)).collect();
    for k in 1..m {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(k, &data.row(pick));
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(sq_dist(data, i, &centers, k));
        }
    }
    centers
}

/// Lloyd iterations from the given centers until the assignment is a fixpoint.
pub fn lloyd(data: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iter: usize) -> KMeansResult {
    let (n, d) = data.shape();
    let m = centers.nrows();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (k, dk) = nearest(data, i, &centers);
            if labels[i] != k {
                labels[i] = k;
                changed = true;
            }
            dist[i] = dk;
            inertia += dk;
        }
        history.push(inertia);
        if !changed || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut sums = DMatrix::<f64>::zeros(m, d);
        let mut counts = vec![0usize; m];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[(labels[i], j)] += data[(i, j)];
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                for j in 0..d {
                    centers[(k, j)] = sums[(k, j)] / counts[k] as f64;
                }
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap().then(b.cmp(&a)));
                if let Some(far) = far {
                    centers.set_row(k, &data.row(far));
                    counts[labels[far]] -= 1;
                    labels[far] = k;
                    counts[k] = 1;
                    dist[far] = 0.0;
                }
            }
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    KMeansResult {
        map: ClassificationMap {
            labels,
            classes: m,
        },
        centroids: centers,
        inertia,
        history,
        iterations,
    }
}

pub fn kmeans(data: &DMatrix<f64>, m: usize, config: &KMeansConfig) -> Result<KMeansResult> {
    let n = data.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let mut rng = rng(config.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.restarts.max(1) {
        let centers = kmeans_plus_plus(data, m, &mut rng);
        let run = lloyd(data, centers, config.max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// `m x d`
    pub means: DMatrix<f64>,
    /// `m x d`, every entry at least [`VARIANCE_FLOOR`].
    pub variances: DMatrix<f64>,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Per-component `ln w_k + ln N(x | mu_k, diag(var_k))` for row `i`.
    fn joint_log_density(&self, data: &DMatrix<f64>, i: usize, out: &mut [f64]) {
        let d = data.ncols();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..d {
                let var = self.variances[(k, j)];
                let diff = data[(i, j)] - self.means[(k, j)];
                acc += var.ln() + diff * diff / var;
            }
            *slot = self.weights[k].ln() - 0.5 * (acc + d as f64 * ln_2pi);
        }
    }

    /// Posterior responsibilities (`n x m`) and the mean log-likelihood.
    pub fn responsibilities(&self, data: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let n = data.nrows();
        let m = self.components();
        let mut resp = DMatrix::zeros(n, m);
        let mut buf = vec![0.0; m];
        let mut total = 0.0;
        for i in 0..n {
            self.joint_log_density(data, i, &mut buf);
            let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = buf.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse;
            for k in 0..m {
                resp[(i, k)] = (buf[k] - lse).exp();
            }
        }
        (resp, total / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop when the mean log-likelihood improves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood before the first M-step and after every EM step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Whether the variance floor was hit during fitting.
    pub floor_engaged: bool,
}

fn m_step(data: &DMatrix<f64>, resp: &DMatrix<f64>, previous: &GmmModel) -> (GmmModel, bool) {
    let (n, d) = data.shape();
    let m = resp.ncols();
    let mut model = previous.clone();
    let mut floored = false;
    for k in 0..m {
        let nk: f64 = resp.column(k).iter().sum();
        model.weights[k] = nk / n as f64;
        if nk <= 1e-12 {
            continue;
        }
        for j in 0..d {
            let mut mean = 0.0;
            for i in 0..n {
                mean += resp[(i, k)] * data[(i, j)];
            }
            mean /= nk;
            let mut var = 0.0;
            for i in 0..n {
                let diff = data[(i, j)] - mean;
                var += resp[(i, k)] * diff * diff;
            }
            var /= nk;
            if var < VARIANCE_FLOOR {
                var = VARIANCE_FLOOR;
                floored = true;
            }
            model.means[(k, j)] = mean;
            model.variances[(k, j)] = var;
        }
    }
    (model, floored)
}

/// EM fit initialised from a k-means partition.
pub fn gmm_fit(data: &DMatrix<f64>, m: usize, config: &GmmConfig) -> Result<GmmFit> {
    let n = data.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "GMM needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let km = kmeans(
        data,
        m,
        &KMeansConfig {
            seed: config.seed,
            ..KMeansConfig::default()
        },
    )?;
    let mut hard = DMatrix::zeros(n, m);
    for (i, &l) in km.map.labels.iter().enumerate() {
        hard[(i, l)] = 1.0;
    }
    let init = GmmModel {
        weights: vec![1.0 / m as f64; m],
        means: km.centroids.clone(),
        variances: DMatrix::from_element(m, data.ncols(), 1.0),
    };
    let (mut model, mut floor_engaged) = m_step(data, &hard, &init);

    let (mut resp, mut ll) = model.responsibilities(data);
    let mut history = vec![ll];
    let mut converged = false;
    for _ in 0..config.max_iter {
        let (next, floored) = m_step(data, &resp, &model);
        floor_engaged |= floored;
        let (next_resp, next_ll) = next.responsibilities(data);
        history.push(next_ll);
        model = next;
        resp = next_resp;
        let gain = next_ll - ll;
        ll = next_ll;
        if gain.abs() < config.tol {
            converged = true;
            break;
        }
    }
    if floor_engaged {
        log::warn!("GMM variance floor {VARIANCE_FLOOR:e} engaged");
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
        converged,
        floor_engaged,
    })
}

/// Maximum-posterior labels; lowest index wins ties.
pub fn gmm_predict(model: &GmmModel, data: &DMatrix<f64>) -> Result<ClassificationMap> {
    if data.ncols() != model.means.ncols() {
        return Err(Error::Shape(format!(
            "data has {} columns, model has {}",
            data.ncols(),
            model.means.ncols()
        )));
    }
    let m = model.components();
    let mut buf = vec![0.0; m];
    let labels = (0..data.nrows())
        .map(|i| {
            model.joint_log_density(data, i, &mut buf);
            crate::dataset::argmax(buf.iter().copied())
        })
        .collect();
    Ok(ClassificationMap { labels, classes: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    Gmm,
}

/// Fits the chosen model on a seeded subsample and labels every pixel.
pub fn segment(
    data: &DMatrix<f64>,
    m: usize,
    method: ClusterMethod,
    fraction: f64,
    seed: u64,
) -> Result<ClassificationMap> {
    let rows = subsample(data.nrows(), fraction, seed)?;
    let sample = select_rows(data, &rows);
    match method {
        ClusterMethod::Kmeans => {
            let fit = kmeans(
                &sample,
                m,
                &KMeansConfig {
                    seed,
                    ..KMeansConfig::default()
                },
            )?;
            let labels = (0..data.nrows())
                .map(|i| nearest(data, i, &fit.centroids).0)
                .collect();
            Ok(ClassificationMap { labels, classes: m })
        }
        ClusterMethod::Gmm => {
            let fit = gmm_fit(
                &sample,
                m,
                &GmmConfig {
                    seed,
                    ..GmmConfig::default()
                },
            )?;
            gmm_predict(&fit.model, data)
        }
    }
}
