//! Linear SVM without intercept (L1 hinge), solved by dual coordinate
//! descent.
//!
//! Primal: `min_w 1/2 |w|^2 + C sum_k max(0, 1 - y_k <x_k, w>)`.
//! Dual:   `min_a 1/2 a^T Q a - sum_k a_k`, `0 <= a_k <= C`,
//! with `Q_kl = y_k y_l <x_k, x_l>` and `w = sum_k a_k y_k x_k`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::cluster::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Stop when `primal - dual <= tol * max(1, |primal|)`.
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds the per-epoch coordinate permutation.
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-6,
            max_epochs: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub weights: DVector<f64>,
    pub dual: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Primal objective of `w` on rows of `x` with labels `y` in `{-1, +1}`.
pub fn primal_objective(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, c: f64) -> f64 {
    let margins = x * w;
    let hinge: f64 = margins
        .iter()
        .zip(y)
        .map(|(m, yk)| (1.0 - yk * m).max(0.0))
        .sum();
    0.5 * w.norm_squared() + c * hinge
}

/// Trains on rows of `x` with labels `y` in `{-1, +1}`.
pub fn train_unbiased(x: &DMatrix<f64>, y: &[f64], options: &SvmOptions) -> SvmSolution {
    let (n, d) = x.shape();
    assert_eq!(n, y.len());
    let c = options.c;
    let diag: Vec<f64> = (0..n).map(|k| x.row(k).norm_squared()).collect();
    let mut alpha: DVector<f64> = DVector::zeros(n);
    let mut w: DVector<f64> = DVector::zeros(d);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng(options.seed);

    let mut epochs = 0;
    let mut converged = false;
    let mut primal = primal_objective(x, y, &w, c);
    let mut dual = 0.0;
    while epochs < options.max_epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            if diag[k] <= 0.0 {
                continue;
            }
            let xk = x.row(k);
            let grad = y[k] * xk.dot(&w.transpose()) - 1.0;
            let old = alpha[k];
            let new = (old - grad / diag[k]).clamp(0.0, c);
            if new != old {
                let step = (new - old) * y[k];
                for j in 0..d {
                    w[j] += step * xk[j];
                }
                alpha[k] = new;
            }
        }
        epochs += 1;
        primal = primal_objective(x, y, &w, c);
        dual = alpha.sum() - 0.5 * w.norm_squared();
        if primal - dual <= options.tol * primal.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "SVM stopped after {epochs} epochs with duality gap {:e}",
            primal - dual
        );
    }
    SvmSolution {
        weights: w,
        dual: alpha,
        primal_objective: primal,
        dual_objective: dual,
        epochs,
        converged,
    }
}
