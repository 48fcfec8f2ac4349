//! Linear models: L1-penalized regression by coordinate descent and a
//! multinomial softmax classifier trained by gradient descent.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lasso regression model minimizing
/// `(1/2N) ||y - Xw - w0||^2 + lambda ||w||_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoInfo {
    pub iterations: usize,
    pub converged: bool,
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent. Expects standardized columns; constant
/// columns get a zero weight. Convergence is declared when no coefficient
/// (including the intercept) moves more than `tol` in a full sweep.
pub fn lasso_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(LinearModel, LassoInfo)> {
    let n = x.nrows();
    let d = x.ncols();
    if n != y.len() {
        return Err(Error::dimension(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(Error::validation("lasso needs at least one row"));
    }
    if lambda < 0.0 {
        return Err(Error::validation("lambda must be non-negative"));
    }

    let nf = n as f64;
    // z_j = (1/N) sum_i x_ij^2
    let z: Vec<f64> = (0..d).map(|j| x.column(j).map(|v| v * v).sum() / nf).collect();

    let mut w = vec![0.0; d];
    let mut w0 = y.iter().sum::<f64>() / nf;
    // residual r = y - Xw - w0
    let mut r: Vec<f64> = y.iter().map(|&yi| yi - w0).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;

        // intercept (unpenalized)
        let mean_r = r.iter().sum::<f64>() / nf;
        if mean_r != 0.0 {
            w0 += mean_r;
            for ri in &mut r {
                *ri -= mean_r;
            }
            max_delta = max_delta.max(mean_r.abs());
        }

        for j in 0..d {
            if z[j] <= 0.0 {
                continue;
            }
            let col = x.column(j);
            let dot: f64 = col.iter().zip(&r).map(|(xij, ri)| xij * ri).sum();
            let rho = w[j] * z[j] + dot / nf;
            let new_w = soft_threshold(rho, lambda) / z[j];
            let delta = new_w - w[j];
            if delta != 0.0 {
                for (ri, xij) in r.iter_mut().zip(col.iter()) {
                    *ri -= delta * xij;
                }
                w[j] = new_w;
                max_delta = max_delta.max(delta.abs());
            }
        }

        if max_delta < tol {
            converged = true;
            break;
        }
    }

    Ok((LinearModel { weights: w, intercept: w0, lambda }, LassoInfo { iterations, converged }))
}

/// Multinomial logistic regression with per-class weight vectors and a
/// softmax link, trained by full-batch gradient descent on cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Distinct class values, ascending.
    pub classes: Vec<u8>,
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl LogisticModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Fits the classifier. A single-class training set yields a degenerate
/// model that always predicts that class (flagged in the returned bool).
pub fn logistic_fit(
    x: ArrayView2<f64>,
    labels: &[u8],
    epochs: usize,
    lr: f64,
) -> Result<(LogisticModel, bool)> {
    let n = x.nrows();
    let d = x.ncols();
    if n != labels.len() {
        return Err(Error::dimension(format!("{n} rows but {} labels", labels.len())));
    }
    if n == 0 {
        return Err(Error::validation("classifier needs at least one row"));
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let degenerate = classes.len() < 2;

    let k = classes.len();
    let class_index: Vec<usize> =
        labels.iter().map(|l| classes.iter().position(|c| c == l).unwrap()).collect();

    let mut weights = Array2::<f64>::zeros((k, d));
    let mut intercepts = Array1::<f64>::zeros(k);

    if !degenerate {
        for _ in 0..epochs {
            let mut grad_w = Array2::<f64>::zeros((k, d));
            let mut grad_b = Array1::<f64>::zeros(k);
            for (i, row) in x.rows().into_iter().enumerate() {
                let scores: Vec<f64> = (0..k)
                    .map(|c| {
                        intercepts[c]
                            + weights.row(c).iter().zip(row.iter()).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect();
                let probs = softmax(&scores);
                for c in 0..k {
                    let err = probs[c] - if class_index[i] == c { 1.0 } else { 0.0 };
                    grad_b[c] += err;
                    for (gw, v) in grad_w.row_mut(c).iter_mut().zip(row.iter()) {
                        *gw += err * v;
                    }
                }
            }
            let scale = lr / n as f64;
            weights -= &grad_w.mapv(|g| g * scale);
            intercepts -= &grad_b.mapv(|g| g * scale);
        }
    }

    let model = LogisticModel {
        classes,
        weights: weights.rows().into_iter().map(|r| r.to_vec()).collect(),
        intercepts: intercepts.to_vec(),
    };
    Ok((model, degenerate))
}

/// Argmax class; ties resolve to the lowest class value.
pub fn classify(model: &LogisticModel, x: &[f64]) -> u8 {
    let scores = model.scores(x);
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    model.classes[best]
}

/// Column-wise standardization to zero mean and unit (population) std.
/// Constant columns are left centered with unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).sum() / n).collect();
        let stds: Vec<f64> = (0..x.ncols())
            .map(|j| {
                let m = means[j];
                let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let s = var.sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
        }
        out
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.stds[j])
            .collect()
    }
}
