//! Decision trees, bootstrap forests and least-squares gradient boosting.
//!
//! Trees use exact greedy axis-aligned splits (variance reduction for
//! regression, Gini for classification) and grow to purity unless a depth
//! limit is given. Forest bootstrap indices come from a per-tree generator
//! seeded with `base_seed + tree_index`, and training rows are put into a
//! canonical order before fitting, so predictions do not depend on the row
//! order of the caller's matrix.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Flat node-table entry. Leaves have `feature == -1` and child indices -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatNode {
    pub feature: i64,
    pub threshold: f64,
    pub left: i64,
    pub right: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<FlatNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature < 0 {
                return node.value;
            }
            idx = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub task: Task,
    pub trees: Vec<DecisionTree>,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
    /// Shrinkage for boosted ensembles; `None` means plain averaging.
    pub learning_rate: Option<f64>,
    /// Additive baseline (mean target) for boosted ensembles.
    pub init_value: f64,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    task: Task,
    max_depth: Option<usize>,
    nodes: Vec<FlatNode>,
}

fn leaf_value(task: Task, y: &[f64], indices: &[usize]) -> f64 {
    match task {
        Task::Regression => indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64,
        Task::Classification => {
            // majority class, ties to the lowest class value
            let mut values: Vec<f64> = indices.iter().map(|&i| y[i]).collect();
            values.sort_by(f64::total_cmp);
            let mut best = values[0];
            let mut best_count = 0usize;
            let mut i = 0;
            while i < values.len() {
                let mut j = i;
                while j < values.len() && values[j] == values[i] {
                    j += 1;
                }
                if j - i > best_count {
                    best_count = j - i;
                    best = values[i];
                }
                i = j;
            }
            best
        }
    }
}

fn is_pure(y: &[f64], indices: &[usize]) -> bool {
    let first = y[indices[0]];
    indices.iter().all(|&i| y[i] == first)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> TreeBuilder<'a> {
    /// Finds the split minimizing the weighted child impurity; `None` when
    /// every feature is constant over the node.
    fn best_split(&self, indices: &[usize]) -> Option<BestSplit> {
        let n_features = self.x[0].len();
        let mut best: Option<BestSplit> = None;

        for feature in 0..n_features {
            let mut order: Vec<usize> = indices.to_vec();
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));

            match self.task {
                Task::Regression => {
                    let total_sum: f64 = order.iter().map(|&i| self.y[i]).sum();
                    let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
                    let n = order.len() as f64;
                    let mut left_sum = 0.0;
                    let mut left_sq = 0.0;
                    for (pos, &i) in order.iter().enumerate().take(order.len() - 1) {
                        left_sum += self.y[i];
                        left_sq += self.y[i] * self.y[i];
                        let v = self.x[i][feature];
                        let v_next = self.x[order[pos + 1]][feature];
                        if v == v_next {
                            continue;
                        }
                        let nl = (pos + 1) as f64;
                        let nr = n - nl;
                        let sse_l = left_sq - left_sum * left_sum / nl;
                        let right_sum = total_sum - left_sum;
                        let sse_r = (total_sq - left_sq) - right_sum * right_sum / nr;
                        let score = sse_l + sse_r;
                        if best.as_ref().is_none_or(|b| score < b.score) {
                            best = Some(BestSplit {
                                feature,
                                threshold: v + (v_next - v) / 2.0,
                                score,
                            });
                        }
                    }
                }
                Task::Classification => {
                    // class codes are small integers; count via a sorted map
                    let mut classes: Vec<f64> = order.iter().map(|&i| self.y[i]).collect();
                    classes.sort_by(f64::total_cmp);
                    classes.dedup();
                    let class_idx = |v: f64| classes.iter().position(|&c| c == v).unwrap();

                    let mut total = vec![0usize; classes.len()];
                    for &i in &order {
                        total[class_idx(self.y[i])] += 1;
                    }
                    let n = order.len() as f64;
                    let mut left = vec![0usize; classes.len()];
                    let mut nl = 0usize;
                    for (pos, &i) in order.iter().enumerate().take(order.len() - 1) {
                        left[class_idx(self.y[i])] += 1;
                        nl += 1;
                        let v = self.x[i][feature];
                        let v_next = self.x[order[pos + 1]][feature];
                        if v == v_next {
                            continue;
                        }
                        let nr = order.len() - nl;
                        let gini = |counts: &[usize], total: usize| -> f64 {
                            let t = total as f64;
                            1.0 - counts
                                .iter()
                                .map(|&c| {
                                    let p = c as f64 / t;
                                    p * p
                                })
                                .sum::<f64>()
                        };
                        let right: Vec<usize> =
                            total.iter().zip(&left).map(|(t, l)| t - l).collect();
                        let score = (nl as f64 / n) * gini(&left, nl)
                            + (nr as f64 / n) * gini(&right, nr);
                        if best.as_ref().is_none_or(|b| score < b.score) {
                            best = Some(BestSplit {
                                feature,
                                threshold: v + (v_next - v) / 2.0,
                                score,
                            });
                        }
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &[usize], depth: usize) -> i64 {
        let make_leaf = indices.len() < 2
            || is_pure(self.y, indices)
            || self.max_depth.is_some_and(|d| depth >= d);
        let split = if make_leaf { None } else { self.best_split(indices) };

        let Some(split) = split else {
            self.nodes.push(FlatNode {
                feature: -1,
                threshold: 0.0,
                left: -1,
                right: -1,
                value: leaf_value(self.task, self.y, indices),
            });
            return (self.nodes.len() - 1) as i64;
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);

        let node_pos = self.nodes.len();
        self.nodes.push(FlatNode {
            feature: split.feature as i64,
            threshold: split.threshold,
            left: -1,
            right: -1,
            value: leaf_value(self.task, self.y, indices),
        });
        let left = self.build(&left_idx, depth + 1);
        let right = self.build(&right_idx, depth + 1);
        self.nodes[node_pos].left = left;
        self.nodes[node_pos].right = right;
        node_pos as i64
    }
}

fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    task: Task,
    max_depth: Option<usize>,
) -> DecisionTree {
    let mut builder = TreeBuilder { x, y, task, max_depth, nodes: Vec::new() };
    builder.build(indices, 0);
    DecisionTree { nodes: builder.nodes }
}

/// Canonical row order: lexicographic by features then target. Makes every
/// downstream seed-driven choice independent of caller row order.
fn canonical_order(x: &ArrayView2<f64>, y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows: Vec<(Vec<f64>, f64)> = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(r, &t)| (r.to_vec(), t))
        .collect();
    rows.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.1.total_cmp(&b.1))
    });
    rows.into_iter().unzip()
}

fn validate_xy(x: &ArrayView2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dimension(format!(
            "{} rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::validation("need at least two training rows"));
    }
    Ok(())
}

/// Bootstrap-aggregated trees grown to purity with all features considered
/// at every split.
pub fn forest_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    n_trees: usize,
    seed: u64,
    task: Task,
) -> Result<TreeEnsembleModel> {
    use rayon::prelude::*;
    validate_xy(&x, y)?;
    if n_trees == 0 {
        return Err(Error::validation("forest needs at least one tree"));
    }
    let (cx, cy) = canonical_order(&x, y);
    let n = cy.len();

    let trees: Vec<DecisionTree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            fit_tree(&cx, &cy, &indices, task, None)
        })
        .collect();

    Ok(TreeEnsembleModel {
        task,
        trees,
        n_trees,
        bootstrap: true,
        seed,
        learning_rate: None,
        init_value: 0.0,
    })
}

/// Stage-wise least-squares boosting on residuals.
pub fn gradient_boost_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    n_stages: usize,
    learning_rate: f64,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<TreeEnsembleModel> {
    validate_xy(&x, y)?;
    if learning_rate <= 0.0 {
        return Err(Error::validation("boosting learning rate must be positive"));
    }
    let (cx, cy) = canonical_order(&x, y);
    let n = cy.len();
    let init_value = cy.iter().sum::<f64>() / n as f64;

    let mut current: Vec<f64> = vec![init_value; n];
    let mut trees = Vec::with_capacity(n_stages);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..n_stages {
        let residual: Vec<f64> = cy.iter().zip(&current).map(|(t, p)| t - p).collect();
        let tree = fit_tree(&cx, &residual, &all, Task::Regression, max_depth);
        for (i, cur) in current.iter_mut().enumerate() {
            *cur += learning_rate * tree.predict(&cx[i]);
        }
        trees.push(tree);
    }

    Ok(TreeEnsembleModel {
        task: Task::Regression,
        trees,
        n_trees: n_stages,
        bootstrap: false,
        seed,
        learning_rate: Some(learning_rate),
        init_value,
    })
}

pub fn forest_predict(model: &TreeEnsembleModel, x: &[f64]) -> f64 {
    if let Some(lr) = model.learning_rate {
        return model.init_value
            + lr * model.trees.iter().map(|t| t.predict(x)).sum::<f64>();
    }
    match model.task {
        Task::Regression => {
            model.trees.iter().map(|t| t.predict(x)).sum::<f64>() / model.trees.len() as f64
        }
        Task::Classification => {
            let mut votes: Vec<f64> = model.trees.iter().map(|t| t.predict(x)).collect();
            votes.sort_by(f64::total_cmp);
            let mut best = votes[0];
            let mut best_count = 0usize;
            let mut i = 0;
            while i < votes.len() {
                let mut j = i;
                while j < votes.len() && votes[j] == votes[i] {
                    j += 1;
                }
                if j - i > best_count {
                    best_count = j - i;
                    best = votes[i];
                }
                i = j;
            }
            best
        }
    }
}

pub fn boost_training_loss(model: &TreeEnsembleModel, x: ArrayView2<f64>, y: &[f64]) -> Vec<f64> {
    let lr = model.learning_rate.unwrap_or(1.0);
    let mut current = vec![model.init_value; y.len()];
    let mut losses = Vec::with_capacity(model.trees.len() + 1);
    let loss = |cur: &[f64]| -> f64 {
        cur.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
    };
    losses.push(loss(&current));
    for tree in &model.trees {
        for (i, row) in x.rows().into_iter().enumerate() {
            current[i] += lr * tree.predict(&row.to_vec());
        }
        losses.push(loss(&current));
    }
    losses
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn matrix(rows: &[&[f64]]) -> Array2<f64> {
        let ncols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Array2::from_shape_vec((rows.len(), ncols), flat).unwrap()
    }

    #[test]
    fn unpruned_forest_interpolates_training_points() {
        let x = matrix(&[&[0.0], &[5.0], &[10.0]]);
        let y = [1.0, 2.0, 3.0];
        let model = forest_fit(x.view(), &y, 50, 1, Task::Regression).unwrap();
        for (row, target) in x.rows().into_iter().zip(&y) {
            let pred = forest_predict(&model, &row.to_vec());
            assert!((pred - target).abs() < 0.7, "pred {pred} target {target}");
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = matrix(&[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0]]);
        let y = [7.5, 7.5, 7.5];
        let model = forest_fit(x.view(), &y, 10, 1, Task::Regression).unwrap();
        assert_eq!(forest_predict(&model, &[100.0, -3.0]), 7.5);
    }

    #[test]
    fn forest_is_row_order_invariant() {
        let x1 = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[5.0]]);
        let y1 = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x2 = matrix(&[&[5.0], &[3.0], &[1.0], &[4.0], &[2.0], &[0.0]]);
        let y2 = [5.0, 3.0, 1.0, 4.0, 2.0, 0.0];
        let m1 = forest_fit(x1.view(), &y1, 20, 9, Task::Regression).unwrap();
        let m2 = forest_fit(x2.view(), &y2, 20, 9, Task::Regression).unwrap();
        for q in [0.3, 1.7, 2.9, 4.6] {
            assert_eq!(forest_predict(&m1, &[q]), forest_predict(&m2, &[q]));
        }
    }

    #[test]
    fn forest_determinism_same_seed() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let y = [0.0, 1.0, 4.0, 9.0];
        let m1 = forest_fit(x.view(), &y, 30, 4, Task::Regression).unwrap();
        let m2 = forest_fit(x.view(), &y, 30, 4, Task::Regression).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn classification_majority() {
        let x = matrix(&[&[0.0], &[0.1], &[0.2], &[5.0], &[5.1], &[5.2]]);
        let y = [3.0, 3.0, 3.0, 7.0, 7.0, 7.0];
        let model = forest_fit(x.view(), &y, 25, 2, Task::Classification).unwrap();
        assert_eq!(forest_predict(&model, &[0.05]), 3.0);
        assert_eq!(forest_predict(&model, &[5.05]), 7.0);
    }

    #[test]
    fn gb_zero_stages_predicts_mean() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0]]);
        let y = [1.0, 2.0, 6.0];
        let model = gradient_boost_fit(x.view(), &y, 0, 0.1, Some(3), 0).unwrap();
        assert_eq!(forest_predict(&model, &[1.0]), 3.0);
    }

    #[test]
    fn gb_single_full_stage_equals_single_tree() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let y = [2.0, 4.0, 8.0, 16.0];
        let gb = gradient_boost_fit(x.view(), &y, 1, 1.0, None, 0).unwrap();
        for (row, target) in x.rows().into_iter().zip(&y) {
            // one unshrunk unbounded tree on the residuals interpolates
            assert!((forest_predict(&gb, &row.to_vec()) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn gb_training_loss_non_increasing() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[5.0], &[6.0], &[7.0]]);
        let y = [0.0, 0.5, 1.8, 2.2, 4.4, 5.1, 5.9, 8.0];
        let model = gradient_boost_fit(x.view(), &y, 20, 0.3, Some(2), 0).unwrap();
        let losses = boost_training_loss(&model, x.view(), &y);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {w:?}");
        }
    }

    #[test]
    fn flat_node_table_round_trips_as_json() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let y = [0.0, 1.0, 4.0, 9.0];
        let model = forest_fit(x.view(), &y, 5, 4, Task::Regression).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: TreeEnsembleModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert!(json.contains("\"feature\""));
        assert!(json.contains("\"threshold\""));
    }
}
