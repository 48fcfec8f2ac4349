//! Downstream models over activation or windowed features: clustering for
//! status mining, regressors for main-engine power, classifiers for ship
//! type, the type/global-average baselines, per-ship vote aggregation and
//! evaluation metrics.

pub mod kmeans;
pub mod linear;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ShipId;

pub use kmeans::{kmeans_assign, kmeans_fit, kmeans_fit_traced, KMeansModel, BURN_LABEL};
pub use linear::{
    classify, lasso_fit, logistic_fit, LassoInfo, LinearModel, LogisticModel, Standardizer,
};
pub use tree::{
    forest_fit, forest_predict, gradient_boost_fit, DecisionTree, FlatNode, Task,
    TreeEnsembleModel,
};

/// First digit of the combined type-of-ship-and-cargo code.
pub fn ship_type_of(typeofshipandcargo: u32) -> Result<u8> {
    if typeofshipandcargo > 99 {
        return Err(Error::validation(format!(
            "typeofshipandcargo {typeofshipandcargo} outside 0..=99"
        )));
    }
    Ok((typeofshipandcargo / 10) as u8)
}

/// Per-type mean power with a global-mean fallback for unseen types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAvgModel {
    pub per_type: BTreeMap<u8, f64>,
    pub global: f64,
}

impl TypeAvgModel {
    pub fn predict(&self, ship_type: u8) -> f64 {
        self.per_type.get(&ship_type).copied().unwrap_or(self.global)
    }
}

pub fn baseline_type_avg(train: &[(u8, f64)]) -> Result<TypeAvgModel> {
    if train.is_empty() {
        return Err(Error::validation("type-average baseline needs training pairs"));
    }
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for &(t, p) in train {
        let e = sums.entry(t).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    let per_type =
        sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect();
    Ok(TypeAvgModel { per_type, global: baseline_global_avg(&train.iter().map(|&(_, p)| p).collect::<Vec<_>>())? })
}

pub fn baseline_global_avg(train: &[f64]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::validation("global-average baseline needs training values"));
    }
    Ok(train.iter().sum::<f64>() / train.len() as f64)
}

/// Vote reduction over per-step predictions of one ship.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Majority,
    Mean,
    Median,
}

impl Vote {
    pub fn parse(s: &str) -> Result<Vote> {
        match s {
            "majority" => Ok(Vote::Majority),
            "mean" => Ok(Vote::Mean),
            "median" => Ok(Vote::Median),
            other => Err(Error::validation(format!("unknown vote method '{other}'"))),
        }
    }
}

/// Per-step predictions keyed by ship and time index; each test instance
/// appears exactly once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    pub per_step: BTreeMap<ShipId, Vec<(usize, f64)>>,
}

impl PredictionTable {
    pub fn push(&mut self, ship_id: ShipId, t_index: usize, value: f64) {
        self.per_step.entry(ship_id).or_default().push((t_index, value));
    }

    pub fn aggregate(&self, method: Vote) -> BTreeMap<ShipId, f64> {
        self.per_step
            .iter()
            .map(|(&id, steps)| {
                let values: Vec<f64> = steps.iter().map(|&(_, v)| v).collect();
                (id, vote_reduce(&values, method))
            })
            .collect()
    }
}

/// Reduces one ship's per-step predictions. Majority ties go to the lowest
/// value; an even-count median takes the lower middle order statistic so
/// the aggregate is always an actually-predicted value.
pub fn vote_reduce(values: &[f64], method: Vote) -> f64 {
    assert!(!values.is_empty(), "vote over empty predictions");
    match method {
        Vote::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Vote::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted[(sorted.len() - 1) / 2]
        }
        Vote::Majority => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut best = sorted[0];
            let mut best_count = 0usize;
            let mut i = 0;
            while i < sorted.len() {
                let mut j = i;
                while j < sorted.len() && sorted[j] == sorted[i] {
                    j += 1;
                }
                if j - i > best_count {
                    best_count = j - i;
                    best = sorted[i];
                }
                i = j;
            }
            best
        }
    }
}

pub fn aggregate_votes(
    per_step: &PredictionTable,
    method: Vote,
) -> BTreeMap<ShipId, f64> {
    per_step.aggregate(method)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::validation("mae needs equal-length non-empty inputs"));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::validation("accuracy needs equal-length non-empty inputs"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Row-normalized contingency table of cluster labels against status names.
/// Rows cover labels 1..=n_labels (1 = burn-in); columns are the distinct
/// status names in lexicographic order. Empty rows stay all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosstab {
    pub labels: Vec<usize>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn crosstab_navstatus(
    labels: &[usize],
    statuses: &[String],
    n_labels: usize,
) -> Result<Crosstab> {
    if labels.len() != statuses.len() {
        return Err(Error::validation("labels and statuses must have equal length"));
    }
    let mut columns: Vec<String> = statuses.to_vec();
    columns.sort();
    columns.dedup();
    let col_of: BTreeMap<&str, usize> =
        columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut counts = vec![vec![0usize; columns.len()]; n_labels];
    for (&label, status) in labels.iter().zip(statuses) {
        if label == 0 || label > n_labels {
            return Err(Error::validation(format!(
                "cluster label {label} outside 1..={n_labels}"
            )));
        }
        counts[label - 1][col_of[status.as_str()]] += 1;
    }

    let rows = counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            if total == 0 {
                vec![0.0; row.len()]
            } else {
                row.into_iter().map(|c| c as f64 / total as f64).collect()
            }
        })
        .collect();

    Ok(Crosstab { labels: (1..=n_labels).collect(), columns, rows })
}

/// Display names for AIS navigational status codes, used as cross-tab
/// columns. Unlisted codes render as `Status <n>`.
pub fn navstatus_name(code: u8) -> String {
    match code {
        0 => "Under way using engine".into(),
        1 => "At anchor".into(),
        2 => "Not under command".into(),
        3 => "Restricted maneuv.".into(),
        5 => "Moored".into(),
        7 => "Engaged in fishing".into(),
        15 => "Undefined".into(),
        other => format!("Status {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_digit_rule() {
        assert_eq!(ship_type_of(70).unwrap(), 7);
        assert_eq!(ship_type_of(30).unwrap(), 3);
        assert_eq!(ship_type_of(5).unwrap(), 0);
        assert!(ship_type_of(100).is_err());
    }

    #[test]
    fn type_average_and_fallback() {
        let model = baseline_type_avg(&[(7, 4000.0), (7, 6000.0), (3, 900.0)]).unwrap();
        assert_eq!(model.predict(7), 5000.0);
        assert_eq!(model.predict(3), 900.0);
        // unseen type falls back to the global mean
        let global = (4000.0 + 6000.0 + 900.0) / 3.0;
        assert!((model.predict(9) - global).abs() < 1e-12);
    }

    #[test]
    fn single_ship_type_average() {
        let model = baseline_type_avg(&[(7, 5000.0)]).unwrap();
        assert_eq!(model.predict(7), 5000.0);
    }

    #[test]
    fn vote_examples() {
        assert_eq!(vote_reduce(&[7.0, 7.0, 6.0], Vote::Majority), 7.0);
        assert_eq!(vote_reduce(&[100.0, 200.0, 1000.0], Vote::Median), 200.0);
        assert_eq!(vote_reduce(&[100.0, 200.0], Vote::Mean), 150.0);
        // even-count median takes the lower middle element
        assert_eq!(vote_reduce(&[100.0, 200.0], Vote::Median), 100.0);
        // majority tie resolves to the lowest value
        assert_eq!(vote_reduce(&[6.0, 7.0], Vote::Majority), 6.0);
    }

    #[test]
    fn constant_prediction_aggregates_to_itself() {
        for method in [Vote::Majority, Vote::Mean, Vote::Median] {
            assert_eq!(vote_reduce(&[42.0; 5], method), 42.0);
        }
    }

    #[test]
    fn metric_basics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[11.0, 12.0], &[1.0, 2.0]).unwrap(), 10.0);
        assert_eq!(accuracy(&[1, 2], &[1, 3]).unwrap(), 0.5);
        assert!(mae(&[], &[]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn crosstab_rows_normalize() {
        let labels = vec![2, 2, 3, 3];
        let statuses: Vec<String> = vec![
            "Moored".into(),
            "Moored".into(),
            "Moored".into(),
            "Under way using engine".into(),
        ];
        let tab = crosstab_navstatus(&labels, &statuses, 3).unwrap();
        assert_eq!(tab.columns, vec!["Moored", "Under way using engine"]);
        // row 1 (burn) empty
        assert_eq!(tab.rows[0], vec![0.0, 0.0]);
        assert_eq!(tab.rows[1], vec![1.0, 0.0]);
        assert_eq!(tab.rows[2], vec![0.5, 0.5]);
        for row in &tab.rows {
            let sum: f64 = row.iter().sum();
            assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_table_aggregates_per_ship() {
        let mut table = PredictionTable::default();
        table.push(ShipId(1), 0, 100.0);
        table.push(ShipId(1), 1, 200.0);
        table.push(ShipId(2), 0, 50.0);
        let agg = table.aggregate(Vote::Mean);
        assert_eq!(agg[&ShipId(1)], 150.0);
        assert_eq!(agg[&ShipId(2)], 50.0);
    }

    #[test]
    fn status_names_match_standard_codes() {
        assert_eq!(navstatus_name(0), "Under way using engine");
        assert_eq!(navstatus_name(5), "Moored");
        assert_eq!(navstatus_name(7), "Engaged in fishing");
        assert_eq!(navstatus_name(15), "Undefined");
        assert_eq!(navstatus_name(9), "Status 9");
    }
}
