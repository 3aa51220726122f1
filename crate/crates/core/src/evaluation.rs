//! Quality metrics for a synthetic table: downstream utility of a linear model
//! trained on real plus synthetic rows, nearest-neighbour privacy risk, and
//! pairwise statistical fidelity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::pearson;
use crate::binning::{bin_of, quantile_edges};
use crate::dataset::{ensure_same_attributes, AttributeKind, Cell, Dataset, DatasetError, Row, Schema, Task};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("only one class present")]
    SingleClass,
    #[error("target is constant")]
    ConstantTarget,
    #[error("the schema has no label column")]
    NoLabel,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} values")]
    TooFewValues(usize),
    #[error("label column `{0}` must be numerical for regression")]
    NonNumericTarget(String),
}

type Result<T> = std::result::Result<T, EvalError>;

/// Per-attribute divisor applied to numerical differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScale(Vec<f64>);

impl DistanceScale {
    /// Min-max ranges observed in `real`; constant or empty columns get 1.
    pub fn min_max(real: &Dataset) -> Self {
        let scales = real
            .schema()
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let (lo, hi) = real
                    .rows()
                    .iter()
                    .filter_map(|r| r[i].as_number())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                if hi > lo {
                    hi - lo
                } else {
                    1.0
                }
            })
            .collect();
        DistanceScale(scales)
    }

    /// Unit divisors, i.e. plain L1 on numericals.
    pub fn raw(k: usize) -> Self {
        DistanceScale(vec![1.0; k])
    }

    pub fn from_vec(scales: Vec<f64>) -> Self {
        DistanceScale(scales)
    }
}

/// Scaled L1 over numericals plus mismatch count over categoricals. A Missing
/// cell on either side costs 1 for that attribute.
pub fn mixed_distance(a: &Row, b: &Row, schema: &Schema, scale: &DistanceScale) -> Result<f64> {
    let k = schema.len();
    if a.len() != k || b.len() != k || scale.0.len() != k {
        return Err(DatasetError::SchemaMismatch(format!(
            "rows of width {} and {} against {k} attributes",
            a.len(),
            b.len()
        ))
        .into());
    }
    let mut d = 0.0;
    for i in 0..k {
        d += match (&a[i], &b[i]) {
            (Cell::Number(x), Cell::Number(y)) => (x - y).abs() / scale.0[i],
            (Cell::Category(x), Cell::Category(y)) => f64::from(u8::from(x != y)),
            _ => 1.0,
        };
    }
    Ok(d)
}

/// Share of synthetic rows whose nearest real neighbour is a training row.
/// The larger of `train` and `test` is first downsampled to the size of the
/// smaller; equidistant neighbours count toward `test`.
pub fn privacy_risk(synth: &Dataset, train: &Dataset, test: &Dataset, seed: u64, raw_distance: bool) -> Result<f64> {
    ensure_same_attributes(train.schema(), test.schema())?;
    ensure_same_attributes(train.schema(), synth.schema())?;
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::EmptyInput("train and test must both have rows"));
    }
    if synth.is_empty() {
        return Err(EvalError::EmptyInput("no synthetic rows"));
    }
    let m = train.len().min(test.len());
    let train = if train.len() > m { train.subsample(m, seed)? } else { train.clone() };
    let test = if test.len() > m { test.subsample(m, seed)? } else { test.clone() };

    let schema = train.schema();
    let scale = if raw_distance {
        DistanceScale::raw(schema.len())
    } else {
        DistanceScale::min_max(&train.concat(&test)?)
    };
    let nearest = |pool: &Dataset, row: &Row| -> Result<f64> {
        pool.rows()
            .iter()
            .map(|r| mixed_distance(row, r, schema, &scale))
            .try_fold(f64::INFINITY, |best, d| d.map(|d| best.min(d)))
    };
    let hits = synth
        .rows()
        .par_iter()
        .map(|row| Ok(usize::from(nearest(&train, row)? < nearest(&test, row)?)))
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / synth.len() as f64)
}

/// Discrete joint distribution keyed by cell pairs.
pub type Joint<K> = BTreeMap<K, f64>;

/// Half the L1 distance between two normalized tables over the union of
/// their keys.
pub fn tvd<K: Ord>(p: &Joint<K>, q: &Joint<K>) -> Result<f64> {
    for t in [p, q] {
        let sum: f64 = t.values().sum();
        if (sum - 1.0).abs() > 1e-9 || t.values().any(|&v| v < 0.0) {
            return Err(EvalError::NotNormalized(sum));
        }
    }
    let keys: BTreeSet<&K> = p.keys().chain(q.keys()).collect();
    let total: f64 = keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    Ok(0.5 * total)
}

/// Normalized frequency table of `pairs`.
pub fn joint_of<K: Ord>(pairs: impl IntoIterator<Item = K>) -> Joint<K> {
    let mut counts: BTreeMap<K, f64> = BTreeMap::new();
    let mut n = 0.0;
    for k in pairs {
        *counts.entry(k).or_default() += 1.0;
        n += 1.0;
    }
    counts.values_mut().for_each(|v| *v /= n);
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub col_i: String,
    pub col_j: String,
    pub delta: f64,
    /// A constant or empty column made the statistic fall back to a convention.
    pub degenerate: bool,
}

fn tvd_or_empty<K: Ord>(p: Joint<K>, q: Joint<K>) -> (f64, bool) {
    match (p.is_empty(), q.is_empty()) {
        (true, true) => (0.0, true),
        (true, false) | (false, true) => (1.0, true),
        _ => (tvd(&p, &q).expect("joint_of normalizes"), false),
    }
}

/// Difference between `real` and `synth` in how `col_i` and `col_j` co-vary.
/// Numerical columns paired with categoricals are cut at the `q`-quantiles of
/// the real column. Rows missing either value are skipped.
pub fn pair_delta(col_i: &str, col_j: &str, real: &Dataset, synth: &Dataset, q: usize) -> Result<PairDelta> {
    let kind = |d: &Dataset, c: &str| d.schema().kind_of(c).ok_or_else(|| DatasetError::UnknownColumn(c.to_string()));
    let (ki, kj) = (kind(real, col_i)?, kind(real, col_j)?);
    if kind(synth, col_i)? != ki || kind(synth, col_j)? != kj {
        return Err(DatasetError::SchemaMismatch(format!("kinds of `{col_i}`/`{col_j}` differ")).into());
    }
    let pairs = |d: &Dataset| -> Result<Vec<(Cell, Cell)>> {
        let a = d.column(col_i)?;
        let b = d.column(col_j)?;
        Ok(a.into_iter()
            .zip(b)
            .filter(|(x, y)| !x.is_missing() && !y.is_missing())
            .map(|(x, y)| (x.clone(), y.clone()))
            .collect())
    };
    let (pr, ps) = (pairs(real)?, pairs(synth)?);

    let (delta, degenerate) = match (ki, kj) {
        (AttributeKind::Numerical, AttributeKind::Numerical) => {
            let corr = |p: &[(Cell, Cell)]| {
                let x: Vec<f64> = p.iter().filter_map(|(a, _)| a.as_number()).collect();
                let y: Vec<f64> = p.iter().filter_map(|(_, b)| b.as_number()).collect();
                pearson(&x, &y).map_or((0.0, true), |m| (m.value, m.degenerate))
            };
            let ((r, dr), (s, ds)) = (corr(&pr), corr(&ps));
            ((r - s).abs(), dr || ds)
        }
        (AttributeKind::Categorical, AttributeKind::Categorical) => {
            let key = |p: Vec<(Cell, Cell)>| {
                joint_of(p.into_iter().map(|(a, b)| (a.to_string(), b.to_string())))
            };
            tvd_or_empty(key(pr), key(ps))
        }
        _ => {
            // Put the numerical side first.
            let num_first = ki == AttributeKind::Numerical;
            let split = |p: Vec<(Cell, Cell)>| -> Vec<(f64, String)> {
                p.into_iter()
                    .map(|(a, b)| if num_first { (a, b) } else { (b, a) })
                    .map(|(n, c)| (n.as_number().expect("numerical"), c.to_string()))
                    .collect()
            };
            let (sr, ss) = (split(pr), split(ps));
            let real_values: Vec<f64> = sr.iter().map(|(x, _)| *x).collect();
            let edges = quantile_edges(&real_values, q);
            let constant = edges.len() <= 1 && real_values.iter().all(|&x| Some(x) == real_values.first().copied());
            let binned = |v: Vec<(f64, String)>| joint_of(v.into_iter().map(|(x, c)| (bin_of(&edges, x), c)));
            let (d, deg) = tvd_or_empty(binned(sr), binned(ss));
            (d, deg || constant)
        }
    };
    Ok(PairDelta {
        col_i: col_i.to_string(),
        col_j: col_j.to_string(),
        delta,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub score: f64,
    pub pairs: Vec<PairDelta>,
}

/// Mean [`pair_delta`] over every unordered attribute pair (lower is better).
pub fn statistical_fidelity(real: &Dataset, synth: &Dataset, q: usize) -> Result<Fidelity> {
    ensure_same_attributes(real.schema(), synth.schema())?;
    let names: Vec<&str> = real.schema().names().collect();
    let combos: Vec<(&str, &str)> = names
        .iter()
        .enumerate()
        .flat_map(|(i, a)| names[i + 1..].iter().map(move |b| (*a, *b)))
        .collect();
    let pairs = combos
        .par_iter()
        .map(|(a, b)| pair_delta(a, b, real, synth, q))
        .collect::<Result<Vec<_>>>()?;
    let score = pairs.iter().map(|p| p.delta).sum::<f64>() / pairs.len().max(1) as f64;
    Ok(Fidelity { score, pairs })
}

/// Rank-based area under the ROC curve; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Midrank of the tie block, 1-based.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(EvalError::LengthMismatch(pred.len(), target.len()));
    }
    if target.len() < 2 {
        return Err(EvalError::TooFewValues(2));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantTarget);
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Feature map: standardized numericals (Missing imputed at the mean) and
/// one-hot categoricals over the categories seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<FeatureColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FeatureColumn {
    Numeric { index: usize, mean: f64, sd: f64 },
    OneHot { index: usize, levels: Vec<String> },
}

impl Encoder {
    pub fn fit(d: &Dataset, exclude: Option<&str>) -> Encoder {
        let mut columns = Vec::new();
        for (index, a) in d.schema().attributes().iter().enumerate() {
            if Some(a.name.as_str()) == exclude {
                continue;
            }
            match a.kind {
                AttributeKind::Numerical => {
                    let v: Vec<f64> = d.rows().iter().filter_map(|r| r[index].as_number()).collect();
                    let n = v.len().max(1) as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                    columns.push(FeatureColumn::Numeric { index, mean, sd });
                }
                AttributeKind::Categorical => {
                    let levels: BTreeSet<String> = d
                        .rows()
                        .iter()
                        .filter_map(|r| r[index].as_category().map(str::to_string))
                        .collect();
                    columns.push(FeatureColumn::OneHot {
                        index,
                        levels: levels.into_iter().collect(),
                    });
                }
            }
        }
        Encoder { columns }
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Numeric { .. } => 1,
                FeatureColumn::OneHot { levels, .. } => levels.len(),
            })
            .sum()
    }

    pub fn encode(&self, row: &Row) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c {
                FeatureColumn::Numeric { index, mean, sd } => {
                    out.push(row[*index].as_number().map_or(0.0, |x| (x - mean) / sd));
                }
                FeatureColumn::OneHot { index, levels } => {
                    let hit = row[*index].as_category();
                    out.extend(levels.iter().map(|l| f64::from(u8::from(Some(l.as_str()) == hit))));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Classification,
    Regression,
}

/// Linear model with one weight vector (plus bias) per output: one per class
/// for classification, a single one for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamModel {
    pub kind: ModelKind,
    pub classes: Vec<String>,
    encoder: Encoder,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub iterations: usize,
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            l2: 1e-4,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Full-batch gradient descent from zero with step `1/L`, where `L` bounds
/// the loss curvature via the squared Frobenius norm of the design matrix.
fn fit_linear(x: &[Vec<f64>], y: &[f64], logistic: bool, params: &TrainParams) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let p = x.first().map_or(0, Vec::len);
    let frob = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / n;
    let curvature = if logistic { 0.25 * frob } else { frob } + params.l2;
    let step = 1.0 / curvature;
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut gw = vec![0.0; p];
    for _ in 0..params.iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            let z = dot(&w, xi) + b;
            let r = if logistic { sigmoid(z) - yi } else { z - yi };
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += r * v;
            }
            gb += r;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= step * (g / n + params.l2 * *wj);
        }
        b -= step * gb / n;
    }
    (w, b)
}

/// Resolves the task for `schema`'s label, inferring it from the label kind
/// and number of classes when the schema leaves it open.
pub fn resolve_task(d: &Dataset, task: Option<Task>) -> Result<Task> {
    let label = d.schema().label().ok_or(EvalError::NoLabel)?;
    let declared = task.unwrap_or(d.schema().task());
    if declared != Task::None {
        return Ok(declared);
    }
    Ok(match d.schema().kind_of(label) {
        Some(AttributeKind::Numerical) => Task::Regression,
        _ => {
            let classes: BTreeSet<String> = d.column(label)?.iter().filter(|c| !c.is_missing()).map(|c| c.to_string()).collect();
            if classes.len() > 2 {
                Task::MultiClassification
            } else {
                Task::BinaryClassification
            }
        }
    })
}

pub fn train_downstream(train_aug: &Dataset, task: Task, params: &TrainParams) -> Result<DownstreamModel> {
    let schema = train_aug.schema();
    let label = schema.label().ok_or(EvalError::NoLabel)?;
    let li = schema.index_of(label).expect("label is in schema");
    let rows: Vec<&Row> = train_aug.rows().iter().filter(|r| !r[li].is_missing()).collect();
    if rows.is_empty() {
        return Err(EvalError::EmptyInput("no labelled training rows"));
    }
    let encoder = Encoder::fit(train_aug, Some(label));
    let x: Vec<Vec<f64>> = rows.iter().map(|r| encoder.encode(r)).collect();

    match task {
        Task::Regression => {
            let y: Vec<f64> = rows
                .iter()
                .map(|r| r[li].as_number().ok_or_else(|| EvalError::NonNumericTarget(label.to_string())))
                .collect::<Result<_>>()?;
            let (w, b) = fit_linear(&x, &y, false, params);
            Ok(DownstreamModel {
                kind: ModelKind::Regression,
                classes: Vec::new(),
                encoder,
                weights: vec![w],
                bias: vec![b],
            })
        }
        _ => {
            let classes: Vec<String> = rows
                .iter()
                .map(|r| r[li].to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if classes.len() < 2 {
                return Err(EvalError::SingleClass);
            }
            let (weights, bias) = classes
                .par_iter()
                .map(|c| {
                    let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(&r[li].to_string() == c))).collect();
                    fit_linear(&x, &y, true, params)
                })
                .unzip();
            Ok(DownstreamModel {
                kind: ModelKind::Classification,
                classes,
                encoder,
                weights,
                bias,
            })
        }
    }
}

impl DownstreamModel {
    /// One score per output: class probabilities (one-vs-rest) or the
    /// regression prediction.
    pub fn predict(&self, row: &Row) -> Vec<f64> {
        let x = self.encoder.encode(row);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                let z = dot(w, &x) + b;
                match self.kind {
                    ModelKind::Classification => sigmoid(z),
                    ModelKind::Regression => z,
                }
            })
            .collect()
    }

    /// Score of `class`, or `None` for a class the model never saw.
    pub fn class_score(&self, row: &Row, class: &str) -> Option<f64> {
        let k = self.classes.iter().position(|c| c == class)?;
        Some(self.predict(row)[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityMetric {
    #[serde(rename = "AUC")]
    Auc,
    #[serde(rename = "R2")]
    R2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub metric: UtilityMetric,
    pub value: f64,
}

/// Scores a model fitted on `train ∪ synth` against `test`.
pub fn score_model(model: &DownstreamModel, test: &Dataset) -> Result<Utility> {
    let label = test.schema().label().ok_or(EvalError::NoLabel)?;
    let li = test.schema().index_of(label).expect("label is in schema");
    let rows: Vec<&Row> = test.rows().iter().filter(|r| !r[li].is_missing()).collect();
    match model.kind {
        ModelKind::Regression => {
            let pred: Vec<f64> = rows.iter().map(|r| model.predict(r)[0]).collect();
            let target: Vec<f64> = rows
                .iter()
                .map(|r| r[li].as_number().ok_or_else(|| EvalError::NonNumericTarget(label.to_string())))
                .collect::<Result<_>>()?;
            Ok(Utility {
                metric: UtilityMetric::R2,
                value: r_squared(&pred, &target)?,
            })
        }
        ModelKind::Classification => {
            let truth: Vec<String> = rows.iter().map(|r| r[li].to_string()).collect();
            let present: BTreeSet<&str> = truth.iter().map(String::as_str).collect();
            if present.len() < 2 {
                return Err(EvalError::SingleClass);
            }
            let scored: Vec<Vec<f64>> = rows.iter().map(|r| model.predict(r)).collect();
            let per_class = |class: &str| -> Result<f64> {
                let labels: Vec<bool> = truth.iter().map(|t| t == class).collect();
                let scores: Vec<f64> = match model.classes.iter().position(|c| c == class) {
                    Some(k) => scored.iter().map(|s| s[k]).collect(),
                    // A class absent from training gets a constant score.
                    None => vec![0.0; truth.len()],
                };
                auc(&scores, &labels)
            };
            let value = if present.len() == 2 && model.classes.len() == 2 {
                per_class(&model.classes[1])?
            } else {
                let aucs = present.iter().map(|c| per_class(c)).collect::<Result<Vec<_>>>()?;
                aucs.iter().sum::<f64>() / aucs.len() as f64
            };
            Ok(Utility {
                metric: UtilityMetric::Auc,
                value,
            })
        }
    }
}

pub fn downstream_utility(train: &Dataset, synth: &Dataset, test: &Dataset, task: Option<Task>) -> Result<Utility> {
    ensure_same_attributes(train.schema(), synth.schema())?;
    ensure_same_attributes(train.schema(), test.schema())?;
    let aug = train.concat(synth)?;
    let task = resolve_task(&aug, task)?;
    let model = train_downstream(&aug, task, &TrainParams::default())?;
    score_model(&model, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Quantile bins for numerical-categorical pairs.
    pub q: usize,
    pub raw_distance: bool,
    pub task: Option<Task>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            q: 10,
            raw_distance: false,
            task: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub downstream: Option<Utility>,
    pub privacy_risk: f64,
    pub fidelity: f64,
    pub pair_breakdown: Vec<PairDelta>,
    pub config: EvalConfig,
}

/// Computes all three metrics. Fidelity is measured against `train`, the data
/// the generator imitates. Downstream utility is skipped when the schema has
/// no label.
pub fn evaluate(train: &Dataset, test: &Dataset, synth: &Dataset, cfg: &EvalConfig) -> Result<EvaluationReport> {
    let downstream = if train.schema().label().is_some() {
        Some(downstream_utility(train, synth, test, cfg.task)?)
    } else {
        None
    };
    let privacy_risk = privacy_risk(synth, train, test, cfg.seed, cfg.raw_distance)?;
    let fid = statistical_fidelity(train, synth, cfg.q)?;
    Ok(EvaluationReport {
        downstream,
        privacy_risk,
        fidelity: fid.score,
        pair_breakdown: fid.pairs,
        config: cfg.clone(),
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        match &self.downstream {
            Some(u) => {
                let name = match u.metric {
                    UtilityMetric::Auc => "AUC",
                    UtilityMetric::R2 => "R2",
                };
                let _ = writeln!(out, "{:<22}{:.4}", format!("downstream ({name})"), u.value);
            }
            None => {
                let _ = writeln!(out, "{:<22}n/a (no label)", "downstream");
            }
        }
        let _ = writeln!(out, "{:<22}{:.4}", "privacy risk", self.privacy_risk);
        let _ = writeln!(out, "{:<22}{:.4}", "fidelity", self.fidelity);
        let width = self
            .pair_breakdown
            .iter()
            .map(|p| p.col_i.len() + p.col_j.len() + 4)
            .max()
            .unwrap_or(0);
        for p in &self.pair_breakdown {
            let pair = format!("{} ~ {}", p.col_i, p.col_j);
            let flag = if p.degenerate { " (degenerate)" } else { "" };
            let _ = writeln!(out, "  {pair:<width$}  {:.4}{flag}", p.delta);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;
    use proptest::prelude::*;

    fn cat(s: &str) -> Cell {
        Cell::Category(s.to_string())
    }

    fn mixed_schema() -> Schema {
        Schema::new(
            vec![
                Attribute::new("x", AttributeKind::Numerical),
                Attribute::new("c", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let s = mixed_schema();
        let unit = DistanceScale::raw(2);
        let a = vec![Cell::Number(1.0), cat("u")];
        assert_eq!(mixed_distance(&a, &a, &s, &unit).unwrap(), 0.0);
        let b = vec![Cell::Number(1.0), cat("v")];
        assert_eq!(mixed_distance(&a, &b, &s, &unit).unwrap(), 1.0);
        let c = vec![Cell::Number(4.0), cat("v")];
        let expect = (1.0f64 - 4.0).abs() / 1.0 + 1.0;
        assert_eq!(mixed_distance(&a, &c, &s, &unit).unwrap(), expect);
        assert_eq!(mixed_distance(&a, &vec![Cell::Missing, cat("u")], &s, &unit).unwrap(), 1.0);
        assert!(mixed_distance(&a, &vec![Cell::Missing], &s, &unit).is_err());
    }

    #[test]
    fn min_max_scale() {
        let d = Dataset::new(mixed_schema(), vec![vec![Cell::Number(2.0), cat("a")], vec![Cell::Number(6.0), cat("b")]]).unwrap();
        let sc = DistanceScale::min_max(&d);
        assert_eq!(sc, DistanceScale::from_vec(vec![4.0, 1.0]));
        let dist = mixed_distance(&d.rows()[0], &d.rows()[1], d.schema(), &sc).unwrap();
        assert_eq!(dist, 2.0);
    }

    #[test]
    fn tvd_examples() {
        let p: Joint<(u8, u8)> = [((0, 0), 0.5), ((0, 1), 0.5)].into();
        let q: Joint<(u8, u8)> = [((0, 0), 0.25), ((0, 1), 0.75)].into();
        assert!((tvd(&p, &q).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        let r: Joint<(u8, u8)> = [((1, 1), 1.0)].into();
        assert_eq!(tvd(&p, &r).unwrap(), 1.0);
        let bad: Joint<(u8, u8)> = [((1, 1), 0.9)].into();
        assert!(matches!(tvd(&p, &bad), Err(EvalError::NotNormalized(_))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn r_squared_examples() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0; 3], &t).unwrap(), 0.0);
        assert!((r_squared(&[1.0, 2.0, 3.0], &t).unwrap() + 0.5).abs() < 1e-12);
        assert!(matches!(r_squared(&[1.0, 1.0], &[2.0, 2.0]), Err(EvalError::ConstantTarget)));
    }

    fn labelled(rows: Vec<(f64, f64, &str)>) -> Dataset {
        let schema = Schema::new(
            vec![
                Attribute::new("u", AttributeKind::Numerical),
                Attribute::new("v", AttributeKind::Numerical),
                Attribute::new("y", AttributeKind::Categorical),
            ],
            Some("y".into()),
            Task::BinaryClassification,
        )
        .unwrap();
        Dataset::new(schema, rows.into_iter().map(|(u, v, y)| vec![Cell::Number(u), Cell::Number(v), cat(y)]).collect()).unwrap()
    }

    #[test]
    fn separable_classification() {
        let d = labelled(
            (0..20)
                .map(|i| {
                    let u = i as f64;
                    (u, 20.0 - u, if i < 10 { "neg" } else { "pos" })
                })
                .collect(),
        );
        let m = train_downstream(&d, Task::BinaryClassification, &TrainParams::default()).unwrap();
        let correct = d
            .rows()
            .iter()
            .filter(|r| (m.class_score(r, "pos").unwrap() > 0.5) == (r[2] == cat("pos")))
            .count();
        assert_eq!(correct, 20);
        let again = train_downstream(&d, Task::BinaryClassification, &TrainParams::default()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn line_regression() {
        let schema = Schema::new(
            vec![Attribute::new("x", AttributeKind::Numerical), Attribute::new("y", AttributeKind::Numerical)],
            Some("y".into()),
            Task::Regression,
        )
        .unwrap();
        let d = Dataset::new(schema, (0..30).map(|i| vec![Cell::Number(i as f64), Cell::Number(2.0 * i as f64)]).collect()).unwrap();
        let m = train_downstream(&d, Task::Regression, &TrainParams::default()).unwrap();
        let u = score_model(&m, &d).unwrap();
        assert_eq!(u.metric, UtilityMetric::R2);
        assert!(u.value >= 0.999, "{}", u.value);
    }

    #[test]
    fn single_class_rejected() {
        let d = labelled(vec![(0.0, 1.0, "a"), (1.0, 0.0, "a")]);
        assert!(matches!(
            train_downstream(&d, Task::BinaryClassification, &TrainParams::default()),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn pair_delta_num_num_extremes() {
        let schema = Schema::new(
            vec![Attribute::new("a", AttributeKind::Numerical), Attribute::new("b", AttributeKind::Numerical)],
            None,
            Task::None,
        )
        .unwrap();
        let real = Dataset::new(schema.clone(), (0..5).map(|i| vec![Cell::Number(i as f64), Cell::Number(i as f64)]).collect()).unwrap();
        let synth = Dataset::new(schema, (0..5).map(|i| vec![Cell::Number(i as f64), Cell::Number(-(i as f64))]).collect()).unwrap();
        let p = pair_delta("a", "b", &real, &synth, 10).unwrap();
        assert!((p.delta - 2.0).abs() < 1e-12);
        assert_eq!(pair_delta("a", "b", &real, &real, 10).unwrap().delta, 0.0);
    }

    #[test]
    fn pair_delta_num_cat_hand_binned() {
        // Real median of x is 3.5; real bins: {1,2,3} low, {4,5,6} high.
        let real = Dataset::new(
            mixed_schema(),
            [(1.0, "a"), (2.0, "a"), (3.0, "b"), (4.0, "b"), (5.0, "b"), (6.0, "a")]
                .iter()
                .map(|(x, c)| vec![Cell::Number(*x), cat(c)])
                .collect(),
        )
        .unwrap();
        let synth = Dataset::new(
            mixed_schema(),
            [(0.0, "a"), (3.6, "a"), (9.0, "b"), (3.5, "b")]
                .iter()
                .map(|(x, c)| vec![Cell::Number(*x), cat(c)])
                .collect(),
        )
        .unwrap();
        // real joint: (lo,a)=2/6 (lo,b)=1/6 (hi,a)=1/6 (hi,b)=2/6
        // synth joint: (lo,a)=1/4 (lo,b)=1/4 (hi,a)=1/4 (hi,b)=1/4
        let expect = 0.5 * ((2.0 / 6.0 - 0.25f64).abs() * 2.0 + (1.0 / 6.0 - 0.25f64).abs() * 2.0);
        let p = pair_delta("x", "c", &real, &synth, 2).unwrap();
        assert!((p.delta - expect).abs() < 1e-12, "{}", p.delta);
        let flipped = pair_delta("c", "x", &real, &synth, 2).unwrap();
        assert!((flipped.delta - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_side_is_degenerate() {
        let real = Dataset::new(mixed_schema(), vec![vec![Cell::Number(1.0), cat("a")]]).unwrap();
        let synth = Dataset::new(mixed_schema(), vec![vec![Cell::Missing, cat("a")]]).unwrap();
        let p = pair_delta("x", "c", &real, &synth, 10).unwrap();
        assert_eq!((p.delta, p.degenerate), (1.0, true));
    }

    #[test]
    fn fidelity_identity_and_k2() {
        let real = Dataset::new(
            mixed_schema(),
            (0..10).map(|i| vec![Cell::Number(i as f64), cat(if i % 3 == 0 { "a" } else { "b" })]).collect(),
        )
        .unwrap();
        assert_eq!(statistical_fidelity(&real, &real, 10).unwrap().score, 0.0);
        let synth = real.subsample(6, 1).unwrap();
        let f = statistical_fidelity(&real, &synth, 10).unwrap();
        assert_eq!(f.pairs.len(), 1);
        assert_eq!(f.score, pair_delta("x", "c", &real, &synth, 10).unwrap().delta);
    }

    #[test]
    fn report_table_lists_pairs() {
        let d = labelled((0..12).map(|i| (i as f64, (i % 4) as f64, if i % 2 == 0 { "p" } else { "q" })).collect());
        let (train, test) = d.split(0.5, 1).unwrap();
        let r = evaluate(&train, &test, &train, &EvalConfig::default()).unwrap();
        assert_eq!(r.pair_breakdown.len(), 3);
        let t = r.to_table();
        assert!(t.contains("privacy risk") && t.contains("u ~ v"));
        let back: EvaluationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.pair_breakdown.len(), 3);
    }

    fn arb_row() -> impl Strategy<Value = Row> {
        (-50.0f64..50.0, 0u8..3, -5.0f64..5.0).prop_map(|(a, c, b)| {
            vec![Cell::Number(a), Cell::Category(format!("k{c}")), Cell::Number(b)]
        })
    }

    fn arb_dist() -> impl Strategy<Value = Joint<u8>> {
        proptest::collection::vec(0.0f64..1.0, 4).prop_filter_map("non-zero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-6).then(|| w.iter().enumerate().map(|(i, x)| (i as u8, x / s)).collect())
        })
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in arb_row(), b in arb_row(), c in arb_row()) {
            let s = Schema::new(
                vec![
                    Attribute::new("a", AttributeKind::Numerical),
                    Attribute::new("c", AttributeKind::Categorical),
                    Attribute::new("b", AttributeKind::Numerical),
                ],
                None,
                Task::None,
            ).unwrap();
            let sc = DistanceScale::from_vec(vec![100.0, 1.0, 10.0]);
            let d = |x: &Row, y: &Row| mixed_distance(x, y, &s, &sc).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }

        #[test]
        fn tvd_symmetric_and_triangular(p in arb_dist(), q in arb_dist(), r in arb_dist()) {
            let pq = tvd(&p, &q).unwrap();
            prop_assert!((pq - tvd(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!(tvd(&p, &r).unwrap() <= pq + tvd(&q, &r).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        }

        #[test]
        fn auc_invariant_under_monotone_maps(
            scores in proptest::collection::vec(-3.0f64..3.0, 6..30),
            seed in 0u64..1000,
        ) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (i as u64 * 7 + seed) % 3 == 0).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let base = auc(&scores, &labels).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert!((auc(&mapped, &labels).unwrap() - base).abs() < 1e-12);
        }
    }
}
