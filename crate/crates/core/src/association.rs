//! Pairwise association measures dispatched on attribute kinds, and the
//! textual evidence block embedded in link-generation prompts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeKind, Cell, Dataset, DatasetError};

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("need at least 2 complete pairs, found {0}")]
    TooFewSamples(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// A measure value together with whether the degenerate convention kicked in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    /// Zero variance or a single category on one side; `value` is 0.
    pub degenerate: bool,
}

impl Measured {
    fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Self {
            value: 0.0,
            degenerate: true,
        }
    }
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AssociationError> {
    pearson(x, y).map(|m| m.value)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Measured, AssociationError> {
    if x.len() != y.len() {
        return Err(AssociationError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(AssociationError::TooFewSamples(n));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Measured::degenerate());
    }
    Ok(Measured::ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

pub fn correlation_ratio<S: AsRef<str>>(groups: &[S], values: &[f64]) -> Result<f64, AssociationError> {
    eta(groups, values).map(|m| m.value)
}

pub fn eta<S: AsRef<str>>(groups: &[S], values: &[f64]) -> Result<Measured, AssociationError> {
    if groups.len() != values.len() {
        return Err(AssociationError::LengthMismatch(groups.len(), values.len()));
    }
    let n = values.len();
    if n < 2 {
        return Err(AssociationError::TooFewSamples(n));
    }
    let grand = mean(values);
    let mut by_group: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (g, v) in groups.iter().zip(values) {
        let e = by_group.entry(g.as_ref()).or_default();
        e.0 += 1;
        e.1 += v;
    }
    let total: f64 = values.iter().map(|v| (v - grand).powi(2)).sum();
    if total <= 0.0 {
        return Ok(Measured::degenerate());
    }
    let between: f64 = by_group
        .values()
        .map(|&(count, sum)| {
            let gm = sum / count as f64;
            count as f64 * (gm - grand).powi(2)
        })
        .sum();
    Ok(Measured::ok((between / total).sqrt().clamp(0.0, 1.0)))
}

pub fn cramers_v<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64, AssociationError> {
    cramer(a, b).map(|m| m.value)
}

/// Cramér's V without bias correction.
pub fn cramer<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<Measured, AssociationError> {
    if a.len() != b.len() {
        return Err(AssociationError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(AssociationError::TooFewSamples(n));
    }
    let mut table: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut rows: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cols: BTreeMap<&str, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_ref(), y.as_ref());
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(Measured::degenerate());
    }
    let total = n as f64;
    let mut chi2 = 0.0;
    for (r, &nr) in &rows {
        for (c, &nc) in &cols {
            let expected = nr * nc / total;
            let observed = table.get(&(*r, *c)).copied().unwrap_or(0.0);
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    let k = (rows.len().min(cols.len()) - 1) as f64;
    Ok(Measured::ok((chi2 / (total * k)).sqrt().clamp(0.0, 1.0)))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    PearsonR,
    CorrelationRatio,
    CramersV,
}

impl Measure {
    pub fn for_kinds(a: AttributeKind, b: AttributeKind) -> Self {
        use AttributeKind::*;
        match (a, b) {
            (Numerical, Numerical) => Measure::PearsonR,
            (Categorical, Categorical) => Measure::CramersV,
            _ => Measure::CorrelationRatio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    VeryLow,
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl Level {
    /// Buckets by magnitude, so strong negative correlations rank high.
    pub fn from_value(value: f64) -> Self {
        let m = value.abs();
        if m > 0.8 {
            Level::VeryHigh
        } else if m > 0.6 {
            Level::High
        } else if m > 0.4 {
            Level::Moderate
        } else if m > 0.2 {
            Level::Low
        } else {
            Level::VeryLow
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::VeryHigh => "Very High",
            Level::High => "High",
            Level::Moderate => "Moderate",
            Level::Low => "Low",
            Level::VeryLow => "Very Low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationScore {
    pub source: String,
    pub target: String,
    pub value: f64,
    pub measure: Measure,
    pub level: Level,
    /// Set when the pair was degenerate or had too few complete cells.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationVector {
    pub subject: String,
    pub scores: Vec<AssociationScore>,
}

/// Scores one attribute pair, dropping rows where either cell is missing.
/// Too few complete pairs yields a degenerate zero score rather than an error.
pub fn pair_association(d: &Dataset, source: &str, target: &str) -> Result<AssociationScore, DatasetError> {
    let schema = d.schema();
    let ks = schema
        .kind_of(source)
        .ok_or_else(|| DatasetError::UnknownColumn(source.to_string()))?;
    let kt = schema
        .kind_of(target)
        .ok_or_else(|| DatasetError::UnknownColumn(target.to_string()))?;
    let xs = d.column(source)?;
    let ys = d.column(target)?;
    let pairs: Vec<(&Cell, &Cell)> = xs
        .into_iter()
        .zip(ys)
        .filter(|(a, b)| !a.is_missing() && !b.is_missing())
        .collect();
    let measure = Measure::for_kinds(ks, kt);
    let result = match measure {
        Measure::PearsonR => {
            let x: Vec<f64> = pairs.iter().filter_map(|p| p.0.as_number()).collect();
            let y: Vec<f64> = pairs.iter().filter_map(|p| p.1.as_number()).collect();
            pearson(&x, &y)
        }
        Measure::CramersV => {
            let x: Vec<&str> = pairs.iter().filter_map(|p| p.0.as_category()).collect();
            let y: Vec<&str> = pairs.iter().filter_map(|p| p.1.as_category()).collect();
            cramer(&x, &y)
        }
        Measure::CorrelationRatio => {
            let (g, v): (Vec<&str>, Vec<f64>) = pairs
                .iter()
                .map(|(a, b)| match (a, b) {
                    (Cell::Category(g), Cell::Number(v)) | (Cell::Number(v), Cell::Category(g)) => {
                        (g.as_str(), *v)
                    }
                    _ => unreachable!("kinds dispatched above"),
                })
                .unzip();
            eta(&g, &v)
        }
    };
    let m = result.unwrap_or_else(|_| Measured::degenerate());
    Ok(AssociationScore {
        source: source.to_string(),
        target: target.to_string(),
        value: m.value,
        measure,
        level: Level::from_value(m.value),
        degenerate: m.degenerate,
    })
}

/// Scores of `subject` against every other attribute, in schema order.
pub fn association_vector(d: &Dataset, subject: &str) -> Result<AssociationVector, DatasetError> {
    if !d.schema().contains(subject) {
        return Err(DatasetError::UnknownColumn(subject.to_string()));
    }
    let scores = d
        .schema()
        .names()
        .filter(|n| *n != subject)
        .map(|target| pair_association(d, subject, target))
        .collect::<Result<_, _>>()?;
    Ok(AssociationVector {
        subject: subject.to_string(),
        scores,
    })
}

/// Renders the evidence block: header, threshold legend, then targets sorted by
/// descending magnitude.
pub fn score_text(v: &AssociationVector) -> String {
    let mut out = format!(
        "Association scores for '{}', scaled 0 to 1.\n\
         (Levels: >0.8 Very High, >0.6 High, >0.4 Moderate, >0.2 Low, <=0.2 Very Low)\n",
        v.subject
    );
    let mut sorted: Vec<&AssociationScore> = v.scores.iter().collect();
    sorted.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then_with(|| a.target.cmp(&b.target))
    });
    if !sorted.is_empty() {
        out.push('\n');
    }
    for s in sorted {
        let _ = writeln!(out, "- {}: {:.2} ({})", s.target, s.value, s.level.label());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Attribute, Schema, Task};

    #[test]
    fn pearson_extremes() {
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson_r(&[1.0], &[1.0]), Err(AssociationError::TooFewSamples(1)));
        let flat = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.value, 0.0);
    }

    #[test]
    fn correlation_ratio_examples() {
        assert!((correlation_ratio(&["a", "a", "b", "b"], &[1.0, 1.0, 5.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(correlation_ratio(&["a", "b", "a", "b"], &[1.0, 1.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(eta(&["a", "b"], &[3.0, 3.0]).unwrap().degenerate);
    }

    #[test]
    fn cramers_v_examples() {
        let expand = |counts: [[usize; 2]; 2]| {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, row) in counts.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    for _ in 0..c {
                        a.push(format!("r{i}"));
                        b.push(format!("c{j}"));
                    }
                }
            }
            (a, b)
        };
        let (a, b) = expand([[5, 0], [0, 5]]);
        assert!((cramers_v(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let (a, b) = expand([[25, 25], [25, 25]]);
        assert!(cramers_v(&a, &b).unwrap().abs() < 1e-12);
        let single = cramer(&["x", "x", "x"], &["a", "b", "a"]).unwrap();
        assert!(single.degenerate);
    }

    #[test]
    fn levels() {
        assert_eq!(Level::from_value(0.85), Level::VeryHigh);
        assert_eq!(Level::from_value(0.8), Level::High);
        assert_eq!(Level::from_value(-0.65), Level::High);
        assert_eq!(Level::from_value(0.41), Level::Moderate);
        assert_eq!(Level::from_value(0.21), Level::Low);
        assert_eq!(Level::from_value(0.2), Level::VeryLow);
    }

    fn score(target: &str, value: f64) -> AssociationScore {
        AssociationScore {
            source: "Education".into(),
            target: target.into(),
            value,
            measure: Measure::CramersV,
            level: Level::from_value(value),
            degenerate: false,
        }
    }

    #[test]
    fn evidence_text() {
        let v = AssociationVector {
            subject: "Education".into(),
            scores: vec![score("Sex", 0.12), score("Occupation", 0.85), score("Salary", 0.72)],
        };
        let text = score_text(&v);
        assert!(text.contains("- Occupation: 0.85 (Very High)"));
        assert!(text.contains("- Sex: 0.12 (Very Low)"));
        let occ = text.find("Occupation").unwrap();
        let sal = text.find("Salary").unwrap();
        let sex = text.find("Sex").unwrap();
        assert!(occ < sal && sal < sex);

        let empty = score_text(&AssociationVector {
            subject: "X".into(),
            scores: vec![],
        });
        assert_eq!(empty.lines().count(), 2);
        assert!(empty.contains(">0.8 Very High"));
    }

    #[test]
    fn vector_dispatch() {
        let schema = Schema::new(
            vec![
                Attribute::new("x", AttributeKind::Numerical),
                Attribute::new("x2", AttributeKind::Numerical),
                Attribute::new("g", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap();
        let rows = (0..6)
            .map(|i| {
                vec![
                    Cell::Number(i as f64),
                    Cell::Number(i as f64),
                    Cell::Category(if i < 3 { "lo" } else { "hi" }.into()),
                ]
            })
            .collect();
        let d = Dataset::new(schema, rows).unwrap();
        let v = association_vector(&d, "x").unwrap();
        assert_eq!(v.scores.len(), 2);
        assert_eq!(v.scores[0].target, "x2");
        assert!((v.scores[0].value - 1.0).abs() < 1e-12);
        assert_eq!(v.scores[0].level, Level::VeryHigh);
        assert_eq!(v.scores[1].measure, Measure::CorrelationRatio);
        assert!(association_vector(&d, "nope").is_err());
    }

    #[test]
    fn too_few_pairs_is_flagged_not_fatal() {
        let schema = Schema::new(
            vec![
                Attribute::new("x", AttributeKind::Numerical),
                Attribute::new("y", AttributeKind::Numerical),
            ],
            None,
            Task::None,
        )
        .unwrap();
        let d = Dataset::new(
            schema,
            vec![
                vec![Cell::Number(1.0), Cell::Missing],
                vec![Cell::Number(2.0), Cell::Number(3.0)],
            ],
        )
        .unwrap();
        let s = pair_association(&d, "x", "y").unwrap();
        assert!(s.degenerate);
        assert_eq!(s.value, 0.0);
    }
}
