//! Tabular data model: schema, typed cells, CSV I/O, splitting and the
//! markdown textualization used inside prompts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("requested {requested} rows but only {available} are available")]
    NotEnoughRows { requested: usize, available: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    MultiClassification,
    Regression,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered attribute list plus optional prediction target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    attributes: Vec<Attribute>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    task: Task,
}

impl Schema {
    /// Builds a schema, checking name uniqueness, `K >= 2` and that the label
    /// (if any) names an attribute.
    pub fn new(attributes: Vec<Attribute>, label: Option<String>, task: Task) -> Result<Self> {
        let schema = Self {
            attributes,
            label,
            task,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.attributes.len() < 2 {
            return Err(DatasetError::InvalidSchema(format!(
                "at least 2 attributes required, found {}",
                self.attributes.len()
            )));
        }
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if a.name.is_empty() {
                return Err(DatasetError::InvalidSchema("empty attribute name".into()));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate attribute `{}`",
                    a.name
                )));
            }
        }
        if let Some(label) = &self.label {
            if !seen.contains(label.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "label `{label}` is not an attribute"
                )));
            }
        }
        Ok(())
    }

    /// Single-column schemas are legal as projections even though a full
    /// dataset schema needs two attributes.
    fn projection(attributes: Vec<Attribute>, label: Option<String>, task: Task) -> Self {
        Self {
            attributes,
            label,
            task,
        }
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn kind_of(&self, name: &str) -> Option<AttributeKind> {
        self.index_of(name).map(|i| self.attributes[i].kind)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn with_label(mut self, label: Option<String>, task: Task) -> Result<Self> {
        self.label = label;
        self.task = task;
        self.validate()?;
        Ok(self)
    }

    /// Loads the JSON schema hint format
    /// `{"attributes":[{"name":..,"kind":..}],"label":..,"task":..}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)
            .map_err(|e| DatasetError::Format(format!("schema hint: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Sub-schema over `columns` in the given order.
    pub fn project<S: AsRef<str>>(&self, columns: &[S]) -> Result<Schema> {
        let attrs = columns
            .iter()
            .map(|c| {
                let c = c.as_ref();
                self.index_of(c)
                    .map(|i| self.attributes[i].clone())
                    .ok_or_else(|| DatasetError::UnknownColumn(c.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = self
            .label
            .clone()
            .filter(|l| columns.iter().any(|c| c.as_ref() == l));
        let task = if label.is_some() { self.task } else { Task::None };
        Ok(Schema::projection(attrs, label, task))
    }

    /// Orders a partial row by this schema; absent attributes become Missing.
    pub fn row_from_partial(&self, partial: &PartialRow) -> Row {
        self.attributes
            .iter()
            .map(|a| partial.get(&a.name).cloned().unwrap_or(Cell::Missing))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Number(f64),
    Category(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Cell::Category(s) => Some(s),
            _ => None,
        }
    }

    pub fn conforms_to(&self, kind: AttributeKind) -> bool {
        match self {
            Cell::Missing => true,
            Cell::Number(x) => kind == AttributeKind::Numerical && x.is_finite(),
            Cell::Category(_) => kind == AttributeKind::Categorical,
        }
    }
}

impl fmt::Display for Cell {
    /// Numbers use the shortest decimal form that round-trips.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(x) => write!(f, "{x}"),
            Cell::Category(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

/// A row holds one cell per schema attribute, in schema order.
pub type Row = Vec<Cell>;

/// Values for a subset of attributes, keyed by name.
pub type PartialRow = BTreeMap<String, Cell>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, row).map_err(|e| DatasetError::SchemaMismatch(format!("row {i}: {e}")))?;
        }
        Ok(Self { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<&Cell>> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| &r[idx]).collect())
    }

    /// Appends rows of another dataset with an identical schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        ensure_same_attributes(&self.schema, &other.schema)?;
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Dataset {
            schema: self.schema.clone(),
            rows,
        })
    }

    /// Builds a dataset over `schema` from keyed rows; absent keys are Missing.
    pub fn from_partial_rows(schema: Schema, rows: &[PartialRow]) -> Result<Dataset> {
        let rows = rows.iter().map(|p| schema.row_from_partial(p)).collect();
        Dataset::new(schema, rows)
    }

    pub fn partial_row(&self, index: usize) -> PartialRow {
        self.schema
            .names()
            .map(str::to_string)
            .zip(self.rows[index].iter().cloned())
            .collect()
    }

    pub fn with_rows(&self, rows: Vec<Row>) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), rows)
    }

    fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Returns row positions shuffled deterministically by `seed`.
    pub fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx
    }

    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(DatasetError::InvalidFraction(test_fraction));
        }
        if self.rows.len() < 2 {
            return Err(DatasetError::NotEnoughRows {
                requested: 2,
                available: self.rows.len(),
            });
        }
        let idx = self.shuffled_indices(seed);
        let n_test = (test_fraction * self.rows.len() as f64).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.select(train), self.select(test)))
    }

    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n > self.rows.len() {
            return Err(DatasetError::NotEnoughRows {
                requested: n,
                available: self.rows.len(),
            });
        }
        let idx = self.shuffled_indices(seed);
        Ok(self.select(&idx[..n]))
    }

    /// In-context exemplars: the first `k` rows after a seeded shuffle.
    pub fn few_shot(&self, k: usize, seed: u64) -> Result<Dataset> {
        self.subsample(k, seed)
    }

    /// Restricts to `columns`, in the given order. The label is kept only if
    /// it survives the projection.
    pub fn project<S: AsRef<str>>(&self, columns: &[S]) -> Result<Dataset> {
        let schema = self.schema.project(columns)?;
        let idx: Vec<usize> = schema
            .names()
            .map(|n| self.schema.index_of(n).expect("projected from this schema"))
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Ok(Dataset { schema, rows })
    }

    /// Pipe-delimited markdown table with at most `max_rows` data rows.
    pub fn to_markdown(&self, max_rows: usize) -> String {
        let mut out = String::new();
        out.push('|');
        for name in self.schema.names() {
            out.push(' ');
            out.push_str(&escape_md(name));
            out.push_str(" |");
        }
        out.push_str("\n|");
        for _ in 0..self.schema.len() {
            out.push_str(" --- |");
        }
        out.push('\n');
        for row in self.rows.iter().take(max_rows) {
            out.push('|');
            for cell in row {
                let text = cell.to_string();
                if text.is_empty() {
                    out.push_str("  |");
                } else {
                    out.push(' ');
                    out.push_str(&escape_md(&text));
                    out.push_str(" |");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Distinct observed values per categorical attribute.
    pub fn category_domains(&self) -> BTreeMap<String, CategoryDomain> {
        self.schema
            .attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.kind == AttributeKind::Categorical)
            .map(|(i, a)| {
                let values = self
                    .rows
                    .iter()
                    .filter_map(|r| r[i].as_category().map(str::to_string))
                    .collect();
                (
                    a.name.clone(),
                    CategoryDomain {
                        attribute: a.name.clone(),
                        values,
                    },
                )
            })
            .collect()
    }

    pub fn load_csv(path: &Path, schema_hint: Option<&Schema>) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file, schema_hint)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, schema_hint: Option<&Schema>) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut seen = HashSet::new();
        for h in &header {
            if !seen.insert(h.as_str()) {
                return Err(DatasetError::Format(format!("duplicate header `{h}`")));
            }
        }
        let mut records: Vec<Vec<String>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            records.push(rec.iter().map(str::to_string).collect());
        }

        let schema = match schema_hint {
            Some(hint) => {
                for name in hint.names() {
                    if !header.iter().any(|h| h == name) {
                        return Err(DatasetError::SchemaMismatch(format!(
                            "hinted column `{name}` is not in the header"
                        )));
                    }
                }
                hint.clone()
            }
            None => {
                let attrs = header
                    .iter()
                    .enumerate()
                    .map(|(i, name)| {
                        let numeric = records
                            .iter()
                            .map(|r| r[i].trim())
                            .filter(|s| !s.is_empty())
                            .all(|s| parse_number(s).is_some());
                        let kind = if numeric {
                            AttributeKind::Numerical
                        } else {
                            AttributeKind::Categorical
                        };
                        Attribute::new(name.clone(), kind)
                    })
                    .collect();
                Schema::new(attrs, None, Task::None)?
            }
        };

        let columns: Vec<usize> = schema
            .names()
            .map(|n| header.iter().position(|h| h == n).expect("checked above"))
            .collect();
        let mut rows = Vec::with_capacity(records.len());
        for (r, rec) in records.iter().enumerate() {
            let mut row = Vec::with_capacity(columns.len());
            for (attr, &c) in schema.attributes.iter().zip(&columns) {
                let raw = rec[c].as_str();
                let cell = if raw.trim().is_empty() {
                    Cell::Missing
                } else {
                    match attr.kind {
                        AttributeKind::Numerical => {
                            Cell::Number(parse_number(raw.trim()).ok_or_else(|| {
                                DatasetError::Format(format!(
                                    "row {}: `{raw}` in numerical column `{}` is not a finite number",
                                    r + 1,
                                    attr.name
                                ))
                            })?)
                        }
                        AttributeKind::Categorical => Cell::Category(raw.to_string()),
                    }
                };
                row.push(cell);
            }
            rows.push(row);
        }
        Ok(Dataset { schema, rows })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.schema.names()).map_err(csv_error)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|c| c.to_string()))
                .map_err(csv_error)?;
        }
        wtr.flush().map_err(|source| DatasetError::Io {
            path: "<writer>".into(),
            source,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryDomain {
    pub attribute: String,
    pub values: BTreeSet<String>,
}

impl CategoryDomain {
    /// Case-insensitive lookup returning the training spelling.
    pub fn canonicalize(&self, value: &str) -> Option<&str> {
        let value = value.trim();
        self.values
            .get(value)
            .or_else(|| self.values.iter().find(|v| v.eq_ignore_ascii_case(value)))
            .map(String::as_str)
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn escape_md(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn csv_error(e: csv::Error) -> DatasetError {
    DatasetError::Format(e.to_string())
}

fn check_row(schema: &Schema, row: &Row) -> std::result::Result<(), String> {
    if row.len() != schema.len() {
        return Err(format!(
            "expected {} cells, found {}",
            schema.len(),
            row.len()
        ));
    }
    for (cell, attr) in row.iter().zip(schema.attributes()) {
        if !cell.conforms_to(attr.kind) {
            return Err(format!("cell {cell:?} does not fit {:?} `{}`", attr.kind, attr.name));
        }
    }
    Ok(())
}

/// Two schemas are interchangeable when their attribute lists agree.
pub fn ensure_same_attributes(a: &Schema, b: &Schema) -> Result<()> {
    if a.attributes == b.attributes {
        return Ok(());
    }
    let offending = a
        .attributes
        .iter()
        .zip(b.attributes.iter())
        .find(|(x, y)| x != y)
        .map(|(x, _)| x.name.clone())
        .or_else(|| {
            let longer = if a.len() > b.len() { a } else { b };
            longer
                .attributes
                .get(a.len().min(b.len()))
                .map(|x| x.name.clone())
        })
        .unwrap_or_default();
    Err(DatasetError::SchemaMismatch(format!(
        "column `{offending}` differs between datasets"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab_schema() -> Schema {
        Schema::new(
            vec![
                Attribute::new("a", AttributeKind::Numerical),
                Attribute::new("b", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap()
    }

    fn toy(n: usize) -> Dataset {
        let rows = (0..n)
            .map(|i| vec![Cell::Number(i as f64), Cell::Category(format!("c{}", i % 3))])
            .collect();
        Dataset::new(ab_schema(), rows).unwrap()
    }

    #[test]
    fn infers_kinds() {
        let d = Dataset::read_csv("a,b\n1,x\n2,y\n".as_bytes(), None).unwrap();
        assert_eq!(d.schema(), &ab_schema());
        assert_eq!(d.len(), 2);

        let d = Dataset::read_csv("a,z\n1,1\nfoo,2\n".as_bytes(), None).unwrap();
        assert_eq!(d.schema().kind_of("a"), Some(AttributeKind::Categorical));
        assert_eq!(d.schema().kind_of("z"), Some(AttributeKind::Numerical));
    }

    #[test]
    fn empty_cells_are_missing() {
        let d = Dataset::read_csv("a,b\n,x\n2,\n".as_bytes(), None).unwrap();
        assert_eq!(d.rows()[0][0], Cell::Missing);
        assert_eq!(d.rows()[1][1], Cell::Missing);
        assert_eq!(d.schema().kind_of("a"), Some(AttributeKind::Numerical));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = Dataset::read_csv("a,b\n1,x\n2\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, DatasetError::Format(_)), "{err}");
    }

    #[test]
    fn duplicate_header_rejected() {
        let err = Dataset::read_csv("a,a\n1,2\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, DatasetError::Format(_)));
    }

    #[test]
    fn hint_must_match_header() {
        let hint = Schema::new(
            vec![
                Attribute::new("a", AttributeKind::Categorical),
                Attribute::new("q", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap();
        let err = Dataset::read_csv("a,b\n1,x\n".as_bytes(), Some(&hint)).unwrap_err();
        assert!(matches!(err, DatasetError::SchemaMismatch(_)));
    }

    #[test]
    fn hint_overrides_inference() {
        let hint = Schema::new(
            vec![
                Attribute::new("b", AttributeKind::Categorical),
                Attribute::new("a", AttributeKind::Categorical),
            ],
            Some("b".into()),
            Task::BinaryClassification,
        )
        .unwrap();
        let d = Dataset::read_csv("a,b\n1,x\n2,y\n".as_bytes(), Some(&hint)).unwrap();
        assert_eq!(d.rows()[0], vec![Cell::Category("x".into()), Cell::Category("1".into())]);
        assert_eq!(d.schema().label(), Some("b"));
    }

    #[test]
    fn schema_hint_json() {
        let s = Schema::from_json(
            r#"{"attributes":[{"name":"age","kind":"numerical"},{"name":"income","kind":"categorical"}],
                "label":"income","task":"binary_classification"}"#,
        )
        .unwrap();
        assert_eq!(s.task(), Task::BinaryClassification);
        assert!(Schema::from_json(r#"{"attributes":[{"name":"x","kind":"numerical"}]}"#).is_err());
        assert!(Schema::from_json(
            r#"{"attributes":[{"name":"x","kind":"numerical"},{"name":"y","kind":"numerical"}],"label":"z"}"#
        )
        .is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(10);
        let (train, test) = d.split(0.2, 42).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<_> = train.rows().iter().chain(test.rows()).cloned().collect();
        all.sort_by(|a, b| a[0].as_number().partial_cmp(&b[0].as_number()).unwrap());
        assert_eq!(all, d.rows());
        assert_eq!(d.split(0.2, 42).unwrap(), (train, test));
        assert!(matches!(d.split(0.0, 1), Err(DatasetError::InvalidFraction(_))));
        assert!(matches!(d.split(1.0, 1), Err(DatasetError::InvalidFraction(_))));
    }

    #[test]
    fn subsample_bounds() {
        let d = toy(100);
        let s = d.subsample(100, 3).unwrap();
        let mut got: Vec<f64> = s.rows().iter().map(|r| r[0].as_number().unwrap()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, (0..100).map(f64::from).collect::<Vec<_>>());
        let empty = d.subsample(0, 3).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.schema(), d.schema());
        assert!(matches!(
            d.subsample(101, 3),
            Err(DatasetError::NotEnoughRows { requested: 101, available: 100 })
        ));
    }

    #[test]
    fn projection() {
        let d = toy(4);
        assert_eq!(d.project(&["a", "b"]).unwrap(), d);
        let b = d.project(&["b"]).unwrap();
        assert_eq!(b.schema().len(), 1);
        assert_eq!(b.rows()[1], vec![Cell::Category("c1".into())]);
        assert!(matches!(d.project(&["z"]), Err(DatasetError::UnknownColumn(_))));
    }

    #[test]
    fn markdown_layout() {
        let schema = Schema::new(
            vec![
                Attribute::new("a", AttributeKind::Numerical),
                Attribute::new("b", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap();
        let d = Dataset::new(schema.clone(), vec![vec![Cell::Number(39.0), Cell::Missing]]).unwrap();
        let one = d.project(&["a"]).unwrap().to_markdown(10);
        assert!(one.contains("| a |"), "{one}");
        assert!(one.contains("| 39 |"), "{one}");
        assert_eq!(d.to_markdown(10).lines().nth(2), Some("| 39 |  |"));

        let empty = Dataset::empty(schema).to_markdown(5);
        assert_eq!(empty.lines().count(), 2);

        let t = toy(5).to_markdown(3);
        assert_eq!(t.lines().count(), 2 + 3);
    }

    #[test]
    fn domains() {
        let d = Dataset::read_csv("a,b\n1,x\n2,y\n3,x\n".as_bytes(), None).unwrap();
        let doms = d.category_domains();
        assert!(!doms.contains_key("a"));
        assert_eq!(
            doms["b"].values.iter().cloned().collect::<Vec<_>>(),
            vec!["x".to_string(), "y".to_string()]
        );
        assert_eq!(doms["b"].canonicalize(" X "), Some("x"));

        let d = Dataset::read_csv("a,b\n1,\n2,\n".as_bytes(), None).unwrap();
        // all-empty column infers as numerical, so force categorical
        let hint = Schema::new(
            vec![
                Attribute::new("a", AttributeKind::Numerical),
                Attribute::new("b", AttributeKind::Categorical),
            ],
            None,
            Task::None,
        )
        .unwrap();
        let d2 = Dataset::read_csv("a,b\n1,\n2,\n".as_bytes(), Some(&hint)).unwrap();
        assert_eq!(d.schema().kind_of("b"), Some(AttributeKind::Numerical));
        assert!(d2.category_domains()["b"].values.is_empty());
    }

    #[test]
    fn rejects_kind_violations() {
        let err = Dataset::new(ab_schema(), vec![vec![Cell::Category("x".into()), Cell::Missing]]);
        assert!(matches!(err, Err(DatasetError::SchemaMismatch(_))));
    }
}
