use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;
use crate::dataset::{parse_number, AttributeKind, Cell, CategoryDomain, PartialRow, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessorProposal {
    pub successor: String,
    #[serde(default)]
    pub rationale: String,
}

/// Returns the first JSON value in `text` (fenced or inline) accepted by
/// `shape`. Chatty preambles and trailing prose are skipped.
pub fn extract_json(text: &str, shape: impl Fn(&Value) -> bool) -> Option<Value> {
    text.char_indices()
        .filter(|(_, c)| *c == '[' || *c == '{')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(v)) if shape(&v) => Some(v),
                _ => None,
            }
        })
}

pub fn parse_source_response(text: &str) -> Result<Vec<String>, LlmError> {
    let v = extract_json(text, |v| {
        v.as_array()
            .is_some_and(|a| a.iter().all(Value::is_string))
    })
    .ok_or_else(|| LlmError::Unparseable("expected a JSON array of feature names".into()))?;
    Ok(v.as_array()
        .expect("shape checked")
        .iter()
        .filter_map(|s| s.as_str())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

pub fn parse_generate_response(text: &str) -> Result<Vec<SuccessorProposal>, LlmError> {
    let v = extract_json(text, |v| {
        v.as_array().is_some_and(|a| {
            a.iter().all(|e| {
                e.get("successor").is_some_and(Value::is_string)
                    && e.get("rationale").is_none_or(Value::is_string)
            })
        })
    })
    .ok_or_else(|| {
        LlmError::Unparseable("expected a JSON array of {\"successor\", \"rationale\"} objects".into())
    })?;
    let proposals: Vec<SuccessorProposal> =
        serde_json::from_value(v).map_err(|e| LlmError::Unparseable(e.to_string()))?;
    Ok(proposals
        .into_iter()
        .map(|p| SuccessorProposal {
            successor: p.successor.trim().to_string(),
            rationale: p.rationale.trim().to_string(),
        })
        .filter(|p| !p.successor.is_empty())
        .collect())
}

pub fn parse_resolve_response(text: &str) -> Result<(String, String), LlmError> {
    let v = extract_json(text, |v| {
        v.get("from").is_some_and(Value::is_string) && v.get("to").is_some_and(Value::is_string)
    })
    .ok_or_else(|| LlmError::Unparseable("expected a JSON object {\"from\", \"to\"}".into()))?;
    Ok((
        v["from"].as_str().unwrap_or_default().trim().to_string(),
        v["to"].as_str().unwrap_or_default().trim().to_string(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RowRejection {
    /// Wrong number of cells.
    Arity { expected: usize, found: usize },
    MissingValue { column: String },
    NotNumeric { column: String, value: String },
    DomainViolation { column: String, value: String },
}

impl RowRejection {
    pub fn reason(&self) -> &'static str {
        match self {
            RowRejection::Arity { .. } => "arity",
            RowRejection::MissingValue { .. } => "missing_value",
            RowRejection::NotNumeric { .. } => "not_numeric",
            RowRejection::DomainViolation { .. } => "domain_violation",
        }
    }
}

/// Parsed table rows, each tagged with its position in the response so
/// callers can pair them with the conditioning rows they answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableParse {
    pub rows: Vec<(usize, PartialRow)>,
    pub rejected: Vec<(usize, RowRejection)>,
}

impl TableParse {
    pub fn total(&self) -> usize {
        self.rows.len() + self.rejected.len()
    }
}

fn split_md_row(line: &str) -> Vec<String> {
    let line = line.trim();
    let inner = line.strip_prefix('|').unwrap_or(line);
    let inner = inner.strip_suffix('|').filter(|s| !s.ends_with('\\')).unwrap_or(inner);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    cells.push(cur.trim().to_string());
    cells
}

fn is_separator(line: &str) -> bool {
    let cells = split_md_row(line);
    !cells.is_empty()
        && cells.iter().all(|c| {
            !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')) && c.contains('-')
        })
}

/// Reads the first markdown table in `text`. The header must name exactly the
/// expected columns (any order, case-insensitive). Rows with unparseable
/// numbers, empty cells or out-of-domain categories are rejected with a
/// reason; accepted categories take the training spelling.
pub fn parse_table_response<S: AsRef<str>>(
    text: &str,
    expected_columns: &[S],
    schema: &Schema,
    domains: &BTreeMap<String, CategoryDomain>,
) -> Result<TableParse, LlmError> {
    let lines: Vec<&str> = text.lines().collect();
    let start = (0..lines.len().saturating_sub(1))
        .find(|&i| lines[i].trim_start().starts_with('|') && is_separator(lines[i + 1]))
        .ok_or_else(|| LlmError::Unparseable("no markdown table found".into()))?;

    let expected: Vec<&str> = expected_columns.iter().map(AsRef::as_ref).collect();
    let header = split_md_row(lines[start]);
    let wrong = || LlmError::WrongColumns {
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: header.clone(),
    };
    if header.len() != expected.len() {
        return Err(wrong());
    }
    let mut columns: Vec<&str> = Vec::with_capacity(header.len());
    for h in &header {
        let name = expected
            .iter()
            .find(|e| e.eq_ignore_ascii_case(h))
            .copied()
            .ok_or_else(wrong)?;
        if columns.contains(&name) {
            return Err(wrong());
        }
        columns.push(name);
    }
    let kinds: Vec<AttributeKind> = columns
        .iter()
        .map(|c| {
            schema
                .kind_of(c)
                .ok_or_else(|| LlmError::Config(format!("column `{c}` is not in the schema")))
        })
        .collect::<Result<_, _>>()?;

    let mut out = TableParse::default();
    let body = lines[start + 2..]
        .iter()
        .take_while(|l| l.trim_start().starts_with('|'));
    for (pos, line) in body.enumerate() {
        let cells = split_md_row(line);
        match parse_row(&cells, &columns, &kinds, domains) {
            Ok(row) => out.rows.push((pos, row)),
            Err(why) => out.rejected.push((pos, why)),
        }
    }
    Ok(out)
}

fn parse_row(
    cells: &[String],
    columns: &[&str],
    kinds: &[AttributeKind],
    domains: &BTreeMap<String, CategoryDomain>,
) -> Result<PartialRow, RowRejection> {
    if cells.len() != columns.len() {
        return Err(RowRejection::Arity {
            expected: columns.len(),
            found: cells.len(),
        });
    }
    let mut row = PartialRow::new();
    for ((raw, &col), &kind) in cells.iter().zip(columns).zip(kinds) {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(RowRejection::MissingValue {
                column: col.to_string(),
            });
        }
        let cell = match kind {
            AttributeKind::Numerical => {
                Cell::Number(parse_number(raw).ok_or_else(|| RowRejection::NotNumeric {
                    column: col.to_string(),
                    value: raw.to_string(),
                })?)
            }
            AttributeKind::Categorical => match domains.get(col) {
                Some(domain) => Cell::Category(
                    domain
                        .canonicalize(raw)
                        .ok_or_else(|| RowRejection::DomainViolation {
                            column: col.to_string(),
                            value: raw.to_string(),
                        })?
                        .to_string(),
                ),
                None => Cell::Category(raw.to_string()),
            },
        };
        row.insert(col.to_string(), cell);
    }
    Ok(row)
}
