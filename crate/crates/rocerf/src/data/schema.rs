//! Column schema for raw CSV inputs.
//!
//! A schema file is a small line-oriented text file:
//!
//! ```text
//! # comment
//! label    <column name>
//! positive <raw value of the positive class>
//! numeric  <column name>
//! categorical <column name>
//! ```
//!
//! One `label` and one `positive` line are required; `numeric` and
//! `categorical` lines may repeat and their order fixes the feature-column
//! order after preprocessing. Everything after the first whitespace run is
//! taken verbatim, so column names may contain spaces.

use std::fmt;
use std::path::Path;

use super::DataError;

/// Kind of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnKind::Numeric => write!(f, "numeric"),
            ColumnKind::Categorical => write!(f, "categorical"),
        }
    }
}

/// Ordered feature-column descriptors plus the label mapping.
#[derive(Debug, Clone)]
pub struct Schema {
    pub columns: Vec<(String, ColumnKind)>,
    pub label_column: String,
    pub positive_label: String,
}

impl Schema {
    pub fn new(
        columns: Vec<(String, ColumnKind)>,
        label_column: impl Into<String>,
        positive_label: impl Into<String>,
    ) -> Self {
        Self {
            columns,
            label_column: label_column.into(),
            positive_label: positive_label.into(),
        }
    }

    /// Parse the schema file format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut columns = Vec::new();
        let mut label = None;
        let mut positive = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (keyword, rest) = match line.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r.trim()),
                None => (line, ""),
            };
            if rest.is_empty() {
                return Err(DataError::SchemaFile {
                    line: lineno + 1,
                    detail: format!("'{keyword}' needs a value"),
                });
            }
            match keyword {
                "numeric" => columns.push((rest.to_string(), ColumnKind::Numeric)),
                "categorical" => columns.push((rest.to_string(), ColumnKind::Categorical)),
                "label" => {
                    if label.replace(rest.to_string()).is_some() {
                        return Err(DataError::SchemaFile {
                            line: lineno + 1,
                            detail: "duplicate 'label' line".into(),
                        });
                    }
                }
                "positive" => {
                    if positive.replace(rest.to_string()).is_some() {
                        return Err(DataError::SchemaFile {
                            line: lineno + 1,
                            detail: "duplicate 'positive' line".into(),
                        });
                    }
                }
                other => {
                    return Err(DataError::SchemaFile {
                        line: lineno + 1,
                        detail: format!(
                            "unknown keyword '{other}' (expected numeric|categorical|label|positive)"
                        ),
                    })
                }
            }
        }
        let label_column = label.ok_or_else(|| DataError::SchemaFile {
            line: 0,
            detail: "missing 'label' line".into(),
        })?;
        let positive_label = positive.ok_or_else(|| DataError::SchemaFile {
            line: 0,
            detail: "missing 'positive' line".into(),
        })?;
        if columns.is_empty() {
            return Err(DataError::SchemaFile {
                line: 0,
                detail: "no feature columns declared".into(),
            });
        }
        Ok(Self {
            columns,
            label_column,
            positive_label,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|_| DataError::MissingFile {
            path: path.display().to_string(),
        })?;
        Self::parse(&text)
    }

    /// Render back to the schema file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label {}\n", self.label_column));
        out.push_str(&format!("positive {}\n", self.positive_label));
        for (name, kind) in &self.columns {
            out.push_str(&format!("{kind} {name}\n"));
        }
        out
    }
}
