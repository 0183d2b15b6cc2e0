use crate::error::{Error, Result};

/// A single named column. Numeric cells are stored as `f64`; anything that
/// does not parse as a number is kept as a categorical label.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Real(v) => Column::Real(rows.iter().map(|&i| v[i]).collect()),
            Column::Text(v) => Column::Text(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// Cell rendered as a grouping key.
    pub(crate) fn key(&self, row: usize) -> String {
        match self {
            Column::Real(v) => format!("{}", v[row]),
            Column::Text(v) => v[row].clone(),
        }
    }
}

/// Rectangular table of equal-length named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new<S: Into<String>>(columns: Vec<(S, Column)>) -> Result<Self> {
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        let mut n_rows = None;
        for (name, col) in columns {
            let name = name.into();
            if names.contains(&name) {
                return Err(Error::schema(&name, "duplicate column name"));
            }
            match n_rows {
                None => n_rows = Some(col.len()),
                Some(n) if n != col.len() => {
                    return Err(Error::schema(
                        &name,
                        format!("has {} rows, expected {n}", col.len()),
                    ))
                }
                _ => {}
            }
            names.push(name);
            cols.push(col);
        }
        Ok(Dataset {
            names,
            columns: cols,
            n_rows: n_rows.unwrap_or(0),
        })
    }

    /// Convenience constructor for all-numeric tables.
    pub fn from_reals<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        Dataset::new(
            columns
                .into_iter()
                .map(|(n, v)| (n, Column::Real(v)))
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(self.columns.iter())
    }

    /// Numeric column lookup; missing or categorical columns are schema errors.
    pub fn real(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some(Column::Real(v)) => Ok(v),
            Some(Column::Text(_)) => Err(Error::schema(name, "expected a numeric column")),
            None => Err(Error::schema(name, "column not found")),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Row-wise concatenation; schemas must match exactly.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter();
        let Some(first) = iter.next() else {
            return Dataset::new::<String>(vec![]);
        };
        let mut out = first.clone();
        for part in iter {
            if part.names != out.names {
                return Err(Error::Argument("cannot concatenate datasets with different schemas".into()));
            }
            for (name, (dst, src)) in out
                .names
                .iter()
                .zip(out.columns.iter_mut().zip(part.columns.iter()))
            {
                match (dst, src) {
                    (Column::Real(a), Column::Real(b)) => a.extend_from_slice(b),
                    (Column::Text(a), Column::Text(b)) => a.extend(b.iter().cloned()),
                    _ => return Err(Error::schema(name, "column type mismatch")),
                }
            }
            out.n_rows += part.n_rows;
        }
        Ok(out)
    }
}
