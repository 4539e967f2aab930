//! Column-major design matrices shared by every model in the zoo.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement type of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// 0/1 indicator.
    Binary,
    /// Non-negative integer count.
    Count,
    /// Real-valued.
    Continuous,
    /// Size-interaction factor taking values in {0, 1, 2, 3, 4}.
    Factor,
}

/// Which machine a column belongs to. Shock-aware machines see both groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "SUM")]
    Sum,
    #[serde(rename = "SAM-only")]
    SamOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub group: FeatureGroup,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, group: FeatureGroup) -> Self {
        Column {
            name: name.into(),
            kind,
            group,
        }
    }
}

/// Dense feature matrix stored column by column, with a stable identifier per
/// row. Row identifiers key the deterministic fold assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    columns: Vec<Column>,
    row_ids: Vec<String>,
    data: Vec<f64>,
}

impl Design {
    /// Builds a design from column-major data; rejects non-finite entries.
    pub fn new(columns: Vec<Column>, row_ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let expected = columns.len() * row_ids.len();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                what: "design data",
                expected,
                actual: data.len(),
            });
        }
        let n = row_ids.len();
        for (j, col) in columns.iter().enumerate() {
            if let Some(i) = data[j * n..(j + 1) * n].iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "non-finite value in column `{}` at row {}",
                    col.name, i
                )));
            }
        }
        Ok(Design {
            columns,
            row_ids,
            data,
        })
    }

    /// Builds a design from row-major vectors (convenient in tests).
    pub fn from_rows(columns: Vec<Column>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let n = rows.len();
        let mut data = vec![0.0; n * p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::LengthMismatch {
                    what: "design row",
                    expected: p,
                    actual: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                data[j * n + i] = *v;
            }
        }
        let row_ids = (0..n).map(|i| format!("r{i}")).collect();
        Design::new(columns, row_ids, data)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n_rows();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows() + i]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn with_row_ids(mut self, row_ids: Vec<String>) -> Result<Self> {
        if row_ids.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                what: "row ids",
                expected: self.n_rows(),
                actual: row_ids.len(),
            });
        }
        self.row_ids = row_ids;
        Ok(self)
    }

    /// Copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        let n = self.n_rows();
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for j in 0..self.n_cols() {
            let col = &self.data[j * n..(j + 1) * n];
            data.extend(rows.iter().map(|&i| col[i]));
        }
        Design {
            columns: self.columns.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            data,
        }
    }

    /// Copy restricted to the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Design> {
        let n = self.n_rows();
        let mut columns = Vec::with_capacity(names.len());
        let mut data = Vec::with_capacity(names.len() * n);
        for name in names {
            let j = self
                .column_index(name)
                .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            columns.push(self.columns[j].clone());
            data.extend_from_slice(self.col(j));
        }
        Ok(Design {
            columns,
            row_ids: self.row_ids.clone(),
            data,
        })
    }

    /// Columns restricted to one feature group.
    pub fn restrict_to_group(&self, group: FeatureGroup) -> Design {
        let names: Vec<String> = self
            .columns
            .iter()
            .filter(|c| c.group == group)
            .map(|c| c.name.clone())
            .collect();
        self.select_columns(&names).expect("names come from self")
    }

    /// Row `i` as a dense vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols()).map(|j| self.get(i, j)).collect()
    }

    /// Verifies that `names` equals this design's column names, reporting the
    /// first offending column.
    pub fn check_schema(&self, names: &[String]) -> Result<()> {
        for (j, expected) in names.iter().enumerate() {
            match self.columns.get(j) {
                Some(c) if &c.name == expected => {}
                Some(c) => {
                    return Err(Error::Schema(format!(
                        "column {j}: expected `{expected}`, found `{}`",
                        c.name
                    )))
                }
                None => {
                    return Err(Error::Schema(format!(
                        "column {j}: expected `{expected}`, input has only {} columns",
                        self.n_cols()
                    )))
                }
            }
        }
        if self.n_cols() > names.len() {
            return Err(Error::Schema(format!(
                "unexpected extra column `{}`",
                self.columns[names.len()].name
            )));
        }
        Ok(())
    }
}

/// Compressed sparse view of a design's columns, used by the coordinate
/// descent and IRLS solvers where most columns are indicators.
#[derive(Debug, Clone)]
pub(crate) struct SparseColumns {
    pub(crate) index: Vec<Vec<u32>>,
    pub(crate) value: Vec<Vec<f64>>,
}

impl SparseColumns {
    pub(crate) fn from_design(x: &Design) -> Self {
        let mut index = Vec::with_capacity(x.n_cols());
        let mut value = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let (mut idx, mut val) = (Vec::new(), Vec::new());
            for (i, &v) in x.col(j).iter().enumerate() {
                if v != 0.0 {
                    idx.push(i as u32);
                    val.push(v);
                }
            }
            index.push(idx);
            value.push(val);
        }
        SparseColumns { index, value }
    }

    pub(crate) fn scale_columns(&mut self, scale: &[f64]) {
        for (vals, s) in self.value.iter_mut().zip(scale) {
            for v in vals.iter_mut() {
                *v /= s;
            }
        }
    }
}
