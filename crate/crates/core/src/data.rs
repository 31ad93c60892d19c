//! Observation matrix with column roles.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Which columns play the outcome, endogenous, exogenous and instrument roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRoles {
    pub y: usize,
    pub d: Vec<usize>,
    pub x: Vec<usize>,
    pub z: Vec<usize>,
}

impl ColumnRoles {
    fn all(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.y)
            .chain(self.d.iter().copied())
            .chain(self.x.iter().copied())
            .chain(self.z.iter().copied())
    }
}

/// Column-major observation matrix of `(Y, D, X, Z)` plus any auxiliary columns.
///
/// The intercept is never stored; regressions add it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    roles: ColumnRoles,
}

impl QuantileDataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, roles: ColumnRoles) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::Dimension("dataset has no rows".into()));
        }
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Dimension(format!(
                "column `{}` has {} rows, expected {n}",
                names[j],
                c.len()
            )));
        }
        let ds = Self {
            names,
            columns,
            roles: ColumnRoles {
                y: 0,
                d: vec![],
                x: vec![],
                z: vec![],
            },
        };
        ds.with_roles(roles)
    }

    /// Builds a dataset from named columns, resolving roles by name.
    pub fn from_named(
        columns: Vec<(String, Vec<f64>)>,
        y: &str,
        d: &[&str],
        x: &[&str],
        z: &[&str],
    ) -> Result<Self> {
        let (names, cols): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        let find = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Domain(format!("no column named `{name}`")))
        };
        let roles = ColumnRoles {
            y: find(y)?,
            d: d.iter().map(|c| find(c)).collect::<Result<_>>()?,
            x: x.iter().map(|c| find(c)).collect::<Result<_>>()?,
            z: z.iter().map(|c| find(c)).collect::<Result<_>>()?,
        };
        Self::new(names, cols, roles)
    }

    /// Re-assigns roles, checking that they exist, are disjoint, and hold finite values.
    pub fn with_roles(mut self, roles: ColumnRoles) -> Result<Self> {
        let k = self.columns.len();
        let mut seen = BTreeSet::new();
        for c in roles.all() {
            if c >= k {
                return Err(Error::Domain(format!("column index {c} out of range ({k} columns)")));
            }
            if !seen.insert(c) {
                return Err(Error::Domain(format!(
                    "column `{}` is assigned more than one role",
                    self.names[c]
                )));
            }
            if let Some(i) = self.columns[c].iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite value in column `{}` at row {i}",
                    self.names[c]
                )));
            }
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &ColumnRoles {
        &self.roles
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn y(&self) -> &[f64] {
        &self.columns[self.roles.y]
    }

    /// Rows at the given indices (with repetition allowed), same roles.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        Self {
            names: self.names.clone(),
            columns,
            roles: self.roles.clone(),
        }
    }

    /// Sorted distinct values of a column, or `None` when there are more than `limit`.
    pub fn support(&self, j: usize, limit: usize) -> Option<Vec<f64>> {
        let mut vals: Vec<f64> = Vec::new();
        let mut sorted = self.columns[j].clone();
        sorted.sort_by(f64::total_cmp);
        for v in sorted {
            if vals.last() != Some(&v) {
                vals.push(v);
                if vals.len() > limit {
                    return None;
                }
            }
        }
        Some(vals)
    }
}
