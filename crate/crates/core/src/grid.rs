//! Dose-combination grid indexing.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dose combination `(j, k)`: level `j` of drug A and level `k` of drug B.
///
/// Indices are zero-based in memory and on the wire; `Display` prints the
/// conventional one-based `d(j,k)` label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dose {
    pub j: usize,
    pub k: usize,
}

impl Dose {
    pub const fn new(j: usize, k: usize) -> Self {
        Dose { j, k }
    }

    /// Componentwise order: `self <= other` on both axes.
    pub fn le_componentwise(&self, other: &Dose) -> bool {
        self.j <= other.j && self.k <= other.k
    }
}

impl fmt::Display for Dose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d({},{})", self.j + 1, self.k + 1)
    }
}

/// Shape of the combination grid: `rows` levels of drug A, `cols` of drug B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoseGrid {
    pub rows: usize,
    pub cols: usize,
}

impl DoseGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("grid", "both dimensions must be at least 1"));
        }
        Ok(DoseGrid { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, d: Dose) -> bool {
        d.j < self.rows && d.k < self.cols
    }

    pub fn linear(&self, d: Dose) -> usize {
        d.j * self.cols + d.k
    }

    /// Row-major iteration over every dose.
    pub fn doses(self) -> impl Iterator<Item = Dose> {
        (0..self.rows).flat_map(move |j| (0..self.cols).map(move |k| Dose::new(j, k)))
    }

    /// One-step escalation neighbours `(j+1,k)` and `(j,k+1)` inside the grid.
    pub fn up_neighbors(&self, d: Dose) -> Vec<Dose> {
        let mut out = Vec::with_capacity(2);
        if d.j + 1 < self.rows {
            out.push(Dose::new(d.j + 1, d.k));
        }
        if d.k + 1 < self.cols {
            out.push(Dose::new(d.j, d.k + 1));
        }
        out
    }

    /// One-step de-escalation neighbours `(j−1,k)` and `(j,k−1)`.
    pub fn down_neighbors(&self, d: Dose) -> Vec<Dose> {
        let mut out = Vec::with_capacity(2);
        if d.j > 0 {
            out.push(Dose::new(d.j - 1, d.k));
        }
        if d.k > 0 {
            out.push(Dose::new(d.j, d.k - 1));
        }
        out
    }

    /// Upward-closed cone `{(j', k') : j' >= j, k' >= k}`.
    pub fn cone(self, d: Dose) -> impl Iterator<Item = Dose> {
        self.doses().filter(move |e| d.le_componentwise(e))
    }
}

/// Dense row-major matrix over a [`DoseGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<V> {
    pub grid: DoseGrid,
    pub data: Vec<V>,
}

impl<V: Clone> Matrix<V> {
    pub fn filled(grid: DoseGrid, value: V) -> Self {
        Matrix {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<V>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(Vec::len).unwrap_or(0);
        let grid = DoseGrid::new(n_rows, n_cols)?;
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::param("matrix", "ragged rows"));
        }
        Ok(Matrix {
            grid,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<V>> {
        self.data
            .chunks(self.grid.cols)
            .map(|c| c.to_vec())
            .collect()
    }

    pub fn map<W, F: FnMut(&V) -> W>(&self, f: F) -> Matrix<W> {
        Matrix {
            grid: self.grid,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<V> Index<Dose> for Matrix<V> {
    type Output = V;

    fn index(&self, d: Dose) -> &V {
        &self.data[d.j * self.grid.cols + d.k]
    }
}

impl<V> IndexMut<Dose> for Matrix<V> {
    fn index_mut(&mut self, d: Dose) -> &mut V {
        &mut self.data[d.j * self.grid.cols + d.k]
    }
}
