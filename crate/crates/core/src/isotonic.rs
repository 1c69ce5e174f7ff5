//! Weighted isotonic regression in one dimension (pool adjacent violators)
//! and over the componentwise order of a dose grid.
//!
//! The grid projection is Dykstra's cyclic algorithm. The constraint set
//! `x_u <= x_v` for every cover pair `u ⋖ v` of the tried cells is split
//! into families of vertex-disjoint chains: rows, columns, and (only when
//! untried cells leave gaps) extra families for diagonal cover pairs. Each
//! family's projection is an independent weighted PAVA per chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dose, DoseGrid, Matrix};
use crate::scalar::Real;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_CYCLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

/// Weighted least-squares projection of `values` onto monotone sequences.
pub fn pava_1d<T: Real>(values: &[T], weights: &[T], direction: Direction) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::param("values", "must be non-empty"));
    }
    if values.len() != weights.len() {
        return Err(Error::param("weights", "length differs from values"));
    }
    if weights.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::param("weights", "must be positive"));
    }
    let mut out = values.to_vec();
    match direction {
        Direction::NonDecreasing => pava_in_place(&mut out, weights),
        Direction::NonIncreasing => {
            let neg: Vec<T> = values.iter().map(|v| -*v).collect();
            out = neg;
            pava_in_place(&mut out, weights);
            for v in &mut out {
                *v = -*v;
            }
        }
    }
    Ok(out)
}

/// Non-decreasing weighted PAVA over a stack of pooled blocks.
fn pava_in_place<T: Real>(values: &mut [T], weights: &[T]) {
    // (mean, weight, length)
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, l1 + l2));
        }
    }
    let mut i = 0;
    for (mean, _, len) in blocks {
        for v in &mut values[i..i + len] {
            *v = mean;
        }
        i += len;
    }
}

/// Observed DLT rates over the grid with patient-count weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix<T> {
    pub values: Matrix<T>,
    pub weights: Matrix<T>,
    pub tried: Matrix<bool>,
}

impl<T: Real> RateMatrix<T> {
    /// Raw rates `m/n` weighted by `n` over the cells where `n > 0` and
    /// `include` holds.
    pub fn from_counts(n: &Matrix<usize>, m: &Matrix<usize>, include: impl Fn(Dose) -> bool) -> Result<Self> {
        if n.grid != m.grid {
            return Err(Error::param("counts", "n and m grids differ"));
        }
        let grid = n.grid;
        let mut values = Matrix::filled(grid, T::zero());
        let mut weights = Matrix::filled(grid, T::zero());
        let mut tried = Matrix::filled(grid, false);
        for d in grid.doses() {
            if n[d] > 0 && include(d) {
                if m[d] > n[d] {
                    return Err(Error::param("counts", format!("m exceeds n at {d}")));
                }
                values[d] = T::from_count(m[d]) / T::from_count(n[d]);
                weights[d] = T::from_count(n[d]);
                tried[d] = true;
            }
        }
        Ok(RateMatrix { values, weights, tried })
    }

    fn validate(&self) -> Result<()> {
        let grid = self.values.grid;
        if self.weights.grid != grid || self.tried.grid != grid {
            return Err(Error::param("rate_matrix", "component grids differ"));
        }
        for d in grid.doses() {
            let w = self.weights[d];
            if self.tried[d] != (w > T::zero()) {
                return Err(Error::param("weights", format!("weight must be positive exactly on tried cells ({d})")));
            }
            if self.tried[d] && !self.values[d].is_finite() {
                return Err(Error::param("values", format!("non-finite rate at {d}")));
            }
        }
        if !self.tried.data.iter().any(|&t| t) {
            return Err(Error::param("tried_mask", "no tried cells"));
        }
        Ok(())
    }
}

/// Chains of cell indices; consecutive entries are constrained `x[a] <= x[b]`.
type Family = Vec<Vec<usize>>;

fn chain_families(cells: &[Dose]) -> Vec<Family> {
    let c = cells.len();
    let le = |a: usize, b: usize| cells[a].le_componentwise(&cells[b]);
    let mut covers = Vec::new();
    for u in 0..c {
        for v in 0..c {
            if u == v || !le(u, v) {
                continue;
            }
            let covered = (0..c).all(|w| w == u || w == v || !(le(u, w) && le(w, v)));
            if covered {
                covers.push((u, v));
            }
        }
    }
    // Rows first, then columns, then the remaining diagonal covers greedily.
    let class = |&(u, v): &(usize, usize)| {
        if cells[u].j == cells[v].j {
            0
        } else if cells[u].k == cells[v].k {
            1
        } else {
            2
        }
    };
    covers.sort_by_key(|e| (class(e), e.0, e.1));

    let mut succ: Vec<Vec<Option<usize>>> = Vec::new();
    let mut pred: Vec<Vec<Option<usize>>> = Vec::new();
    for e @ &(u, v) in &covers {
        let first = class(e).min(2);
        let slot = (first..)
            .find(|&f| f >= succ.len() || (succ[f][u].is_none() && pred[f][v].is_none()))
            .expect("unbounded search");
        while succ.len() <= slot {
            succ.push(vec![None; c]);
            pred.push(vec![None; c]);
        }
        succ[slot][u] = Some(v);
        pred[slot][v] = Some(u);
    }
    succ.iter()
        .zip(&pred)
        .map(|(s, p)| {
            (0..c)
                .filter(|&i| p[i].is_none() && s[i].is_some())
                .map(|start| {
                    let mut chain = vec![start];
                    let mut at = start;
                    while let Some(next) = s[at] {
                        chain.push(next);
                        at = next;
                    }
                    chain
                })
                .collect()
        })
        .filter(|f: &Family| !f.is_empty())
        .collect()
}

fn project_family<T: Real>(family: &Family, x: &mut [T], w: &[T]) {
    for chain in family {
        let mut vals: Vec<T> = chain.iter().map(|&i| x[i]).collect();
        let ws: Vec<T> = chain.iter().map(|&i| w[i]).collect();
        pava_in_place(&mut vals, &ws);
        for (&i, v) in chain.iter().zip(vals) {
            x[i] = v;
        }
    }
}

/// Bivariate isotonic regression with the default tolerance and cycle cap.
pub fn bivariate_isotonic<T: Real>(rates: &RateMatrix<T>) -> Result<Matrix<Option<T>>> {
    bivariate_isotonic_with(rates, T::lit(DEFAULT_TOLERANCE), DEFAULT_MAX_CYCLES)
}

/// Projects the tried rates onto arrays nondecreasing in both grid
/// directions, minimizing the weighted squared deviation. Untried cells come
/// back as `None`.
pub fn bivariate_isotonic_with<T: Real>(
    rates: &RateMatrix<T>,
    tolerance: T,
    max_cycles: usize,
) -> Result<Matrix<Option<T>>> {
    rates.validate()?;
    let grid: DoseGrid = rates.values.grid;
    let cells: Vec<Dose> = grid.doses().filter(|&d| rates.tried[d]).collect();
    let y: Vec<T> = cells.iter().map(|&d| rates.values[d]).collect();
    let w: Vec<T> = cells.iter().map(|&d| rates.weights[d]).collect();
    let families = chain_families(&cells);

    let mut x = y.clone();
    match families.len() {
        0 => {}
        1 => project_family(&families[0], &mut x, &w),
        _ => {
            let mut corrections = vec![vec![T::zero(); x.len()]; families.len()];
            for _ in 0..max_cycles {
                let before = x.clone();
                for (family, p) in families.iter().zip(corrections.iter_mut()) {
                    let z: Vec<T> = x.iter().zip(p.iter()).map(|(a, b)| *a + *b).collect();
                    x.clone_from(&z);
                    project_family(family, &mut x, &w);
                    for i in 0..x.len() {
                        p[i] = z[i] - x[i];
                    }
                }
                let change = x
                    .iter()
                    .zip(&before)
                    .map(|(a, b)| (*a - *b).abs())
                    .fold(T::zero(), T::max);
                if change < tolerance {
                    break;
                }
            }
        }
    }

    let mut out = Matrix::filled(grid, None);
    for (d, v) in cells.into_iter().zip(x) {
        out[d] = Some(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn symmetric_pool() {
        let out = pava_1d(&[0.4, 0.2], &[5.0, 5.0], Direction::NonDecreasing).unwrap();
        assert!(close(&out, &[0.3, 0.3], 1e-15));
    }

    #[test]
    fn monotone_input_is_fixed_point() {
        let v = [0.0, 0.1, 0.1, 0.5];
        let out = pava_1d(&v, &[1.0, 2.0, 3.0, 4.0], Direction::NonDecreasing).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn non_increasing_single_pool() {
        let out = pava_1d(&[1.0, 0.6, 0.0, 0.343], &[1.0; 4], Direction::NonIncreasing).unwrap();
        assert!(close(&out, &[1.0, 0.6, 0.1715, 0.1715], 1e-12));
    }

    #[test]
    fn weighted_pool_cascades() {
        // pooling (3, 1) gives 2 which still violates against the leading 2.5
        let out = pava_1d(&[2.5, 3.0, 1.0], &[1.0, 1.0, 1.0], Direction::NonDecreasing).unwrap();
        assert!(close(&out, &[6.5 / 3.0; 3], 1e-12), "{out:?}");
    }

    #[test]
    fn pava_errors() {
        assert!(pava_1d::<f64>(&[], &[], Direction::NonDecreasing).is_err());
        assert!(pava_1d(&[1.0], &[1.0, 2.0], Direction::NonDecreasing).is_err());
        assert!(pava_1d(&[1.0], &[0.0], Direction::NonDecreasing).is_err());
    }

    fn example_counts() -> (Matrix<usize>, Matrix<usize>) {
        let n = Matrix::from_rows(vec![vec![3, 0, 0], vec![6, 9, 3], vec![0, 3, 0]]).unwrap();
        let m = Matrix::from_rows(vec![vec![0, 0, 0], vec![1, 3, 2], vec![0, 2, 0]]).unwrap();
        (n, m)
    }

    #[test]
    fn example_trial_adjustment() {
        let (n, m) = example_counts();
        let rates = RateMatrix::<f64>::from_counts(&n, &m, |_| true).unwrap();
        let adj = bivariate_isotonic(&rates).unwrap();
        let want = [
            (Dose::new(0, 0), 0.000),
            (Dose::new(1, 0), 0.167),
            (Dose::new(1, 1), 0.335),
            (Dose::new(1, 2), 0.664),
            (Dose::new(2, 1), 0.664),
        ];
        for (d, v) in want {
            assert!((adj[d].unwrap() - v).abs() <= 0.005, "{d}: {:?}", adj[d]);
        }
        assert_eq!(adj[Dose::new(0, 1)], None);
    }

    #[test]
    fn two_by_two_row_violation() {
        // rows: (0.4, 0.2) / (0.5, 0.6); columns already ordered after pooling
        let values = Matrix::from_rows(vec![vec![0.4, 0.2], vec![0.5, 0.6]]).unwrap();
        let weights = Matrix::filled(values.grid, 1.0);
        let tried = Matrix::filled(values.grid, true);
        let adj = bivariate_isotonic(&RateMatrix { values, weights, tried }).unwrap();
        let got: Vec<f64> = adj.data.iter().map(|v| v.unwrap()).collect();
        assert!(close(&got, &[0.3, 0.3, 0.5, 0.6], 1e-9), "{got:?}");
    }

    #[test]
    fn gap_cells_still_ordered() {
        // (0,0) and (1,1) tried, both off-diagonal cells untried: only the
        // diagonal cover pair links them.
        let n = Matrix::from_rows(vec![vec![3, 0], vec![0, 3]]).unwrap();
        let m = Matrix::from_rows(vec![vec![2, 0], vec![0, 1]]).unwrap();
        let rates = RateMatrix::<f64>::from_counts(&n, &m, |_| true).unwrap();
        let adj = bivariate_isotonic(&rates).unwrap();
        assert!((adj[Dose::new(0, 0)].unwrap() - 0.5).abs() < 1e-12);
        assert!((adj[Dose::new(1, 1)].unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_tried_cells_is_error() {
        let n = Matrix::filled(DoseGrid::new(2, 2).unwrap(), 0usize);
        let rates = RateMatrix::<f64>::from_counts(&n, &n, |_| true).unwrap();
        assert!(bivariate_isotonic(&rates).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let (n, m) = example_counts();
        let rates = RateMatrix::<f32>::from_counts(&n, &m, |_| true).unwrap();
        let adj = bivariate_isotonic_with(&rates, 1e-6, 1000).unwrap();
        assert!((adj[Dose::new(1, 1)].unwrap() - 1.0 / 3.0).abs() < 1e-5);
    }
}
