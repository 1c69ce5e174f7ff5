//! True-toxicity scenarios for simulation, with JSON and CSV file forms.
//!
//! JSON: `{"name": "...", "matrix": [[p11, p12, ...], [p21, ...], ...]}`,
//! rows indexed by drug A level. CSV: one grid row per line, no header; the
//! scenario takes its name from the file stem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dose, Matrix};
use crate::scalar::Real;

/// Rates within this distance of the best are part of the true MTD set.
const TRUE_MTD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub name: String,
    pub true_p: Matrix<T>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile<T> {
    name: String,
    matrix: Vec<Vec<T>>,
}

impl<T: Real> Scenario<T> {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        let true_p = Matrix::from_rows(rows).map_err(|e| Error::Scenario(e.to_string()))?;
        let s = Scenario {
            name: name.into(),
            true_p,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_p.data.iter().any(|p| !(*p >= T::zero() && *p <= T::one())) {
            return Err(Error::Scenario(format!("{}: rates must lie in [0, 1]", self.name)));
        }
        Ok(())
    }

    /// Whether the true rates are nondecreasing along both grid directions.
    pub fn is_monotone(&self) -> bool {
        let g = self.true_p.grid;
        g.doses().all(|d| {
            g.up_neighbors(d)
                .into_iter()
                .all(|e| self.true_p[d] <= self.true_p[e])
        })
    }

    /// Doses whose true rate is closest to `phi`.
    pub fn true_mtd_set(&self, phi: T) -> Vec<Dose> {
        let g = self.true_p.grid;
        let best = g
            .doses()
            .map(|d| (self.true_p[d] - phi).abs())
            .fold(T::infinity(), T::min);
        g.doses()
            .filter(|&d| (self.true_p[d] - phi).abs() <= best + T::lit(TRUE_MTD_TOLERANCE))
            .collect()
    }

    /// True when some true MTD lies strictly inside `interval`, i.e. the
    /// design would tend to retain once it reaches it.
    pub fn retainment_favorable(&self, phi: T, interval: (T, T)) -> bool {
        self.true_mtd_set(phi)
            .into_iter()
            .any(|d| self.true_p[d] > interval.0 && self.true_p[d] < interval.1)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            name: self.name.clone(),
            matrix: self.true_p.to_rows(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ScenarioFile<T> = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        Scenario::new(f.name, f.matrix)
    }

    pub fn from_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Scenario(e.to_string()))?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| Error::Scenario(format!("bad rate `{cell}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Scenario::new(name, rows)
    }

    /// Loads a `.json` or `.csv` scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario")
            .to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Scenario::from_json(&text),
            Some("csv") => Scenario::from_csv(stem, &text),
            _ => Err(Error::Scenario(format!("{}: expected .json or .csv", path.display()))),
        }
    }
}

/// Every `.json`/`.csv` scenario in `dir`, sorted by file name.
pub fn load_dir<T: Real>(dir: &Path) -> Result<Vec<Scenario<T>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p)).collect()
}

const BELOW: [f64; 4] = [0.20, 0.12, 0.08, 0.05];
const ABOVE: [f64; 3] = [0.45, 0.55, 0.60];

/// Rates by anti-diagonal `j + k`: 0.30 on diagonal `mtd_diag`, stepping
/// down through 0.20, 0.12, 0.08, 0.05 below it and up through 0.45, 0.55,
/// 0.60 above it.
fn ladder<T: Real>(name: &str, rows: usize, cols: usize, mtd_diag: usize) -> Scenario<T> {
    let rate = |s: usize| -> f64 {
        match s.cmp(&mtd_diag) {
            std::cmp::Ordering::Equal => 0.30,
            std::cmp::Ordering::Less => BELOW[(mtd_diag - s - 1).min(BELOW.len() - 1)],
            std::cmp::Ordering::Greater => ABOVE[(s - mtd_diag - 1).min(ABOVE.len() - 1)],
        }
    };
    let m = (0..rows)
        .map(|j| (0..cols).map(|k| T::lit(rate(j + k))).collect())
        .collect();
    Scenario::new(name, m).expect("ladder rates are valid")
}

fn fixed<T: Real>(name: &str, rows: &[&[f64]]) -> Scenario<T> {
    let m = rows
        .iter()
        .map(|r| r.iter().map(|&p| T::lit(p)).collect())
        .collect();
    Scenario::new(name, m).expect("fixed rates are valid")
}

/// Twelve desk-scale scenarios at target 0.30: six 3×4 and six 5×6 grids
/// with the true MTD low, middle, high, off-diagonal, or absent (every
/// dose far below or far above target).
pub fn builtin<T: Real>() -> Vec<Scenario<T>> {
    vec![
        ladder("3x4-low", 3, 4, 0),
        ladder("3x4-lower-middle", 3, 4, 2),
        ladder("3x4-upper-middle", 3, 4, 3),
        ladder("3x4-high", 3, 4, 5),
        fixed(
            "3x4-offdiagonal",
            &[
                &[0.08, 0.15, 0.30, 0.45],
                &[0.15, 0.30, 0.45, 0.55],
                &[0.45, 0.50, 0.55, 0.60],
            ],
        ),
        fixed(
            "3x4-all-safe",
            &[
                &[0.02, 0.03, 0.05, 0.07],
                &[0.03, 0.05, 0.07, 0.09],
                &[0.05, 0.07, 0.09, 0.12],
            ],
        ),
        ladder("5x6-low", 5, 6, 1),
        ladder("5x6-lower-middle", 5, 6, 4),
        ladder("5x6-upper-middle", 5, 6, 6),
        ladder("5x6-high", 5, 6, 9),
        fixed(
            "5x6-asymmetric",
            &[
                &[0.05, 0.08, 0.12, 0.20, 0.30, 0.45],
                &[0.08, 0.12, 0.20, 0.30, 0.45, 0.55],
                &[0.10, 0.15, 0.30, 0.45, 0.55, 0.60],
                &[0.12, 0.20, 0.45, 0.55, 0.60, 0.60],
                &[0.15, 0.30, 0.50, 0.60, 0.60, 0.60],
            ],
        ),
        fixed(
            "5x6-all-toxic",
            &[
                &[0.45, 0.48, 0.50, 0.52, 0.55, 0.58],
                &[0.48, 0.50, 0.52, 0.55, 0.58, 0.60],
                &[0.50, 0.52, 0.55, 0.58, 0.60, 0.60],
                &[0.52, 0.55, 0.58, 0.60, 0.60, 0.60],
                &[0.55, 0.58, 0.60, 0.60, 0.60, 0.60],
            ],
        ),
    ]
}
