//! Dose retainment probabilities and early-completion decision tables.
//!
//! The dose retainment probability (DRP) is the beta-binomial predictive
//! probability that, after the `l` remaining patients are treated at the
//! current dose, its DLT total lands in the retainment set for `n + l`
//! patients. DRP-I replaces the observed DLT count by `n` times the
//! isotonic-adjusted rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{DecisionRules, DesignParams, Decision, RetainmentSet};
use crate::error::{Error, Result};
use crate::isotonic::{pava_1d, Direction};
use crate::scalar::Real;
use crate::special::{ln_beta, ln_choose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionVariant {
    Off,
    Drp,
    DrpI,
}

impl fmt::Display for CompletionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompletionVariant::Off => "off",
            CompletionVariant::Drp => "drp",
            CompletionVariant::DrpI => "drp_i",
        })
    }
}

impl std::str::FromStr for CompletionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "off" | "none" => Ok(CompletionVariant::Off),
            "drp" | "ec" => Ok(CompletionVariant::Drp),
            "drp_i" | "drpi" | "eci" => Ok(CompletionVariant::DrpI),
            other => Err(Error::param("variant", format!("unknown early-completion variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig<T> {
    pub variant: CompletionVariant,
    /// Completion threshold on the retainment probability.
    pub tau: T,
    /// Compare the PAVA-smoothed curve (over remaining patients) instead of
    /// the raw probability at the actual remainder.
    #[serde(default)]
    pub runtime_smoothing: bool,
}

impl<T: Real> CompletionConfig<T> {
    pub fn new(variant: CompletionVariant, tau: T) -> Self {
        CompletionConfig {
            variant,
            tau,
            runtime_smoothing: false,
        }
    }

    pub fn off() -> Self {
        Self::new(CompletionVariant::Off, T::lit(0.4))
    }

    pub fn validate(&self) -> Result<()> {
        // tau above 1 is accepted: it disables completion without changing the variant.
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::param("tau", "must be positive and finite"));
        }
        Ok(())
    }
}

impl<T: Real> Default for CompletionConfig<T> {
    fn default() -> Self {
        Self::new(CompletionVariant::Drp, T::lit(0.4))
    }
}

/// Position of the current dose relative to the admissible grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryStatus {
    Interior,
    /// No admissible escalation candidate: escalation totals also count as retained.
    #[serde(alias = "max")]
    MaxCombination,
    /// No admissible de-escalation candidate: de-escalation totals also count.
    #[serde(alias = "min")]
    MinCombination,
}

impl std::str::FromStr for BoundaryStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "interior" | "none" => Ok(BoundaryStatus::Interior),
            "max" | "max_combination" => Ok(BoundaryStatus::MaxCombination),
            "min" | "min_combination" => Ok(BoundaryStatus::MinCombination),
            other => Err(Error::param("boundary", format!("unknown boundary status `{other}`"))),
        }
    }
}

/// Remaining-patient grid used when tabulating completion thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridStep {
    /// Every remaining-patient count `0, 1, 2, …`.
    #[default]
    Patient,
    /// Whole cohorts only: `0, c, 2c, …`.
    Cohort,
}

impl fmt::Display for GridStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridStep::Patient => "patient",
            GridStep::Cohort => "cohort",
        })
    }
}

impl std::str::FromStr for GridStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "patient" => Ok(GridStep::Patient),
            "cohort" => Ok(GridStep::Cohort),
            other => Err(Error::param("step", format!("unknown grid step `{other}`"))),
        }
    }
}

/// Beta-binomial mass of `k` events in `n_trials` with Beta(a, b) mixing.
///
/// `k` may be fractional; the binomial coefficient is the gamma
/// generalization. Mass outside `[0, n_trials]` is zero.
pub fn beta_binom_pmf<T: Real>(k: T, n_trials: usize, a: T, b: T) -> T {
    let n = T::from_count(n_trials);
    // absorb round-off from r − m_eff
    let slack = T::epsilon() * T::lit(64.0) * (n + T::one());
    if k < -slack || k > n + slack {
        return T::zero();
    }
    let k = k.max(T::zero()).min(n);
    (ln_choose(n, k) + ln_beta(k + a, n - k + b) - ln_beta(a, b)).exp()
}

/// Retainment totals augmented for boundary doses.
fn augmented_set<T: Real>(rules: &DecisionRules<T>, total_n: usize, status: BoundaryStatus) -> Vec<usize> {
    let mut set = rules.members(total_n, Decision::Retain);
    match status {
        BoundaryStatus::Interior => {}
        BoundaryStatus::MaxCombination => set.extend(rules.members(total_n, Decision::Escalate)),
        BoundaryStatus::MinCombination => set.extend(rules.members(total_n, Decision::DeEscalate)),
    }
    set.sort_unstable();
    set.dedup();
    set
}

fn check_counts<T: Real>(n: usize, m_eff: T) -> Result<()> {
    if !(m_eff >= T::zero() && m_eff <= T::from_count(n)) {
        return Err(Error::param("m_eff", format!("must lie in [0, {n}], got {m_eff}")));
    }
    Ok(())
}

fn sum_over<T: Real>(members: &[usize], n: usize, m_eff: T, l: usize, status: BoundaryStatus) -> T {
    let a = m_eff + T::one();
    let b = T::from_count(n) - m_eff + T::one();
    let total = members
        .iter()
        .map(|&r| beta_binom_pmf(T::from_count(r) - m_eff, l, a, b))
        .fold(T::zero(), |acc, p| acc + p);
    let total = total.min(T::one());
    match status {
        BoundaryStatus::Interior => total,
        _ => total / T::lit(2.0),
    }
}

/// Dose retainment probability with an explicit retainment set for `n + l`.
pub fn drp<T: Real>(
    n: usize,
    m_eff: T,
    l: usize,
    retain: &RetainmentSet,
    status: BoundaryStatus,
    params: &DesignParams<T>,
) -> Result<T> {
    check_counts(n, m_eff)?;
    if retain.total_n != n + l {
        return Err(Error::param(
            "retainment_set",
            format!("set is for {} patients, expected n + l = {}", retain.total_n, n + l),
        ));
    }
    let mut members = retain.members.clone();
    if status != BoundaryStatus::Interior {
        let rules = DecisionRules::new(params, n + l)?;
        members = augmented_set(&rules, n + l, status);
    }
    Ok(sum_over(&members, n, m_eff, l, status))
}

/// DRP with the observed count replaced by `n · adjusted_rate`.
#[allow(clippy::too_many_arguments)]
pub fn drp_i<T: Real>(
    n: usize,
    m: usize,
    l: usize,
    adjusted_rate: T,
    retain: &RetainmentSet,
    status: BoundaryStatus,
    params: &DesignParams<T>,
) -> Result<T> {
    drp(n, effective_count(n, m, adjusted_rate)?, l, retain, status, params)
}

/// `n · rate`, snapped to the observed `m` when they agree up to round-off.
pub fn effective_count<T: Real>(n: usize, m: usize, rate: T) -> Result<T> {
    if !(rate >= T::zero() && rate <= T::one()) {
        return Err(Error::param("adjusted_rate", "must lie in [0, 1]"));
    }
    let nf = T::from_count(n);
    let m_eff = nf * rate;
    let mf = T::from_count(m);
    if (m_eff - mf).abs() <= T::epsilon() * T::lit(8.0) * (nf + T::one()) {
        Ok(mf)
    } else {
        Ok(m_eff)
    }
}

/// DRP from cached decision rules (retainment set derived internally).
pub fn drp_with_rules<T: Real>(
    rules: &DecisionRules<T>,
    n: usize,
    m_eff: T,
    l: usize,
    status: BoundaryStatus,
) -> Result<T> {
    check_counts(n, m_eff)?;
    let members = augmented_set(rules, n + l, status);
    Ok(sum_over(&members, n, m_eff, l, status))
}

/// Raw DRP at each remaining count of `grid`.
pub fn drp_curve<T: Real>(
    rules: &DecisionRules<T>,
    n: usize,
    m_eff: T,
    grid: &[usize],
    status: BoundaryStatus,
) -> Result<Vec<T>> {
    grid.iter()
        .map(|&l| drp_with_rules(rules, n, m_eff, l, status))
        .collect()
}

/// Non-increasing PAVA smoothing of a DRP curve (equal weights).
pub fn smooth_curve<T: Real>(curve: &[T]) -> Result<Vec<T>> {
    let w = vec![T::one(); curve.len()];
    pava_1d(curve, &w, Direction::NonIncreasing)
}

/// DRP at `l` read off the smoothed per-patient curve over `0..=l`.
pub fn smoothed_drp<T: Real>(
    rules: &DecisionRules<T>,
    n: usize,
    m_eff: T,
    l: usize,
    status: BoundaryStatus,
) -> Result<T> {
    let grid: Vec<usize> = (0..=l).collect();
    let curve = drp_curve(rules, n, m_eff, &grid, status)?;
    Ok(*smooth_curve(&curve)?.last().expect("non-empty grid"))
}

pub fn remaining_grid(max_remaining: usize, cohort_size: usize, step: GridStep) -> Vec<usize> {
    let stride = match step {
        GridStep::Patient => 1,
        GridStep::Cohort => cohort_size.max(1),
    };
    (0..=max_remaining).step_by(stride).collect()
}

/// One `(n, m)` line of an early-completion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRow<T> {
    pub n: usize,
    pub m: usize,
    /// Largest remaining-patient count whose smoothed DRP reaches `tau`.
    pub max_remaining: Option<usize>,
    /// True when at least one full cohort of remaining patients qualifies.
    pub full_cohort: bool,
    pub remaining: Vec<usize>,
    pub raw: Vec<T>,
    pub smoothed: Vec<T>,
}

/// Early-completion table rows grouped by `n`, as printed in a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionTable<T> {
    pub design: DesignParams<T>,
    pub sample_size: usize,
    pub cohort_size: usize,
    pub tau: T,
    pub step: GridStep,
    pub rows: Vec<CompletionRow<T>>,
}

/// A grouped line: all retaining DLT counts at `n` and the remainder up to
/// which every one of them completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub n: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub max_remaining: Option<usize>,
}

impl<T: Real> CompletionTable<T> {
    pub fn row(&self, n: usize, m: usize) -> Option<&CompletionRow<T>> {
        self.rows.iter().find(|r| r.n == n && r.m == m)
    }

    pub fn summary(&self) -> Vec<CompletionSummary> {
        let mut out: Vec<CompletionSummary> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some(s) if s.n == row.n => {
                    s.m_max = row.m;
                    s.max_remaining = match (s.max_remaining, row.max_remaining) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        _ => None,
                    };
                }
                _ => out.push(CompletionSummary {
                    n: row.n,
                    m_min: row.m,
                    m_max: row.m,
                    max_remaining: row.max_remaining,
                }),
            }
        }
        out
    }
}

impl<T: Real> fmt::Display for CompletionTable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "[{}] N = {}, tau = {}, grid = {}",
            self.design.kind, self.sample_size, self.tau, self.step
        )?;
        writeln!(f, "{:>10}  {:>8}  {:>10}", "#patients", "#DLTs", "#remaining")?;
        for s in self.summary() {
            let dlts = if s.m_min == s.m_max {
                s.m_min.to_string()
            } else {
                format!("{}-{}", s.m_min, s.m_max)
            };
            let rem = match s.max_remaining {
                Some(l) => format!("<= {l}"),
                None => "-".to_string(),
            };
            writeln!(f, "{:>10}  {:>8}  {:>10}", s.n, dlts, rem)?;
        }
        Ok(())
    }
}

/// Early-completion decision table.
///
/// For every `n` in `n_grid` and every retaining DLT count `m`, the DRP is
/// evaluated over the remaining-patient grid, smoothed to be non-increasing,
/// and the largest remainder still reaching `tau` is reported.
pub fn completion_table<T: Real>(
    params: &DesignParams<T>,
    sample_size: usize,
    cohort_size: usize,
    tau: T,
    step: GridStep,
    n_grid: &[usize],
) -> Result<CompletionTable<T>> {
    if cohort_size == 0 || !sample_size.is_multiple_of(cohort_size) {
        return Err(Error::param("sample_size", "must be a positive multiple of the cohort size"));
    }
    let rules = DecisionRules::new(params, sample_size)?;
    let mut rows = Vec::new();
    for &n in n_grid {
        if n == 0 || n > sample_size {
            return Err(Error::param("n_grid", format!("{n} outside 1..={sample_size}")));
        }
        let remaining = remaining_grid(sample_size - n, cohort_size, step);
        for m in rules.members(n, Decision::Retain) {
            let raw = drp_curve(&rules, n, T::from_count(m), &remaining, BoundaryStatus::Interior)?;
            let smoothed = smooth_curve(&raw)?;
            let max_remaining = remaining
                .iter()
                .zip(&smoothed)
                .filter(|(_, s)| **s >= tau)
                .map(|(l, _)| *l)
                .max();
            rows.push(CompletionRow {
                n,
                m,
                max_remaining,
                full_cohort: max_remaining.is_some_and(|l| l >= cohort_size),
                remaining: remaining.clone(),
                raw,
                smoothed,
            });
        }
    }
    Ok(CompletionTable {
        design: *params,
        sample_size,
        cohort_size,
        tau,
        step,
        rows,
    })
}
