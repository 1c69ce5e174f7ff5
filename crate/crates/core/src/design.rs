//! BOIN and Keyboard decision rules for a single dose combination.
//!
//! Both designs reduce the data at a dose to a three-way decision
//! (escalate, retain, de-escalate). BOIN compares the observed rate `m/n`
//! against the boundaries `(λ_e, λ_d)`; Keyboard compares posterior masses of
//! equal-width "keys" and retains when the target key is the strongest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{beta_cdf, beta_interval_mass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Boin,
    Keyboard,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignKind::Boin => f.write_str("boin"),
            DesignKind::Keyboard => f.write_str("keyboard"),
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boin" => Ok(DesignKind::Boin),
            "keyboard" | "key" => Ok(DesignKind::Keyboard),
            other => Err(Error::param("design", format!("unknown design `{other}`"))),
        }
    }
}

/// Design configuration shared by every dose in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams<T> {
    pub kind: DesignKind,
    /// Target toxicity level.
    pub phi: T,
    /// BOIN highest rate deemed sub-therapeutic.
    pub phi1: T,
    /// BOIN lowest rate deemed overly toxic.
    pub phi2: T,
    /// Keyboard key width.
    pub key_width: T,
    /// Posterior overdose probability above which a dose is eliminated.
    pub elim_cutoff: T,
    pub prior_a: T,
    pub prior_b: T,
}

impl<T: Real> DesignParams<T> {
    /// Defaults: `φ1 = 0.6φ`, `φ2 = 1.4φ`, key width 0.1, cutoff 0.95, Beta(1,1).
    pub fn new(kind: DesignKind, phi: T) -> Self {
        DesignParams {
            kind,
            phi,
            phi1: T::lit(0.6) * phi,
            phi2: T::lit(1.4) * phi,
            key_width: T::lit(0.1),
            elim_cutoff: T::lit(0.95),
            prior_a: T::one(),
            prior_b: T::one(),
        }
    }

    pub fn boin(phi: T) -> Self {
        Self::new(DesignKind::Boin, phi)
    }

    pub fn keyboard(phi: T) -> Self {
        Self::new(DesignKind::Keyboard, phi)
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if !(zero < self.phi1 && self.phi1 < self.phi && self.phi < self.phi2 && self.phi2 < one) {
            return Err(Error::param("phi", "require 0 < phi1 < phi < phi2 < 1"));
        }
        if !(self.key_width > zero && self.key_width < one) {
            return Err(Error::param("key_width", "must lie in (0, 1)"));
        }
        if !(self.elim_cutoff > zero && self.elim_cutoff < one) {
            return Err(Error::param("elim_cutoff", "must lie in (0, 1)"));
        }
        if !(self.prior_a > zero && self.prior_b > zero) {
            return Err(Error::param("prior", "beta prior parameters must be positive"));
        }
        Ok(())
    }

    /// Proper dosing interval: `(λ_e, λ_d)` for BOIN, the target key for Keyboard.
    pub fn proper_interval(&self) -> Result<(T, T)> {
        match self.kind {
            DesignKind::Boin => {
                let b = boin_boundaries(self)?;
                Ok((b.lambda_e, b.lambda_d))
            }
            DesignKind::Keyboard => {
                let half = self.key_width / T::lit(2.0);
                Ok((self.phi - half, self.phi + half))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundaries<T> {
    pub lambda_e: T,
    pub lambda_d: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Escalate,
    Retain,
    DeEscalate,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Escalate => "escalate",
            Decision::Retain => "retain",
            Decision::DeEscalate => "de-escalate",
        })
    }
}

/// DLT totals at `total_n` patients for which the design retains the dose.
///
/// Always a contiguous, possibly empty, integer range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainmentSet {
    pub total_n: usize,
    pub members: Vec<usize>,
}

impl RetainmentSet {
    pub fn contains(&self, m: usize) -> bool {
        self.members.binary_search(&m).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl fmt::Display for RetainmentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.members.first(), self.members.last()) {
            (None, _) | (_, None) => f.write_str("-"),
            (Some(a), Some(b)) if a == b => write!(f, "{a}"),
            (Some(a), Some(b)) => write!(f, "{a}-{b}"),
        }
    }
}

/// Closed-form BOIN boundaries.
///
/// `λ_e = ln((1−φ1)/(1−φ)) / ln(φ(1−φ1) / (φ1(1−φ)))`,
/// `λ_d = ln((1−φ)/(1−φ2)) / ln(φ2(1−φ) / (φ(1−φ2)))`.
pub fn boin_boundaries<T: Real>(params: &DesignParams<T>) -> Result<Boundaries<T>> {
    params.validate()?;
    let one = T::one();
    let DesignParams { phi, phi1, phi2, .. } = *params;
    let lambda_e = ((one - phi1) / (one - phi)).ln() / (phi * (one - phi1) / (phi1 * (one - phi))).ln();
    let lambda_d = ((one - phi) / (one - phi2)).ln() / (phi2 * (one - phi) / (phi * (one - phi2))).ln();
    Ok(Boundaries { lambda_e, lambda_d })
}

/// Keyboard keys tiled outward from the target key.
///
/// Returns the keys in increasing order together with the index of the
/// target key. Edge strips narrower than a full key are not keys.
pub fn keyboard_keys<T: Real>(params: &DesignParams<T>) -> (Vec<(T, T)>, usize) {
    let w = params.key_width;
    let slack = T::lit(1e-9);
    let target_lo = params.phi - w / T::lit(2.0);
    let target_hi = params.phi + w / T::lit(2.0);
    let mut below = Vec::new();
    let mut i = 1usize;
    loop {
        let lo = target_lo - w * T::from_count(i);
        if lo < -slack {
            break;
        }
        below.push((lo.max(T::zero()), target_lo - w * T::from_count(i - 1)));
        i += 1;
    }
    below.reverse();
    let target = below.len();
    let mut keys = below;
    keys.push((target_lo, target_hi));
    let mut i = 1usize;
    loop {
        let hi = target_hi + w * T::from_count(i);
        if hi > T::one() + slack {
            break;
        }
        keys.push((target_hi + w * T::from_count(i - 1), hi.min(T::one())));
        i += 1;
    }
    (keys, target)
}

/// Beta(a+m, b+n−m) measure of `(lo, hi)`. Untried doses use `n = m = 0`.
pub fn interval_posterior_prob<T: Real>(n: usize, m: usize, interval: (T, T), prior: (T, T)) -> Result<T> {
    let (lo, hi) = interval;
    if !(lo >= T::zero() && lo < hi && hi <= T::one()) {
        return Err(Error::param("interval", "require 0 <= lo < hi <= 1"));
    }
    if m > n {
        return Err(Error::Precondition(format!("m = {m} exceeds n = {n}")));
    }
    let (a, b) = posterior(n, m, prior);
    Ok(beta_interval_mass(a, b, lo, hi))
}

fn posterior<T: Real>(n: usize, m: usize, prior: (T, T)) -> (T, T) {
    (prior.0 + T::from_count(m), prior.1 + T::from_count(n - m))
}

/// Escalate / retain / de-escalate after `m` DLTs in `n` patients.
pub fn decide<T: Real>(params: &DesignParams<T>, n: usize, m: usize) -> Result<Decision> {
    if n == 0 {
        return Err(Error::Precondition("decide requires n >= 1".into()));
    }
    if m > n {
        return Err(Error::Precondition(format!("m = {m} exceeds n = {n}")));
    }
    match params.kind {
        DesignKind::Boin => {
            let b = boin_boundaries(params)?;
            Ok(boin_decision(&b, n, m))
        }
        DesignKind::Keyboard => {
            params.validate()?;
            let (keys, target) = keyboard_keys(params);
            Ok(keyboard_decision(params, &keys, target, n, m))
        }
    }
}

fn boin_decision<T: Real>(b: &Boundaries<T>, n: usize, m: usize) -> Decision {
    let rate = T::from_count(m) / T::from_count(n);
    if rate <= b.lambda_e {
        Decision::Escalate
    } else if rate >= b.lambda_d {
        Decision::DeEscalate
    } else {
        Decision::Retain
    }
}

fn keyboard_decision<T: Real>(
    params: &DesignParams<T>,
    keys: &[(T, T)],
    target: usize,
    n: usize,
    m: usize,
) -> Decision {
    let (a, b) = posterior(n, m, (params.prior_a, params.prior_b));
    // CDF at each key edge once; adjacent keys share edges.
    let masses: Vec<T> = keys
        .iter()
        .map(|&(lo, hi)| (beta_cdf(a, b, hi) - beta_cdf(a, b, lo)).max(T::zero()))
        .collect();
    let best = masses.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = T::tie_tolerance();
    let strongest = if masses[target] >= best - tol {
        target
    } else {
        masses
            .iter()
            .position(|&p| p >= best - tol)
            .expect("non-empty keys")
    };
    match strongest.cmp(&target) {
        std::cmp::Ordering::Less => Decision::Escalate,
        std::cmp::Ordering::Equal => Decision::Retain,
        std::cmp::Ordering::Greater => Decision::DeEscalate,
    }
}

/// Set of DLT totals at `total_n` yielding `which`.
fn outcome_set<T: Real>(params: &DesignParams<T>, total_n: usize, which: Decision) -> Result<Vec<usize>> {
    if total_n == 0 {
        return Err(Error::Precondition("total_n must be >= 1".into()));
    }
    let rules = DecisionRules::new(params, total_n)?;
    Ok(rules.members(total_n, which))
}

pub fn retainment_set<T: Real>(params: &DesignParams<T>, total_n: usize) -> Result<RetainmentSet> {
    Ok(RetainmentSet {
        total_n,
        members: outcome_set(params, total_n, Decision::Retain)?,
    })
}

pub fn escalation_set<T: Real>(params: &DesignParams<T>, total_n: usize) -> Result<Vec<usize>> {
    outcome_set(params, total_n, Decision::Escalate)
}

pub fn deescalation_set<T: Real>(params: &DesignParams<T>, total_n: usize) -> Result<Vec<usize>> {
    outcome_set(params, total_n, Decision::DeEscalate)
}

/// Overdose control: posterior `P(p > φ)` strictly above the cutoff, with at
/// least three patients treated at the dose.
pub fn eliminate_test<T: Real>(params: &DesignParams<T>, n: usize, m: usize) -> bool {
    if n < 3 || m > n {
        return false;
    }
    let (a, b) = posterior(n, m, (params.prior_a, params.prior_b));
    let tail = T::one() - beta_cdf(a, b, params.phi);
    tail > params.elim_cutoff
}

/// Precomputed decisions for every `(n, m)` with `1 <= n <= n_max`.
///
/// Keyboard decisions cost a dozen incomplete-beta evaluations each, and the
/// early-completion rule needs whole retainment sets at many totals, so the
/// trial engine and table generators work from this cache.
#[derive(Debug, Clone)]
pub struct DecisionRules<T> {
    params: DesignParams<T>,
    proper: (T, T),
    // rows[n - 1][m]
    rows: Vec<Vec<Decision>>,
}

impl<T: Real> DecisionRules<T> {
    pub fn new(params: &DesignParams<T>, n_max: usize) -> Result<Self> {
        params.validate()?;
        let proper = params.proper_interval()?;
        let rows = match params.kind {
            DesignKind::Boin => {
                let b = boin_boundaries(params)?;
                (1..=n_max)
                    .map(|n| (0..=n).map(|m| boin_decision(&b, n, m)).collect())
                    .collect()
            }
            DesignKind::Keyboard => {
                let (keys, target) = keyboard_keys(params);
                (1..=n_max)
                    .map(|n| {
                        (0..=n)
                            .map(|m| keyboard_decision(params, &keys, target, n, m))
                            .collect()
                    })
                    .collect()
            }
        };
        Ok(DecisionRules {
            params: *params,
            proper,
            rows,
        })
    }

    pub fn params(&self) -> &DesignParams<T> {
        &self.params
    }

    pub fn proper_interval(&self) -> (T, T) {
        self.proper
    }

    pub fn n_max(&self) -> usize {
        self.rows.len()
    }

    pub fn decide(&self, n: usize, m: usize) -> Result<Decision> {
        if n == 0 || m > n {
            return Err(Error::Precondition(format!("invalid (n, m) = ({n}, {m})")));
        }
        match self.rows.get(n - 1) {
            Some(row) => Ok(row[m]),
            None => decide(&self.params, n, m),
        }
    }

    pub fn members(&self, total_n: usize, which: Decision) -> Vec<usize> {
        match self.rows.get(total_n.wrapping_sub(1)) {
            Some(row) => row
                .iter()
                .enumerate()
                .filter(|(_, d)| **d == which)
                .map(|(m, _)| m)
                .collect(),
            None => (0..=total_n)
                .filter(|&m| decide(&self.params, total_n, m).ok() == Some(which))
                .collect(),
        }
    }

    pub fn retainment_set(&self, total_n: usize) -> RetainmentSet {
        RetainmentSet {
            total_n,
            members: self.members(total_n, Decision::Retain),
        }
    }
}

/// Retainment sets for each entry of `n_grid`.
pub fn decision_table<T: Real>(params: &DesignParams<T>, n_grid: &[usize]) -> Result<Vec<RetainmentSet>> {
    if n_grid.is_empty() {
        return Err(Error::param("n_grid", "must be non-empty"));
    }
    let n_max = n_grid.iter().copied().max().unwrap_or(1);
    let rules = DecisionRules::new(params, n_max)?;
    n_grid
        .iter()
        .map(|&n| {
            if n == 0 {
                Err(Error::Precondition("table entries must be >= 1".into()))
            } else {
                Ok(rules.retainment_set(n))
            }
        })
        .collect()
}
