//! Combination-trial state machine.
//!
//! A [`TrialState`] is a plain value: [`Engine::apply_cohort`] takes the
//! current state and one cohort's DLT count and returns the next state plus
//! a report of everything decided along the way. All randomness (tie
//! breaking between candidate doses and between MTD candidates) comes from
//! one seeded stream stored inside the state, so a state file replays
//! identically.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{eliminate_test, interval_posterior_prob, DecisionRules, Decision, DesignParams};
use crate::early::{drp_with_rules, effective_count, smoothed_drp, BoundaryStatus, CompletionConfig, CompletionVariant};
use crate::error::{Error, Result};
use crate::grid::{Dose, DoseGrid, Matrix};
use crate::isotonic::{bivariate_isotonic, RateMatrix};
use crate::scalar::Real;

pub const SCHEMA_VERSION: u32 = 1;

/// Adjusted rates closer than this to each other are treated as tied when
/// choosing the MTD (the grid projection converges to 1e-8).
pub const MTD_TIE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig<T> {
    pub grid: DoseGrid,
    pub sample_size: usize,
    pub cohort_size: usize,
    pub design: DesignParams<T>,
    pub completion: CompletionConfig<T>,
    /// Seed of the tie-breaking stream.
    pub seed: u64,
}

impl<T: Real> TrialConfig<T> {
    pub fn validate(&self) -> Result<()> {
        DoseGrid::new(self.grid.rows, self.grid.cols)?;
        if self.cohort_size == 0 {
            return Err(Error::param("cohort_size", "must be at least 1"));
        }
        if self.sample_size == 0 || !self.sample_size.is_multiple_of(self.cohort_size) {
            return Err(Error::param("sample_size", "must be a positive multiple of the cohort size"));
        }
        self.design.validate()?;
        self.completion.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ongoing,
    CompletedFull,
    CompletedEarly,
    TerminatedSafety,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        self != TrialStatus::Ongoing
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialStatus::Ongoing => "ongoing",
            TrialStatus::CompletedFull => "completed_full",
            TrialStatus::CompletedEarly => "completed_early",
            TrialStatus::TerminatedSafety => "terminated_safety",
        })
    }
}

/// Seeded ChaCha stream that serializes as `(seed, word position)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RngSnapshot", into = "RngSnapshot")]
pub struct TrialRng {
    seed: u64,
    inner: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RngSnapshot {
    seed: u64,
    word_pos: u64,
}

impl From<RngSnapshot> for TrialRng {
    fn from(s: RngSnapshot) -> Self {
        let mut rng = TrialRng::new(s.seed);
        rng.inner.set_word_pos(u128::from(s.word_pos));
        rng
    }
}

impl From<TrialRng> for RngSnapshot {
    fn from(r: TrialRng) -> Self {
        RngSnapshot {
            seed: r.seed,
            word_pos: r.inner.get_word_pos() as u64,
        }
    }
}

impl TrialRng {
    pub fn new(seed: u64) -> Self {
        TrialRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform index in `0..len`.
    pub fn index(&mut self, len: usize) -> usize {
        debug_assert!(len > 0);
        self.inner.random_range(0..len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortOutcome {
    pub dlt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event<T> {
    Cohort {
        dose: Dose,
        size: usize,
        dlt_count: usize,
        n: usize,
        m: usize,
    },
    Eliminated {
        trigger: Dose,
        doses: Vec<Dose>,
    },
    CompletionCheck {
        dose: Dose,
        remaining: usize,
        boundary: BoundaryStatus,
        drp: T,
        drp_i: T,
        variant: CompletionVariant,
        tau: T,
        triggered: bool,
    },
    Decision {
        dose: Dose,
        decision: Decision,
    },
    Moved {
        from: Dose,
        to: Dose,
        tie_broken: bool,
    },
    StatusChanged {
        status: TrialStatus,
    },
    MtdSelected {
        dose: Option<Dose>,
        adjusted_rate: Option<T>,
        tie_broken: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry<T> {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState<T> {
    pub schema_version: u32,
    pub config: TrialConfig<T>,
    /// Patients treated per dose.
    pub n: Matrix<usize>,
    /// DLTs per dose.
    pub m: Matrix<usize>,
    pub current: Dose,
    pub eliminated: BTreeSet<Dose>,
    pub enrolled: usize,
    pub status: TrialStatus,
    pub mtd: Option<Dose>,
    pub rng: TrialRng,
    pub log: Vec<LogEntry<T>>,
}

impl<T: Real> TrialState<T> {
    /// Fresh trial at the lowest combination.
    pub fn new(config: TrialConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(TrialState {
            schema_version: SCHEMA_VERSION,
            n: Matrix::filled(config.grid, 0),
            m: Matrix::filled(config.grid, 0),
            current: Dose::new(0, 0),
            eliminated: BTreeSet::new(),
            enrolled: 0,
            status: TrialStatus::Ongoing,
            mtd: None,
            rng: TrialRng::new(config.seed),
            log: Vec::new(),
            config,
        })
    }

    pub fn remaining(&self) -> usize {
        self.config.sample_size - self.enrolled
    }

    pub fn is_admissible(&self, d: Dose) -> bool {
        self.config.grid.contains(d) && !self.eliminated.contains(&d)
    }

    pub fn is_tried(&self, d: Dose) -> bool {
        self.n[d] > 0
    }

    /// Structural checks for states loaded from disk.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        self.config.validate()?;
        let grid = self.config.grid;
        if self.n.grid != grid || self.m.grid != grid || self.n.data.len() != grid.len() || self.m.data.len() != grid.len() {
            return Err(Error::param("counts", "count matrices do not match the grid"));
        }
        if grid.doses().any(|d| self.m[d] > self.n[d]) {
            return Err(Error::param("counts", "DLTs exceed patients at some dose"));
        }
        if self.n.data.iter().sum::<usize>() != self.enrolled || self.enrolled > self.config.sample_size {
            return Err(Error::param("enrolled", "inconsistent with counts or sample size"));
        }
        for d in &self.eliminated {
            if !grid.contains(*d) || grid.cone(*d).any(|e| !self.eliminated.contains(&e)) {
                return Err(Error::param("eliminated", "must be an upward-closed set of grid doses"));
            }
        }
        if !grid.contains(self.current) {
            return Err(Error::param("current", "outside the grid"));
        }
        if self.status == TrialStatus::Ongoing && self.eliminated.contains(&self.current) {
            return Err(Error::param("current", "eliminated dose while ongoing"));
        }
        Ok(())
    }

    fn push(&mut self, event: Event<T>) {
        let seq = self.log.last().map(|e| e.seq + 1).unwrap_or(0);
        self.log.push(LogEntry { seq, event });
    }

    /// Boundary position of `d` within the admissible grid.
    pub fn boundary_status(&self, d: Dose) -> BoundaryStatus {
        let grid = self.config.grid;
        let can_escalate = grid.up_neighbors(d).into_iter().any(|e| self.is_admissible(e));
        let can_deescalate = grid.down_neighbors(d).into_iter().any(|e| self.is_admissible(e));
        if !can_escalate {
            BoundaryStatus::MaxCombination
        } else if !can_deescalate {
            BoundaryStatus::MinCombination
        } else {
            BoundaryStatus::Interior
        }
    }

    /// Raw-rate matrix over tried, non-eliminated doses.
    pub fn rate_matrix(&self) -> Result<RateMatrix<T>> {
        RateMatrix::from_counts(&self.n, &self.m, |d| !self.eliminated.contains(&d))
    }

    /// Isotonic-adjusted rates over tried, non-eliminated doses.
    pub fn adjusted_rates(&self) -> Result<Matrix<Option<T>>> {
        bivariate_isotonic(&self.rate_matrix()?)
    }
}

/// Everything decided while processing one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport<T> {
    pub dose: Dose,
    pub dlt_count: usize,
    pub n: usize,
    pub m: usize,
    pub eliminated: Vec<Dose>,
    pub boundary: Option<BoundaryStatus>,
    pub drp: Option<T>,
    pub drp_i: Option<T>,
    pub early_completion: bool,
    pub decision: Option<Decision>,
    pub next_dose: Option<Dose>,
    pub status: TrialStatus,
    pub mtd: Option<Dose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: TrialState<T>,
    pub report: CohortReport<T>,
}

/// Trial configuration with its decision rules precomputed.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    config: TrialConfig<T>,
    rules: Arc<DecisionRules<T>>,
}

impl<T: Real> Engine<T> {
    pub fn new(config: TrialConfig<T>) -> Result<Self> {
        config.validate()?;
        let rules = Arc::new(DecisionRules::new(&config.design, config.sample_size)?);
        Ok(Engine { config, rules })
    }

    /// Same design and rules with a different tie-breaking seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Engine {
            config: TrialConfig { seed, ..self.config },
            rules: Arc::clone(&self.rules),
        }
    }

    pub fn config(&self) -> &TrialConfig<T> {
        &self.config
    }

    pub fn rules(&self) -> &DecisionRules<T> {
        &self.rules
    }

    pub fn start(&self) -> TrialState<T> {
        TrialState::new(self.config).expect("validated config")
    }

    /// Treats one cohort at the current dose and advances the trial.
    ///
    /// Order: record counts, overdose elimination, early-completion check
    /// (only if the dose survives and patients remain), dose decision and
    /// move, full-enrollment completion. A terminal transition selects the
    /// MTD.
    pub fn apply_cohort(&self, state: &TrialState<T>, outcome: CohortOutcome) -> Result<Transition<T>> {
        if state.config != self.config {
            return Err(Error::param("config", "state was created under a different configuration"));
        }
        if state.status != TrialStatus::Ongoing {
            return Err(Error::TrialNotOngoing(state.status.to_string()));
        }
        let c = self.config.cohort_size;
        if outcome.dlt_count > c {
            return Err(Error::param("dlt_count", format!("must lie in 0..={c}")));
        }
        if state.enrolled + c > self.config.sample_size {
            return Err(Error::Precondition("cohort would exceed the sample size".into()));
        }

        let mut s = state.clone();
        let dose = s.current;
        s.n[dose] += c;
        s.m[dose] += outcome.dlt_count;
        s.enrolled += c;
        let (n, m) = (s.n[dose], s.m[dose]);
        s.push(Event::Cohort {
            dose,
            size: c,
            dlt_count: outcome.dlt_count,
            n,
            m,
        });

        let mut report = CohortReport {
            dose,
            dlt_count: outcome.dlt_count,
            n,
            m,
            eliminated: Vec::new(),
            boundary: None,
            drp: None,
            drp_i: None,
            early_completion: false,
            decision: None,
            next_dose: None,
            status: TrialStatus::Ongoing,
            mtd: None,
        };

        if eliminate_test(&self.config.design, n, m) {
            let newly: Vec<Dose> = self
                .config
                .grid
                .cone(dose)
                .filter(|d| !s.eliminated.contains(d))
                .collect();
            s.eliminated.extend(newly.iter().copied());
            if !newly.is_empty() {
                s.push(Event::Eliminated {
                    trigger: dose,
                    doses: newly.clone(),
                });
            }
            report.eliminated = newly;
            if s.eliminated.contains(&Dose::new(0, 0)) {
                return Ok(self.finish(s, TrialStatus::TerminatedSafety, report));
            }
        }

        let current_eliminated = s.eliminated.contains(&dose);
        let remaining = s.remaining();
        if !current_eliminated && remaining > 0 {
            let boundary = s.boundary_status(dose);
            let drp = self.retainment_probability(&s, dose, T::from_count(m), remaining, boundary)?;
            let adjusted = s.adjusted_rates()?[dose].expect("current dose is tried");
            let m_eff = effective_count(n, m, adjusted)?;
            let drp_i = self.retainment_probability(&s, dose, m_eff, remaining, boundary)?;
            let completion = self.config.completion;
            let value = match completion.variant {
                CompletionVariant::Off => None,
                CompletionVariant::Drp => Some(drp),
                CompletionVariant::DrpI => Some(drp_i),
            };
            let triggered = value.is_some_and(|v| v >= completion.tau);
            s.push(Event::CompletionCheck {
                dose,
                remaining,
                boundary,
                drp,
                drp_i,
                variant: completion.variant,
                tau: completion.tau,
                triggered,
            });
            report.boundary = Some(boundary);
            report.drp = Some(drp);
            report.drp_i = Some(drp_i);
            if triggered {
                report.early_completion = true;
                return Ok(self.finish(s, TrialStatus::CompletedEarly, report));
            }
        }

        let decision = if current_eliminated {
            Decision::DeEscalate
        } else {
            self.rules.decide(n, m)?
        };
        s.push(Event::Decision { dose, decision });
        report.decision = Some(decision);

        let mut rng = s.rng.clone();
        let (next, tie_broken) = next_dose(&s, decision, &self.rules, &mut rng)?;
        s.rng = rng;
        if current_eliminated && next == dose {
            return Ok(self.finish(s, TrialStatus::TerminatedSafety, report));
        }
        if next != dose {
            s.push(Event::Moved {
                from: dose,
                to: next,
                tie_broken,
            });
        }
        s.current = next;
        report.next_dose = Some(next);

        if s.enrolled == self.config.sample_size {
            return Ok(self.finish(s, TrialStatus::CompletedFull, report));
        }
        report.status = s.status;
        Ok(Transition { state: s, report })
    }

    fn retainment_probability(
        &self,
        s: &TrialState<T>,
        dose: Dose,
        m_eff: T,
        remaining: usize,
        boundary: BoundaryStatus,
    ) -> Result<T> {
        let n = s.n[dose];
        if self.config.completion.runtime_smoothing {
            smoothed_drp(&self.rules, n, m_eff, remaining, boundary)
        } else {
            drp_with_rules(&self.rules, n, m_eff, remaining, boundary)
        }
    }

    fn finish(&self, mut s: TrialState<T>, status: TrialStatus, mut report: CohortReport<T>) -> Transition<T> {
        s.status = status;
        s.push(Event::StatusChanged { status });
        let mut rng = s.rng.clone();
        let selection = select_mtd(&s, &mut rng).expect("terminal state has valid counts");
        s.rng = rng;
        let (dose, adjusted_rate, tie_broken) = match selection {
            Some(sel) => (Some(sel.dose), Some(sel.adjusted_rate), sel.tie_broken),
            None => (None, None, false),
        };
        s.mtd = dose;
        s.push(Event::MtdSelected {
            dose,
            adjusted_rate,
            tie_broken,
        });
        report.status = status;
        report.mtd = dose;
        Transition { state: s, report }
    }

    /// Runs a fixed sequence of cohort outcomes from a fresh state, stopping
    /// early if the trial terminates.
    pub fn replay(&self, outcomes: &[usize]) -> Result<TrialState<T>> {
        let mut state = self.start();
        for &dlt in outcomes {
            if state.status.is_terminal() {
                break;
            }
            state = self.apply_cohort(&state, CohortOutcome { dlt_count: dlt })?.state;
        }
        Ok(state)
    }
}

/// Dose for the next cohort given the decision at the current dose.
///
/// Escalation considers `(j+1,k)` and `(j,k+1)`, de-escalation `(j−1,k)` and
/// `(j,k−1)`; each admissible candidate is scored by the posterior mass of
/// the proper dosing interval (prior only when untried) and the best wins.
/// Exact ties are broken uniformly at random. With no admissible candidate
/// the current dose is kept.
pub fn next_dose<T: Real>(
    state: &TrialState<T>,
    decision: Decision,
    rules: &DecisionRules<T>,
    rng: &mut TrialRng,
) -> Result<(Dose, bool)> {
    let grid = state.config.grid;
    let current = state.current;
    let candidates: Vec<Dose> = match decision {
        Decision::Retain => return Ok((current, false)),
        Decision::Escalate => grid.up_neighbors(current),
        Decision::DeEscalate => grid.down_neighbors(current),
    }
    .into_iter()
    .filter(|d| state.is_admissible(*d))
    .collect();
    if candidates.is_empty() {
        return Ok((current, false));
    }
    let params = rules.params();
    let interval = rules.proper_interval();
    let scores = candidates
        .iter()
        .map(|&d| interval_posterior_prob(state.n[d], state.m[d], interval, (params.prior_a, params.prior_b)))
        .collect::<Result<Vec<T>>>()?;
    let best = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let tied: Vec<Dose> = candidates
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= best - T::tie_tolerance())
        .map(|(d, _)| *d)
        .collect();
    if tied.len() == 1 {
        Ok((tied[0], false))
    } else {
        Ok((tied[rng.index(tied.len())], true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtdSelection<T> {
    pub dose: Dose,
    pub adjusted_rate: T,
    pub tie_broken: bool,
}

/// MTD among tried, non-eliminated doses by isotonic-adjusted rate.
///
/// The closest adjusted rate to the target wins. Among equally close
/// candidates: all at or below target → the highest; all above → the
/// lowest; mixed → a uniform draw between the highest below and the lowest
/// above. "Highest"/"lowest" is lexicographic in `(j, k)`, which always
/// yields a maximal/minimal element of the componentwise order.
pub fn select_mtd<T: Real>(state: &TrialState<T>, rng: &mut TrialRng) -> Result<Option<MtdSelection<T>>> {
    if state.status == TrialStatus::TerminatedSafety {
        return Ok(None);
    }
    let rates = state.rate_matrix()?;
    if !rates.tried.data.iter().any(|&t| t) {
        return Ok(None);
    }
    let adjusted = bivariate_isotonic(&rates)?;
    let phi = state.config.design.phi;
    let scored: Vec<(Dose, T)> = state
        .config
        .grid
        .doses()
        .filter_map(|d| adjusted[d].map(|v| (d, v)))
        .collect();
    let best = scored
        .iter()
        .map(|(_, v)| (*v - phi).abs())
        .fold(T::infinity(), T::min);
    let tol = T::lit(MTD_TIE_TOLERANCE).max(T::tie_tolerance());
    let candidates: Vec<(Dose, T)> = scored
        .into_iter()
        .filter(|(_, v)| (*v - phi).abs() <= best + tol)
        .collect();
    let below = candidates.iter().filter(|(_, v)| *v <= phi).max_by_key(|(d, _)| *d).copied();
    let above = candidates.iter().filter(|(_, v)| *v > phi).min_by_key(|(d, _)| *d).copied();
    let (pick, tie_broken) = match (below, above) {
        (Some(b), Some(a)) => {
            if rng.index(2) == 0 {
                (b, true)
            } else {
                (a, true)
            }
        }
        (Some(b), None) => (b, candidates.len() > 1),
        (None, Some(a)) => (a, candidates.len() > 1),
        (None, None) => return Ok(None),
    };
    Ok(Some(MtdSelection {
        dose: pick.0,
        adjusted_rate: pick.1,
        tie_broken,
    }))
}

/// One-shot transition that rebuilds the decision rules from the state's
/// configuration.
pub fn apply_cohort<T: Real>(state: &TrialState<T>, outcome: CohortOutcome) -> Result<Transition<T>> {
    Engine::new(state.config)?.apply_cohort(state, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignKind;

    fn config(variant: CompletionVariant, tau: f64) -> TrialConfig<f64> {
        TrialConfig {
            grid: DoseGrid::new(3, 3).unwrap(),
            sample_size: 30,
            cohort_size: 3,
            design: DesignParams::new(DesignKind::Boin, 0.3),
            completion: CompletionConfig::new(variant, tau),
            seed: 7,
        }
    }

    #[test]
    fn full_toxicity_at_start_terminates() {
        let engine = Engine::new(config(CompletionVariant::Drp, 0.4)).unwrap();
        let t = engine.apply_cohort(&engine.start(), CohortOutcome { dlt_count: 3 }).unwrap();
        assert_eq!(t.state.status, TrialStatus::TerminatedSafety);
        assert_eq!(t.state.eliminated.len(), 9);
        assert_eq!(t.state.mtd, None);
        assert!(engine.apply_cohort(&t.state, CohortOutcome { dlt_count: 0 }).is_err());
    }

    #[test]
    fn dlt_count_bounded_by_cohort() {
        let engine = Engine::new(config(CompletionVariant::Drp, 0.4)).unwrap();
        assert!(engine.apply_cohort(&engine.start(), CohortOutcome { dlt_count: 4 }).is_err());
    }

    #[test]
    fn retain_keeps_dose() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let t = engine.apply_cohort(&engine.start(), CohortOutcome { dlt_count: 1 }).unwrap();
        assert_eq!(t.report.decision, Some(Decision::Retain));
        assert_eq!(t.state.current, Dose::new(0, 0));
    }

    #[test]
    fn escalation_prefers_informative_candidate() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let mut s = engine.start();
        s.current = Dose::new(1, 1);
        s.n[Dose::new(2, 1)] = 3;
        s.m[Dose::new(2, 1)] = 1;
        let mut rng = TrialRng::new(0);
        let (d, tie) = next_dose(&s, Decision::Escalate, engine.rules(), &mut rng).unwrap();
        assert_eq!(d, Dose::new(2, 1));
        assert!(!tie);
    }

    #[test]
    fn untried_candidates_tie() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let s = engine.start();
        let mut seen = BTreeSet::new();
        for seed in 0..32 {
            let mut rng = TrialRng::new(seed);
            let (d, tie) = next_dose(&s, Decision::Escalate, engine.rules(), &mut rng).unwrap();
            assert!(tie);
            seen.insert(d);
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![Dose::new(0, 1), Dose::new(1, 0)]);
    }

    #[test]
    fn deescalation_at_origin_stays() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let s = engine.start();
        let mut rng = TrialRng::new(0);
        assert_eq!(
            next_dose(&s, Decision::DeEscalate, engine.rules(), &mut rng).unwrap(),
            (Dose::new(0, 0), false)
        );
    }

    #[test]
    fn rng_round_trips_through_json() {
        let mut rng = TrialRng::new(42);
        let _ = rng.index(7);
        let json = serde_json::to_string(&rng).unwrap();
        let mut back: TrialRng = serde_json::from_str(&json).unwrap();
        assert_eq!(rng.index(1000), back.index(1000));
    }

    #[test]
    fn mtd_single_dose() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let mut s = engine.start();
        s.n[Dose::new(0, 0)] = 6;
        s.m[Dose::new(0, 0)] = 5;
        s.status = TrialStatus::CompletedFull;
        let sel = select_mtd(&s, &mut TrialRng::new(1)).unwrap().unwrap();
        assert_eq!(sel.dose, Dose::new(0, 0));
    }

    #[test]
    fn mtd_mixed_tie_is_random_between_both() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let mut s = engine.start();
        // (0,0): 1/4 = 0.25, (0,1): 7/20 = 0.35; isotone, equidistant from 0.3
        s.n[Dose::new(0, 0)] = 4;
        s.m[Dose::new(0, 0)] = 1;
        s.n[Dose::new(0, 1)] = 20;
        s.m[Dose::new(0, 1)] = 7;
        s.status = TrialStatus::CompletedFull;
        let mut seen = BTreeSet::new();
        for seed in 0..32 {
            let sel = select_mtd(&s, &mut TrialRng::new(seed)).unwrap().unwrap();
            assert!(sel.tie_broken);
            seen.insert(sel.dose);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn mtd_all_below_takes_highest() {
        let engine = Engine::new(config(CompletionVariant::Off, 0.4)).unwrap();
        let mut s = engine.start();
        for d in [Dose::new(0, 1), Dose::new(1, 0)] {
            s.n[d] = 6;
            s.m[d] = 1;
        }
        s.n[Dose::new(0, 0)] = 3;
        s.status = TrialStatus::CompletedFull;
        let sel = select_mtd(&s, &mut TrialRng::new(3)).unwrap().unwrap();
        assert_eq!(sel.dose, Dose::new(1, 0));
    }

    #[test]
    fn state_json_round_trip() {
        let engine = Engine::new(config(CompletionVariant::DrpI, 0.4)).unwrap();
        let s = engine.replay(&[0, 1, 0]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: TrialState<f64> = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back, s);
    }
}
