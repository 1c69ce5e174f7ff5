//! Monte Carlo operating characteristics.
//!
//! Each replication draws patient outcomes from per-dose uniform streams:
//! the i-th patient ever treated at dose `d` sees the same uniform variate
//! under every design. Designs that differ only in early completion therefore
//! follow the same trajectory until one of them stops.
//!
//! Replication seeds are `mix(base_seed, scenario, replication)` and results
//! are aggregated in replication order, so metrics do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::early::CompletionConfig;
use crate::engine::{CohortOutcome, Engine, TrialConfig, TrialState, TrialStatus};
use crate::error::{Error, Result};
use crate::grid::Dose;
use crate::scalar::Real;
use crate::scenario::Scenario;

/// A labelled design/early-completion pairing, e.g. "BOIN-EC".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec<T> {
    pub label: String,
    pub design: DesignParams<T>,
    pub completion: CompletionConfig<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    pub designs: Vec<DesignSpec<T>>,
    /// Sample size; `None` picks 45 for grids up to 12 doses, 90 above.
    pub sample_size: Option<usize>,
    pub cohort_size: usize,
    pub replications: usize,
    pub base_seed: u64,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.cohort_size == 0 {
            return Err(Error::param("cohort_size", "must be at least 1"));
        }
        if let Some(n) = self.sample_size {
            if n == 0 || n % self.cohort_size != 0 {
                return Err(Error::param("sample_size", "must be a positive multiple of the cohort size"));
            }
        }
        if self.designs.is_empty() {
            return Err(Error::param("designs", "at least one design is required"));
        }
        Ok(())
    }

    pub fn sample_size_for(&self, scenario: &Scenario<T>) -> usize {
        self.sample_size
            .unwrap_or(if scenario.true_p.grid.len() <= 12 { 45 } else { 90 })
    }
}

/// Aggregated operating characteristics for one (scenario, design) pair.
/// Percentages are of replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub design: String,
    pub replications: usize,
    pub sample_size: usize,
    /// Correct MTD selected.
    pub pcms: f64,
    /// Selected dose's true rate below every true MTD's.
    pub lower_pct: f64,
    /// Selected dose's true rate above every true MTD's.
    pub higher_pct: f64,
    /// Not a true MTD yet not strictly lower or higher.
    pub other_pct: f64,
    pub no_mtd_pct: f64,
    pub mean_patients: f64,
    pub patient_change_pct: f64,
    pub early_completion_pct: f64,
}

/// Terminal summary of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub mtd: Option<Dose>,
    pub enrolled: usize,
    pub status: TrialStatus,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one replication of one scenario.
///
/// The design index is deliberately not an input: every design sees the
/// same seed for a given replication (common random numbers).
pub fn replication_seed(base_seed: u64, scenario: usize, replication: usize) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix64(base_seed.wrapping_add(GOLDEN));
    h = mix64(h ^ (scenario as u64).wrapping_add(GOLDEN));
    mix64(h ^ (replication as u64).wrapping_add(GOLDEN))
}

/// Per-dose DLT generators for one replication.
struct PatientStreams {
    seed: u64,
    streams: Vec<Option<ChaCha8Rng>>,
}

impl PatientStreams {
    fn new(seed: u64, doses: usize) -> Self {
        PatientStreams {
            seed,
            streams: (0..doses).map(|_| None).collect(),
        }
    }

    fn dlts(&mut self, dose: usize, patients: usize, rate: f64) -> usize {
        let seed = self.seed;
        let rng = self.streams[dose].get_or_insert_with(|| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            // stream 0 belongs to the engine's tie-breaking stream
            r.set_stream(1 + dose as u64);
            r
        });
        (0..patients).filter(|_| rng.random::<f64>() < rate).count()
    }
}

/// Simulates one trial to completion.
pub fn run_trial<T: Real>(scenario: &Scenario<T>, engine: &Engine<T>, seed: u64) -> Result<TrialState<T>> {
    let engine = engine.with_seed(seed);
    let grid = engine.config().grid;
    if grid != scenario.true_p.grid {
        return Err(Error::Scenario(format!("{}: grid differs from the trial configuration", scenario.name)));
    }
    let cohort = engine.config().cohort_size;
    let mut streams = PatientStreams::new(seed, grid.len());
    let mut state = engine.start();
    while state.status == TrialStatus::Ongoing {
        let d = state.current;
        let dlt_count = streams.dlts(grid.linear(d), cohort, scenario.true_p[d].as_f64());
        state = engine.apply_cohort(&state, CohortOutcome { dlt_count })?.state;
    }
    Ok(state)
}

/// Builds the engine used for every replication of a (scenario, design) pair.
pub fn engine_for<T: Real>(scenario: &Scenario<T>, spec: &DesignSpec<T>, sample_size: usize, cohort_size: usize) -> Result<Engine<T>> {
    Engine::new(TrialConfig {
        grid: scenario.true_p.grid,
        sample_size,
        cohort_size,
        design: spec.design,
        completion: spec.completion,
        seed: 0,
    })
}

fn summarize<T: Real>(
    scenario: &Scenario<T>,
    spec: &DesignSpec<T>,
    sample_size: usize,
    outcomes: &[TrialOutcome],
) -> Metrics {
    let phi = spec.design.phi;
    let truth = scenario.true_mtd_set(phi);
    let true_lo = truth.iter().map(|&d| scenario.true_p[d]).fold(T::infinity(), T::min);
    let true_hi = truth.iter().map(|&d| scenario.true_p[d]).fold(T::neg_infinity(), T::max);
    let (mut correct, mut lower, mut higher, mut other, mut none, mut early) = (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    let mut patients = 0usize;
    for o in outcomes {
        patients += o.enrolled;
        if o.status == TrialStatus::CompletedEarly {
            early += 1;
        }
        match o.mtd {
            None => none += 1,
            Some(d) if truth.contains(&d) => correct += 1,
            Some(d) if scenario.true_p[d] < true_lo => lower += 1,
            Some(d) if scenario.true_p[d] > true_hi => higher += 1,
            Some(_) => other += 1,
        }
    }
    let reps = outcomes.len() as f64;
    let pct = |c: usize| 100.0 * c as f64 / reps;
    let mean_patients = patients as f64 / reps;
    Metrics {
        scenario: scenario.name.clone(),
        design: spec.label.clone(),
        replications: outcomes.len(),
        sample_size,
        pcms: pct(correct),
        lower_pct: pct(lower),
        higher_pct: pct(higher),
        other_pct: pct(other),
        no_mtd_pct: pct(none),
        mean_patients,
        patient_change_pct: 100.0 * (mean_patients - sample_size as f64) / sample_size as f64,
        early_completion_pct: pct(early),
    }
}

/// Raw per-replication outcomes for one (scenario, design) pair, in
/// replication order.
pub fn replicate<T: Real>(
    scenario_index: usize,
    scenario: &Scenario<T>,
    spec: &DesignSpec<T>,
    config: &SimConfig<T>,
) -> Result<Vec<TrialOutcome>> {
    let sample_size = config.sample_size_for(scenario);
    let engine = engine_for(scenario, spec, sample_size, config.cohort_size)?;
    (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(config.base_seed, scenario_index, rep);
            let s = run_trial(scenario, &engine, seed)?;
            Ok(TrialOutcome {
                mtd: s.mtd,
                enrolled: s.enrolled,
                status: s.status,
            })
        })
        .collect()
}

/// Metrics for every scenario × design, scenario-major.
pub fn simulate<T: Real>(scenarios: &[Scenario<T>], config: &SimConfig<T>) -> Result<Vec<Metrics>> {
    config.validate()?;
    let mut out = Vec::with_capacity(scenarios.len() * config.designs.len());
    for (si, scenario) in scenarios.iter().enumerate() {
        scenario.validate()?;
        for spec in &config.designs {
            let outcomes = replicate(si, scenario, spec, config)?;
            out.push(summarize(scenario, spec, config.sample_size_for(scenario), &outcomes));
        }
    }
    Ok(out)
}

/// [`simulate`] on a dedicated pool of `threads` workers.
pub fn simulate_with_threads<T: Real>(scenarios: &[Scenario<T>], config: &SimConfig<T>, threads: usize) -> Result<Vec<Metrics>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Precondition(e.to_string()))?;
    pool.install(|| simulate(scenarios, config))
}

/// The six designs compared in the study: BOIN and Keyboard, each without
/// early completion, with DRP, and with DRP-I.
pub fn standard_designs<T: Real>(phi: T, tau: T) -> Vec<DesignSpec<T>> {
    use crate::design::DesignKind;
    use crate::early::CompletionVariant;
    let mut out = Vec::new();
    for (kind, name) in [(DesignKind::Boin, "BOIN"), (DesignKind::Keyboard, "Key")] {
        for (variant, suffix) in [
            (CompletionVariant::Off, ""),
            (CompletionVariant::Drp, "-EC"),
            (CompletionVariant::DrpI, "-ECI"),
        ] {
            out.push(DesignSpec {
                label: format!("{name}{suffix}"),
                design: DesignParams::new(kind, phi),
                completion: CompletionConfig::new(variant, tau),
            });
        }
    }
    out
}

pub const CSV_HEADER: &str = "scenario,design,replications,sample_size,pcms,lower_pct,higher_pct,other_pct,no_mtd_pct,mean_patients,patient_change_pct,early_completion_pct";

/// Fixed-precision CSV; identical inputs give identical bytes.
pub fn metrics_csv(metrics: &[Metrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{:.2},{:.2}\n",
            m.scenario,
            m.design,
            m.replications,
            m.sample_size,
            m.pcms,
            m.lower_pct,
            m.higher_pct,
            m.other_pct,
            m.no_mtd_pct,
            m.mean_patients,
            m.patient_change_pct,
            m.early_completion_pct
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::early::CompletionVariant;
    use crate::scenario::builtin;

    fn constant(rate: f64) -> Scenario<f64> {
        Scenario::new("flat", vec![vec![rate; 4]; 3]).unwrap()
    }

    fn boin(variant: CompletionVariant, tau: f64) -> DesignSpec<f64> {
        DesignSpec {
            label: "x".into(),
            design: DesignParams::boin(0.3),
            completion: CompletionConfig::new(variant, tau),
        }
    }

    #[test]
    fn zero_toxicity_climbs_without_dlts() {
        let sc = constant(0.0);
        let engine = engine_for(&sc, &boin(CompletionVariant::Off, 0.4), 45, 3).unwrap();
        let s = run_trial(&sc, &engine, 11).unwrap();
        assert_eq!(s.m.data.iter().sum::<usize>(), 0);
        assert_eq!(s.current, Dose::new(2, 3));
        let log_has_deescalation = s.log.iter().any(|e| {
            matches!(e.event, crate::engine::Event::Decision { decision: crate::Decision::DeEscalate, .. })
        });
        assert!(!log_has_deescalation);
    }

    #[test]
    fn certain_toxicity_stops_at_first_cohort() {
        let sc = constant(1.0);
        let engine = engine_for(&sc, &boin(CompletionVariant::Drp, 0.4), 45, 3).unwrap();
        let s = run_trial(&sc, &engine, 5).unwrap();
        assert_eq!(s.status, TrialStatus::TerminatedSafety);
        assert_eq!(s.enrolled, 3);
        assert_eq!(s.mtd, None);
    }

    #[test]
    fn same_seed_same_log() {
        let sc = &builtin::<f64>()[1];
        let engine = engine_for(sc, &boin(CompletionVariant::DrpI, 0.4), 45, 3).unwrap();
        let a = run_trial(sc, &engine, 99).unwrap();
        let b = run_trial(sc, &engine, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_differ_across_scenarios_and_replications() {
        let a = replication_seed(1, 0, 0);
        assert_ne!(a, replication_seed(1, 1, 0));
        assert_ne!(a, replication_seed(1, 0, 1));
        assert_ne!(a, replication_seed(2, 0, 0));
    }

    #[test]
    fn percentages_partition() {
        let cfg = SimConfig {
            designs: standard_designs(0.3, 0.4),
            sample_size: None,
            cohort_size: 3,
            replications: 40,
            base_seed: 3,
        };
        let scen: Vec<_> = builtin::<f64>().into_iter().take(2).collect();
        for m in simulate(&scen, &cfg).unwrap() {
            let total = m.pcms + m.lower_pct + m.higher_pct + m.other_pct + m.no_mtd_pct;
            assert!((total - 100.0).abs() < 1e-9, "{m:?}");
            assert!(m.mean_patients <= m.sample_size as f64);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = SimConfig {
            designs: standard_designs(0.3, 0.4),
            sample_size: Some(44),
            cohort_size: 3,
            replications: 1,
            base_seed: 0,
        };
        assert!(cfg.validate().is_err());
        cfg.sample_size = Some(45);
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }
}
