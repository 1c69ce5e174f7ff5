//! Request and response documents shared by the HTTP API and `--json` output.

use dosecomb::design::{boin_boundaries, decision_table, escalation_set, deescalation_set, retainment_set};
use dosecomb::early::{completion_table, drp_with_rules, effective_count, CompletionRow, CompletionSummary};
use dosecomb::engine::Event;
use dosecomb::simulator::{standard_designs, Metrics};
use dosecomb::{
    BoundaryStatus, CompletionConfig, CompletionVariant, DecisionRules, DesignKind, DesignParams, DesignSpec, Dose,
    DoseGrid, GridStep, Matrix, RateMatrix, Scenario, SimConfig, TrialConfig, TrialState, TrialStatus,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = dosecomb::engine::SCHEMA_VERSION;

/// Wraps a document with the schema version.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(body: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

fn default_phi() -> f64 {
    0.3
}

fn default_tau() -> f64 {
    0.4
}

fn default_cohort() -> usize {
    3
}

/// Design settings; omitted fields take the design defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRequest {
    pub kind: DesignKind,
    #[serde(default = "default_phi")]
    pub phi: f64,
    pub phi1: Option<f64>,
    pub phi2: Option<f64>,
    pub key_width: Option<f64>,
    pub elim_cutoff: Option<f64>,
    pub prior_a: Option<f64>,
    pub prior_b: Option<f64>,
}

impl DesignRequest {
    pub fn build(&self) -> Result<DesignParams, ApiError> {
        let mut p = DesignParams::new(self.kind, self.phi);
        p.phi1 = self.phi1.unwrap_or(p.phi1);
        p.phi2 = self.phi2.unwrap_or(p.phi2);
        p.key_width = self.key_width.unwrap_or(p.key_width);
        p.elim_cutoff = self.elim_cutoff.unwrap_or(p.elim_cutoff);
        p.prior_a = self.prior_a.unwrap_or(p.prior_a);
        p.prior_b = self.prior_b.unwrap_or(p.prior_b);
        p.validate().map_err(|e| ApiError::from(e).within("design"))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRequest {
    pub variant: CompletionVariant,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub runtime_smoothing: bool,
}

impl Default for CompletionRequest {
    fn default() -> Self {
        CompletionRequest {
            variant: CompletionVariant::Drp,
            tau: default_tau(),
            runtime_smoothing: false,
        }
    }
}

/// Body of `POST /trials`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRequest {
    pub rows: usize,
    pub cols: usize,
    pub sample_size: usize,
    #[serde(default = "default_cohort")]
    pub cohort_size: usize,
    pub design: DesignRequest,
    #[serde(default)]
    pub completion: CompletionRequest,
    /// Tie-breaking seed; drawn at random when omitted.
    pub seed: Option<u64>,
}

impl TrialRequest {
    pub fn into_config(self, fallback_seed: u64) -> Result<TrialConfig, ApiError> {
        let grid = DoseGrid::new(self.rows, self.cols).map_err(ApiError::from)?;
        let completion = CompletionConfig {
            variant: self.completion.variant,
            tau: self.completion.tau,
            runtime_smoothing: self.completion.runtime_smoothing,
        };
        completion.validate().map_err(|e| ApiError::from(e).within("completion"))?;
        let config = TrialConfig {
            grid,
            sample_size: self.sample_size,
            cohort_size: self.cohort_size,
            design: self.design.build()?,
            completion,
            seed: self.seed.unwrap_or(fallback_seed),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialView {
    pub id: String,
    pub revision: u64,
    pub state: TrialState,
}

/// Body of `POST /trials/{id}/cohorts`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortRequest {
    pub dlt_count: usize,
    /// Revision the client last saw; the write is rejected if it is stale.
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortResponse {
    pub id: String,
    pub revision: u64,
    pub report: dosecomb::CohortReport,
    pub state: TrialState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtdView {
    pub id: String,
    pub status: TrialStatus,
    /// Set once the trial has ended.
    pub mtd: Option<Dose>,
    pub label: Option<String>,
    pub adjusted_rate: Option<f64>,
    pub tie_broken: bool,
    /// Isotonic-adjusted rates over non-eliminated tried doses; `null` elsewhere.
    pub adjusted_rates: Vec<Vec<Option<f64>>>,
}

impl MtdView {
    pub fn of(id: &str, state: &TrialState) -> Result<Self, ApiError> {
        let adjusted = if state.n.data.iter().any(|&n| n > 0) {
            state.adjusted_rates()?.to_rows()
        } else {
            Matrix::filled(state.config.grid, None).to_rows()
        };
        let (mut adjusted_rate, mut tie_broken) = (None, false);
        for entry in state.log.iter().rev() {
            if let Event::MtdSelected {
                adjusted_rate: r,
                tie_broken: t,
                ..
            } = entry.event
            {
                adjusted_rate = r;
                tie_broken = t;
                break;
            }
        }
        Ok(MtdView {
            id: id.to_string(),
            status: state.status,
            mtd: state.mtd,
            label: state.mtd.map(|d| d.to_string()),
            adjusted_rate,
            tie_broken,
            adjusted_rates: adjusted,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundariesView {
    pub design: DesignKind,
    pub phi: f64,
    /// Lower and upper edge of the proper dosing interval.
    pub lower: f64,
    pub upper: f64,
}

pub fn boundaries(params: &DesignParams) -> Result<BoundariesView, ApiError> {
    let (lower, upper) = match params.kind {
        DesignKind::Boin => {
            let b = boin_boundaries(params)?;
            (b.lambda_e, b.lambda_d)
        }
        DesignKind::Keyboard => params.proper_interval()?,
    };
    Ok(BoundariesView {
        design: params.kind,
        phi: params.phi,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetainmentRow {
    pub n: usize,
    /// Largest DLT count that escalates.
    pub escalate_max: Option<usize>,
    pub retain: Vec<usize>,
    /// Smallest DLT count that de-escalates.
    pub deescalate_min: Option<usize>,
    pub display: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetainmentTable {
    pub design: DesignKind,
    pub phi: f64,
    pub rows: Vec<RetainmentRow>,
}

pub fn retainment_table(params: &DesignParams, ns: &[usize]) -> Result<RetainmentTable, ApiError> {
    let sets = decision_table(params, ns)?;
    let mut rows = Vec::with_capacity(ns.len());
    for (&n, set) in ns.iter().zip(sets) {
        rows.push(RetainmentRow {
            n,
            escalate_max: escalation_set(params, n)?.last().copied(),
            deescalate_min: deescalation_set(params, n)?.first().copied(),
            display: set.to_string(),
            retain: set.members,
        });
    }
    Ok(RetainmentTable {
        design: params.kind,
        phi: params.phi,
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionTableView {
    pub design: DesignKind,
    pub phi: f64,
    pub sample_size: usize,
    pub cohort_size: usize,
    pub tau: f64,
    pub step: GridStep,
    /// One line per patient count, as printed in a protocol.
    pub summary: Vec<CompletionSummary>,
    /// Per-(n, m) curves behind the summary.
    pub rows: Vec<CompletionRow<f64>>,
}

pub fn completion_table_view(
    params: &DesignParams,
    sample_size: usize,
    cohort_size: usize,
    tau: f64,
    step: GridStep,
    ns: &[usize],
) -> Result<(CompletionTableView, String), ApiError> {
    let t = completion_table(params, sample_size, cohort_size, tau, step, ns)?;
    let text = t.to_string();
    Ok((
        CompletionTableView {
            design: params.kind,
            phi: params.phi,
            sample_size,
            cohort_size,
            tau,
            step,
            summary: t.summary(),
            rows: t.rows,
        },
        text,
    ))
}

/// Patient counts `c, 2c, …` up to `n_max`.
pub fn cohort_multiples(cohort: usize, n_max: usize) -> Vec<usize> {
    (1..).map(|i| i * cohort.max(1)).take_while(|&n| n <= n_max).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrpView {
    pub design: DesignKind,
    pub phi: f64,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub boundary: BoundaryStatus,
    /// Retaining DLT totals at `n + l` (before boundary augmentation).
    pub retainment_set: Vec<usize>,
    pub drp: f64,
    pub adjusted_rate: Option<f64>,
    pub m_eff: Option<f64>,
    pub drp_i: Option<f64>,
}

pub fn drp_view(
    params: &DesignParams,
    n: usize,
    m: usize,
    l: usize,
    adjusted_rate: Option<f64>,
    boundary: BoundaryStatus,
) -> Result<DrpView, ApiError> {
    if n == 0 {
        return Err(ApiError::validation("n", "at least one patient must have been treated"));
    }
    if m > n {
        return Err(ApiError::validation("m", format!("{m} DLTs exceed {n} patients")));
    }
    let rules = DecisionRules::new(params, n + l)?;
    let value = drp_with_rules(&rules, n, m as f64, l, boundary)?;
    let (m_eff, drp_i) = match adjusted_rate {
        Some(rate) => {
            let m_eff = effective_count(n, m, rate).map_err(|e| ApiError::from(e).within("isotonic_rate"))?;
            (Some(m_eff), Some(drp_with_rules(&rules, n, m_eff, l, boundary)?))
        }
        None => (None, None),
    };
    Ok(DrpView {
        design: params.kind,
        phi: params.phi,
        n,
        m,
        l,
        boundary,
        retainment_set: retainment_set(params, n + l)?.members,
        drp: value,
        adjusted_rate,
        m_eff,
        drp_i,
    })
}

/// Counts in, isotonic-adjusted rates out.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustRequest {
    pub n: Vec<Vec<usize>>,
    pub m: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustView {
    pub raw: Vec<Vec<Option<f64>>>,
    pub adjusted: Vec<Vec<Option<f64>>>,
}

pub fn adjust(req: &AdjustRequest) -> Result<AdjustView, ApiError> {
    let n = Matrix::from_rows(req.n.clone()).map_err(|e| ApiError::from(e).within("n"))?;
    let m = Matrix::from_rows(req.m.clone()).map_err(|e| ApiError::from(e).within("m"))?;
    let rates = RateMatrix::from_counts(&n, &m, |_| true)?;
    let fit = dosecomb::isotonic::bivariate_isotonic(&rates)?;
    let raw = Matrix {
        grid: n.grid,
        data: n
            .data
            .iter()
            .zip(&m.data)
            .map(|(&nn, &mm)| (nn > 0).then(|| mm as f64 / nn as f64))
            .collect(),
    };
    Ok(AdjustView {
        raw: raw.to_rows(),
        adjusted: fit.to_rows(),
    })
}

/// One scenario supplied inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioInput {
    pub name: String,
    pub matrix: Vec<Vec<f64>>,
}

/// Body of `POST /simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    /// Built-in scenarios are used when omitted.
    pub scenarios: Option<Vec<ScenarioInput>>,
    /// Subset of BOIN, BOIN-EC, BOIN-ECI, Key, Key-EC, Key-ECI; all when omitted.
    pub designs: Option<Vec<String>>,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub sample_size: Option<usize>,
    #[serde(default = "default_cohort")]
    pub cohort_size: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_reps() -> usize {
    1000
}

/// Upper bound on replications accepted by the service.
pub const MAX_REPLICATIONS: usize = 100_000;

impl SimulateRequest {
    pub fn build(&self) -> Result<(Vec<Scenario>, SimConfig), ApiError> {
        let scenarios = match &self.scenarios {
            Some(list) if list.is_empty() => return Err(ApiError::validation("scenarios", "must not be empty")),
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Scenario::new(s.name.clone(), s.matrix.clone())
                        .map_err(|e| ApiError::from(e).within(&format!("scenarios[{i}]")))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => dosecomb::scenario::builtin(),
        };
        if self.replications > MAX_REPLICATIONS {
            return Err(ApiError::validation("replications", format!("at most {MAX_REPLICATIONS}")));
        }
        let designs = select_designs(self.phi, self.tau, self.designs.as_deref())?;
        let config = SimConfig {
            designs,
            sample_size: self.sample_size,
            cohort_size: self.cohort_size,
            replications: self.replications,
            base_seed: self.base_seed,
        };
        config.validate()?;
        Ok((scenarios, config))
    }
}

/// The standard six designs, optionally filtered by label (case-insensitive).
pub fn select_designs(phi: f64, tau: f64, labels: Option<&[String]>) -> Result<Vec<DesignSpec>, ApiError> {
    let all = standard_designs(phi, tau);
    for d in &all {
        d.design.validate().map_err(|e| ApiError::from(e).within("phi"))?;
        d.completion.validate().map_err(|e| ApiError::from(e).within("tau"))?;
    }
    let Some(labels) = labels else {
        return Ok(all);
    };
    let mut out = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match all.iter().find(|d| d.label.eq_ignore_ascii_case(label)) {
            Some(d) => out.push(d.clone()),
            None => {
                return Err(ApiError::validation(
                    format!("designs[{i}]"),
                    format!("unknown design `{label}`"),
                ))
            }
        }
    }
    if out.is_empty() {
        return Err(ApiError::validation("designs", "must not be empty"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    pub metrics: Option<Vec<Metrics>>,
    pub csv: Option<String>,
    pub error: Option<String>,
}
