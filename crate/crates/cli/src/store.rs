//! Trial records with an append-only event log per trial.
//!
//! On disk each trial owns `<data_dir>/trials/<id>/`:
//!
//! * `events.jsonl`: one JSON object per line, appended before the
//!   in-memory state changes. The first line is `created` (carrying the full
//!   trial configuration), each later line is a `cohort`. Replaying the
//!   `cohort` lines through the engine reproduces the trial exactly.
//! * `snapshot.json`: the final state, written once the trial ends.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use dosecomb::{BoundaryStatus, CohortOutcome, Decision, Dose, Engine, TrialConfig, TrialState, TrialStatus};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::ApiError;
use crate::wire::{CohortResponse, TrialView, SCHEMA_VERSION};

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Created {
        schema_version: u32,
        revision: u64,
        id: String,
        config: TrialConfig,
    },
    Cohort {
        schema_version: u32,
        revision: u64,
        dose: Dose,
        dlt_count: usize,
        boundary: Option<BoundaryStatus>,
        drp: Option<f64>,
        drp_i: Option<f64>,
        decision: Option<Decision>,
        next_dose: Option<Dose>,
        status: TrialStatus,
        mtd: Option<Dose>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    schema_version: u32,
    id: String,
    revision: u64,
    state: TrialState,
}

#[derive(Debug)]
pub struct TrialRecord {
    pub id: String,
    /// Incremented on every accepted cohort; 0 right after creation.
    pub revision: u64,
    pub engine: Engine,
    pub state: TrialState,
}

impl TrialRecord {
    pub fn view(&self) -> TrialView {
        TrialView {
            id: self.id.clone(),
            revision: self.revision,
            state: self.state.clone(),
        }
    }
}

type Shared = Arc<Mutex<TrialRecord>>;

pub struct Store {
    dir: Option<PathBuf>,
    trials: RwLock<HashMap<String, Shared>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            dir: None,
            trials: RwLock::new(HashMap::new()),
        }
    }

    /// Opens (creating if needed) a data directory and replays every trial in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        let root = dir.join("trials");
        fs::create_dir_all(&root).map_err(io)?;
        let mut trials = HashMap::new();
        for entry in fs::read_dir(&root).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if !path.is_dir() {
                continue;
            }
            let record = load_trial(&path)?;
            trials.insert(record.id.clone(), Arc::new(Mutex::new(record)));
        }
        Ok(Store {
            dir: Some(dir),
            trials: RwLock::new(trials),
        })
    }

    fn trial_dir(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("trials").join(id))
    }

    pub fn len(&self) -> usize {
        self.trials.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, config: TrialConfig) -> Result<TrialView, ApiError> {
        let engine = Engine::new(config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = TrialRecord {
            id: id.clone(),
            revision: 0,
            state: engine.start(),
            engine,
        };
        if let Some(dir) = self.trial_dir(&id) {
            fs::create_dir_all(&dir).map_err(io)?;
            append(
                &dir,
                &LogLine::Created {
                    schema_version: SCHEMA_VERSION,
                    revision: 0,
                    id: id.clone(),
                    config,
                },
            )?;
        }
        let view = record.view();
        self.trials
            .write()
            .expect("store lock")
            .insert(id, Arc::new(Mutex::new(record)));
        Ok(view)
    }

    pub fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.trials
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("trial `{id}`")))
    }

    pub async fn view(&self, id: &str) -> Result<TrialView, ApiError> {
        Ok(self.get(id)?.lock().await.view())
    }

    /// Applies one cohort under the trial's writer lock.
    pub async fn apply(&self, id: &str, dlt_count: usize, expected: Option<u64>) -> Result<CohortResponse, ApiError> {
        let shared = self.get(id)?;
        let mut rec = shared.lock().await;
        if let Some(expected) = expected {
            if expected != rec.revision {
                return Err(ApiError::Conflict {
                    expected,
                    current: rec.revision,
                });
            }
        }
        let cohort = rec.engine.config().cohort_size;
        if dlt_count > cohort {
            return Err(ApiError::validation(
                "dlt_count",
                format!("{dlt_count} DLTs exceed the cohort size {cohort}"),
            ));
        }
        let t = rec.engine.apply_cohort(&rec.state, CohortOutcome { dlt_count })?;
        let revision = rec.revision + 1;
        if let Some(dir) = self.trial_dir(id) {
            let r = &t.report;
            append(
                &dir,
                &LogLine::Cohort {
                    schema_version: SCHEMA_VERSION,
                    revision,
                    dose: r.dose,
                    dlt_count,
                    boundary: r.boundary,
                    drp: r.drp,
                    drp_i: r.drp_i,
                    decision: r.decision,
                    next_dose: r.next_dose,
                    status: r.status,
                    mtd: r.mtd,
                },
            )?;
            if t.state.status.is_terminal() {
                write_snapshot(
                    &dir,
                    &Snapshot {
                        schema_version: SCHEMA_VERSION,
                        id: id.to_string(),
                        revision,
                        state: t.state.clone(),
                    },
                )?;
            }
        }
        rec.state = t.state;
        rec.revision = revision;
        Ok(CohortResponse {
            id: id.to_string(),
            revision,
            report: t.report,
            state: rec.state.clone(),
        })
    }
}

fn io(e: std::io::Error) -> ApiError {
    ApiError::Internal(format!("storage: {e}"))
}

fn append(dir: &Path, line: &LogLine) -> Result<(), ApiError> {
    let mut text = serde_json::to_string(line).map_err(|e| ApiError::Internal(e.to_string()))?;
    text.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("events.jsonl"))
        .map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    f.sync_data().map_err(io)
}

fn write_snapshot(dir: &Path, snap: &Snapshot) -> Result<(), ApiError> {
    let tmp = dir.join("snapshot.json.tmp");
    let text = serde_json::to_vec_pretty(snap).map_err(|e| ApiError::Internal(e.to_string()))?;
    let mut f = File::create(&tmp).map_err(io)?;
    f.write_all(&text).map_err(io)?;
    f.sync_data().map_err(io)?;
    fs::rename(&tmp, dir.join("snapshot.json")).map_err(io)
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(format!("{}: {what}", path.display()))
}

/// Rebuilds a trial from its event log and checks it against the snapshot.
fn load_trial(dir: &Path) -> Result<TrialRecord, ApiError> {
    let path = dir.join("events.jsonl");
    let reader = BufReader::new(File::open(&path).map_err(io)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
    let mut record: Option<TrialRecord> = None;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = match serde_json::from_str(line) {
            Ok(p) => p,
            // A torn final line from an interrupted append is dropped.
            Err(_) if i + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), "ignoring incomplete final log line");
                break;
            }
            Err(e) => return Err(corrupt(&path, format!("line {}: {e}", i + 1))),
        };
        match (parsed, record.as_mut()) {
            (LogLine::Created { id, config, .. }, None) => {
                let engine = Engine::new(config)?;
                record = Some(TrialRecord {
                    id,
                    revision: 0,
                    state: engine.start(),
                    engine,
                });
            }
            (
                LogLine::Cohort {
                    revision,
                    dose,
                    dlt_count,
                    status,
                    ..
                },
                Some(rec),
            ) => {
                if revision != rec.revision + 1 || dose != rec.state.current {
                    return Err(corrupt(&path, format!("line {}: out of sequence", i + 1)));
                }
                let t = rec.engine.apply_cohort(&rec.state, CohortOutcome { dlt_count })?;
                if t.state.status != status {
                    return Err(corrupt(&path, format!("line {}: replay diverged", i + 1)));
                }
                rec.state = t.state;
                rec.revision = revision;
            }
            _ => return Err(corrupt(&path, format!("line {}: unexpected record", i + 1))),
        }
    }
    let rec = record.ok_or_else(|| corrupt(&path, "empty log"))?;
    let snap_path = dir.join("snapshot.json");
    if snap_path.exists() {
        let text = fs::read(&snap_path).map_err(io)?;
        let snap: Snapshot = serde_json::from_slice(&text).map_err(|e| corrupt(&snap_path, e))?;
        if snap.revision != rec.revision || snap.state != rec.state {
            return Err(corrupt(&snap_path, "snapshot disagrees with the event log"));
        }
    }
    Ok(rec)
}
