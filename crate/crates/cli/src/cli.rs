//! Command-line interface. Every command yields a text rendering and the
//! JSON document printed under `--json` (the same documents the service
//! returns).

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dosecomb::simulator::{metrics_csv, simulate, simulate_with_threads};
use dosecomb::{
    BoundaryStatus, CohortOutcome, CompletionConfig, CompletionVariant, DesignKind, DesignParams, DoseGrid, Engine,
    GridStep, TrialConfig, TrialState,
};
use serde::Serialize;
use serde_json::Value;

use crate::error::ApiError;
use crate::wire::*;

#[derive(Debug, Parser)]
#[command(name = "dosecomb", version, about = "Drug-combination dose finding with early completion")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// boin or keyboard.
    #[arg(long, default_value = "boin")]
    pub design: DesignKind,

    /// Target toxicity level.
    #[arg(long, default_value_t = 0.3)]
    pub phi: f64,
}

impl DesignArgs {
    fn params(&self) -> Result<DesignParams, ApiError> {
        let p = DesignParams::new(self.design, self.phi);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Proper dosing interval (BOIN escalation/de-escalation boundaries).
    Boundaries(DesignArgs),

    /// DLT counts that retain the current dose, by patients treated.
    Table {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 18)]
        n_max: usize,
        #[arg(long, default_value_t = 3)]
        cohort: usize,
    },

    /// Early-completion decision table.
    EcTable {
        #[command(flatten)]
        design: DesignArgs,
        /// Planned sample size.
        #[arg(long = "N", visible_alias = "sample-size", default_value_t = 36)]
        sample_size: usize,
        #[arg(long, default_value_t = 3)]
        cohort: usize,
        #[arg(long, default_value_t = 0.4)]
        tau: f64,
        /// Remaining-patient grid: patient or cohort.
        #[arg(long, default_value = "patient")]
        step: GridStep,
        /// Largest patient count tabulated (default N/3).
        #[arg(long)]
        n_max: Option<usize>,
    },

    /// Dose retainment probability at the current dose.
    Drp {
        #[command(flatten)]
        design: DesignArgs,
        /// Patients treated at the current dose.
        #[arg(short = 'n')]
        n: usize,
        /// DLTs at the current dose.
        #[arg(short = 'm')]
        m: usize,
        /// Remaining patients in the trial.
        #[arg(short = 'l')]
        l: usize,
        /// Isotonic-adjusted rate at the current dose; also reports DRP-I.
        #[arg(long)]
        isotonic_rate: Option<f64>,
        /// interior, max or min.
        #[arg(long, default_value = "interior")]
        boundary: BoundaryStatus,
    },

    /// Bivariate isotonic adjustment of observed rates. Reads
    /// `{"n": [[..]], "m": [[..]]}` from a file or stdin.
    Adjust {
        /// Input file; `-` or absent reads stdin.
        input: Option<PathBuf>,
    },

    /// Writes a fresh trial state file.
    Init {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        cols: usize,
        #[arg(long = "N", visible_alias = "sample-size")]
        sample_size: usize,
        #[arg(long, default_value_t = 3)]
        cohort: usize,
        /// off, drp or drp_i.
        #[arg(long, default_value = "drp")]
        ec: CompletionVariant,
        #[arg(long, default_value_t = 0.4)]
        tau: f64,
        /// Tie-breaking seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Records one cohort's DLT count against a trial state file.
    Decide {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        dlt: usize,
        /// Where to write the updated state (default: overwrite --state).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Monte Carlo operating characteristics.
    Simulate {
        /// Directory of scenario files (.json or .csv); built-ins when absent.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// boin, keyboard or all.
        #[arg(long, default_value = "all")]
        design: String,
        /// off, drp, drp_i or all (comma-separated list allowed).
        #[arg(long, default_value = "all")]
        ec: String,
        #[arg(long, default_value_t = 0.3)]
        phi: f64,
        #[arg(long, default_value_t = 0.4)]
        tau: f64,
        /// Sample size (default 45 up to 12 doses, else 90).
        #[arg(long = "N", visible_alias = "sample-size")]
        sample_size: Option<usize>,
        #[arg(long, default_value_t = 3)]
        cohort: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output file; `.json` writes JSON, anything else CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Runs the HTTP service.
    Serve {
        #[arg(long, env = "DOSECOMB_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "DOSECOMB_DATA_DIR", default_value = "./dosecomb-data")]
        data_dir: PathBuf,
        /// Shared bearer token required on every request when set.
        #[arg(long, env = "DOSECOMB_TOKEN", hide_env_values = true)]
        token: Option<String>,
    },
}

#[derive(Serialize)]
struct SimulationView<'a> {
    metrics: &'a [dosecomb::simulator::Metrics],
}

/// Rendered result of a command.
pub struct Output {
    pub text: String,
    pub json: Value,
}

fn output<T: Serialize>(text: String, body: T) -> Result<Output, ApiError> {
    let json = serde_json::to_value(Envelope::new(body)).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Output { text, json })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(format!("{}: {e}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn matrix_text(rows: &[Vec<Option<f64>>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|&v| format!("{:>7}", fmt_opt(v))).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every command except `serve`.
pub fn run(command: Command) -> Result<Output, ApiError> {
    match command {
        Command::Boundaries(d) => {
            let b = boundaries(&d.params()?)?;
            output(format!("{:.6} {:.6}", b.lower, b.upper), b)
        }
        Command::Table { design, n_max, cohort } => {
            if cohort == 0 {
                return Err(ApiError::validation("cohort", "must be at least 1"));
            }
            let t = retainment_table(&design.params()?, &cohort_multiples(cohort, n_max))?;
            let mut text = format!("{:>10}  {:>8}\n", "#patients", "#retain");
            for r in &t.rows {
                let _ = writeln!(text, "{:>10}  {:>8}", r.n, r.display);
            }
            output(text.trim_end().to_string(), t)
        }
        Command::EcTable {
            design,
            sample_size,
            cohort,
            tau,
            step,
            n_max,
        } => {
            let ns = cohort_multiples(cohort, n_max.unwrap_or(sample_size / 3));
            let (view, text) = completion_table_view(&design.params()?, sample_size, cohort, tau, step, &ns)?;
            output(text.trim_end().to_string(), view)
        }
        Command::Drp {
            design,
            n,
            m,
            l,
            isotonic_rate,
            boundary,
        } => {
            let v = drp_view(&design.params()?, n, m, l, isotonic_rate, boundary)?;
            let text = match v.drp_i {
                Some(di) => format!("{:.3}\nDRP-I {:.3} (m_eff {:.3})", v.drp, di, v.m_eff.unwrap_or_default()),
                None => format!("{:.3}", v.drp),
            };
            output(text, v)
        }
        Command::Adjust { input } => {
            let text = match input.as_deref() {
                None => read_stdin()?,
                Some(p) if p == Path::new("-") => read_stdin()?,
                Some(p) => std::fs::read_to_string(p).map_err(|e| io_err(p, e))?,
            };
            let de = &mut serde_json::Deserializer::from_str(&text);
            let req: AdjustRequest = serde_path_to_error::deserialize(de).map_err(|e| ApiError::Validation {
                field: Some(e.path().to_string()),
                message: e.into_inner().to_string(),
            })?;
            let v = adjust(&req)?;
            output(matrix_text(&v.adjusted), v)
        }
        Command::Init {
            design,
            rows,
            cols,
            sample_size,
            cohort,
            ec,
            tau,
            seed,
            out,
        } => {
            let completion = CompletionConfig::new(ec, tau);
            completion.validate()?;
            let config = TrialConfig {
                grid: DoseGrid::new(rows, cols)?,
                sample_size,
                cohort_size: cohort,
                design: design.params()?,
                completion,
                seed,
            };
            let state = Engine::new(config)?.start();
            write_state(&out, &state)?;
            output(format!("wrote {}", out.display()), state)
        }
        Command::Decide { state, dlt, out } => {
            let text = std::fs::read_to_string(&state).map_err(|e| io_err(&state, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let current: TrialState = serde_path_to_error::deserialize(de).map_err(|e| ApiError::Validation {
                field: Some(format!("state.{}", e.path())),
                message: e.into_inner().to_string(),
            })?;
            current.validate()?;
            let engine = Engine::new(current.config)?;
            let t = engine.apply_cohort(&current, CohortOutcome { dlt_count: dlt })?;
            write_state(out.as_deref().unwrap_or(&state), &t.state)?;
            let r = &t.report;
            let mut text = format!("{} {}/{} at {}", r.status, r.m, r.n, r.dose);
            if let Some(d) = r.drp {
                let _ = write!(text, "\nDRP {d:.3}");
            }
            if let Some(d) = r.drp_i {
                let _ = write!(text, "  DRP-I {d:.3}");
            }
            if let Some(d) = r.decision {
                let _ = write!(text, "\ndecision {d}");
            }
            if let Some(d) = r.next_dose {
                let _ = write!(text, "\nnext dose {d}");
            }
            if r.status.is_terminal() {
                let _ = write!(text, "\nMTD {}", r.mtd.map_or_else(|| "none".to_string(), |d| d.to_string()));
            }
            output(text, &t.report)
        }
        Command::Simulate {
            scenarios,
            design,
            ec,
            phi,
            tau,
            sample_size,
            cohort,
            reps,
            seed,
            threads,
            out,
        } => {
            let list = match &scenarios {
                Some(dir) => dosecomb::scenario::load_dir(dir)?,
                None => dosecomb::scenario::builtin(),
            };
            let config = dosecomb::SimConfig {
                designs: pick_designs(phi, tau, &design, &ec)?,
                sample_size,
                cohort_size: cohort,
                replications: reps,
                base_seed: seed,
            };
            let metrics = match threads {
                Some(t) => simulate_with_threads(&list, &config, t)?,
                None => simulate(&list, &config)?,
            };
            let csv = metrics_csv(&metrics);
            let result = output(csv.trim_end().to_string(), SimulationView { metrics: &metrics })?;
            if let Some(path) = out {
                let body = if path.extension().is_some_and(|e| e == "json") {
                    serde_json::to_string_pretty(&result.json).map_err(|e| ApiError::Internal(e.to_string()))? + "\n"
                } else {
                    csv
                };
                std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
                return output(format!("wrote {}", path.display()), SimulationView { metrics: &metrics });
            }
            Ok(result)
        }
        Command::Serve { .. } => Err(ApiError::Internal("serve is handled by the binary".into())),
    }
}

fn read_stdin() -> Result<String, ApiError> {
    let mut s = String::new();
    std::io::stdin()
        .read_to_string(&mut s)
        .map_err(|e| ApiError::Internal(format!("stdin: {e}")))?;
    Ok(s)
}

fn write_state(path: &Path, state: &TrialState) -> Result<(), ApiError> {
    let text = serde_json::to_string_pretty(state).map_err(|e| ApiError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn pick_designs(phi: f64, tau: f64, design: &str, ec: &str) -> Result<Vec<dosecomb::DesignSpec>, ApiError> {
    let kinds: Vec<DesignKind> = match design.to_ascii_lowercase().as_str() {
        "all" => vec![DesignKind::Boin, DesignKind::Keyboard],
        other => vec![other.parse().map_err(|e: dosecomb::Error| ApiError::from(e).within("design"))?],
    };
    let variants: Vec<CompletionVariant> = if ec.eq_ignore_ascii_case("all") {
        vec![CompletionVariant::Off, CompletionVariant::Drp, CompletionVariant::DrpI]
    } else {
        ec.split(',')
            .map(|s| s.trim().parse().map_err(|e: dosecomb::Error| ApiError::from(e).within("ec")))
            .collect::<Result<_, _>>()?
    };
    Ok(select_designs(phi, tau, None)?
        .into_iter()
        .filter(|d| kinds.contains(&d.design.kind) && variants.contains(&d.completion.variant))
        .collect())
}
