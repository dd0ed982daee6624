//! Trajectory-ensemble execution with deterministic parallelism, run
//! manifests, and table comparison.
//!
//! Every trajectory owns an independent RNG stream derived from the master
//! seed (stream 1 + index; stream 0 initializes the shared parameters), so
//! ensemble output is bit-identical regardless of worker count or
//! scheduling order: results are keyed by trajectory index and reduced in
//! index order.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzState;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::integrator::{EstimatorKind, StepContext, Trajectory};
use crate::model::SseMode;
use crate::observables::{ensemble_average, CollectiveSpinEstimate, ObservableRecord};
use crate::output;

/// A trajectory that aborted, with the time and reason. The run continues
/// without it as long as attrition stays within the cap; heavy decay is
/// expected to need more sampling than usual and occasional failures are
/// operational events rather than crashes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: u64,
    pub time: f64,
    pub detail: String,
}

/// In-memory outcome of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub records: Vec<ObservableRecord>,
    pub failures: Vec<TrajectoryFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case", tag = "state", content = "detail")]
pub enum RunStatus {
    Running,
    Completed,
    Failed(String),
}

/// Everything needed to re-run or audit a simulation, written before the
/// run starts and finalized when it ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: Option<u64>,
    /// ChaCha12 stream per trajectory, all seeded with `config.master_seed`.
    /// Stream 0 is consumed by parameter initialization.
    pub trajectory_streams: Vec<u64>,
    pub status: RunStatus,
    pub failures: Vec<TrajectoryFailure>,
}

/// Paths and data produced by [`run_simulation`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ObservableRecord>,
    pub failures: Vec<TrajectoryFailure>,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// The shared initial state |psi_theta0> all trajectories start from.
pub fn initial_state(config: &RunConfig) -> Result<AnsatzState> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.master_seed);
    rng.set_stream(0);
    AnsatzState::init_paramagnetic(
        config.ansatz,
        config.model.n_sites,
        &mut rng,
        config.bootstrap_scale,
    )
}

struct TrajectorySeries {
    estimates: Vec<CollectiveSpinEstimate>,
    q: Vec<f64>,
}

fn run_one_trajectory(
    config: &RunConfig,
    ctx: &StepContext,
    initial: AnsatzState,
    index: u64,
    n_steps: usize,
) -> std::result::Result<TrajectorySeries, TrajectoryFailure> {
    let fail = |time: f64, e: Error| TrajectoryFailure {
        index,
        time,
        detail: e.to_string(),
    };
    let mut traj =
        Trajectory::new(ctx, initial, config.master_seed, index).map_err(|e| fail(0.0, e))?;
    let mut estimates = Vec::new();
    let mut q = Vec::new();
    for step in 0..=n_steps {
        let record = step % config.record_stride == 0 || step == n_steps;
        let batch = traj
            .sample_current(ctx)
            .map_err(|e| fail(traj.time(), e))?;
        if record {
            estimates.push(traj.observe(&batch).map_err(|e| fail(traj.time(), e))?);
            q.push(traj.q());
        }
        if step < n_steps {
            traj.advance(ctx, &batch).map_err(|e| fail(traj.time(), e))?;
        }
    }
    Ok(TrajectorySeries { estimates, q })
}

/// Runs the configured ensemble and reduces it to an observable table.
/// No files are touched; see [`run_simulation`] for the persistent variant.
pub fn simulate_ensemble(config: &RunConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let initial = initial_state(config)?;
    let ctx = StepContext {
        spec: &config.model,
        mode: config.mode,
        scheme: config.scheme,
        dt: config.dt,
        sampler: &config.sampler,
        reg: &config.regularization,
        estimator: EstimatorKind::MonteCarlo,
        track_gauge: false,
    };
    let n_steps = config.n_steps();
    let times = config.record_times();

    let outcomes: Vec<std::result::Result<TrajectorySeries, TrajectoryFailure>> = (0..config
        .n_trajectories as u64)
        .into_par_iter()
        .map(|index| run_one_trajectory(config, &ctx, initial.clone(), index, n_steps))
        .collect();

    let mut series = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(s) => series.push(s),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() * 10 > config.n_trajectories {
        return Err(Error::Attrition {
            failed: failures.len(),
            total: config.n_trajectories,
        });
    }

    let mut records = Vec::with_capacity(times.len());
    for (r, &t) in times.iter().enumerate() {
        let per: Vec<CollectiveSpinEstimate> =
            series.iter().map(|s| s.estimates[r].clone()).collect();
        let q_weights: Vec<f64> = series.iter().map(|s| s.q[r]).collect();
        let weights = match config.mode {
            SseMode::Nonlinear => None,
            SseMode::Linear => Some(&q_weights[..]),
        };
        records.push(ensemble_average(
            t,
            &per,
            config.mode,
            weights,
            config.model.n_sites,
        )?);
    }
    Ok(EnsembleResult { records, failures })
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs()
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    output::write_atomic(path, &text)
}

/// Runs the ensemble and persists `ensemble.csv` plus `manifest.json` under
/// the configured output directory. The manifest is written up front and
/// finalized afterwards; both writes are atomic renames.
pub fn run_simulation(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let csv_path = config.output_dir.join("ensemble.csv");
    let manifest_path = config.output_dir.join("manifest.json");

    let mut manifest = RunManifest {
        config: config.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: unix_seconds(),
        finished_unix_s: None,
        trajectory_streams: (1..=config.n_trajectories as u64).collect(),
        status: RunStatus::Running,
        failures: Vec::new(),
    };
    write_manifest(&manifest_path, &manifest)?;

    match simulate_ensemble(config) {
        Ok(result) => {
            output::write_records_csv(&csv_path, &result.records)?;
            manifest.finished_unix_s = Some(unix_seconds());
            manifest.status = RunStatus::Completed;
            manifest.failures = result.failures.clone();
            write_manifest(&manifest_path, &manifest)?;
            Ok(RunOutput {
                records: result.records,
                failures: result.failures,
                csv_path,
                manifest_path,
            })
        }
        Err(e) => {
            manifest.finished_unix_s = Some(unix_seconds());
            manifest.status = RunStatus::Failed(e.to_string());
            write_manifest(&manifest_path, &manifest)?;
            Err(e)
        }
    }
}

/// Per-observable summary of a table comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableDeviation {
    pub name: &'static str,
    pub points: usize,
    pub max_abs_deviation: f64,
    pub max_abs_z: f64,
    /// Points with |z| > 3.
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub observables: Vec<ObservableDeviation>,
    pub points_compared: usize,
    pub violation_fraction: f64,
    pub pass: bool,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<6} {:>7} {:>14} {:>10} {:>10}\n",
            "obs", "points", "max|dev|", "max|z|", "|z|>3"
        ));
        for o in &self.observables {
            out.push_str(&format!(
                "{:<6} {:>7} {:>14.6e} {:>10.3} {:>10}\n",
                o.name, o.points, o.max_abs_deviation, o.max_abs_z, o.violations
            ));
        }
        out.push_str(&format!(
            "compared {} points, |z| > 3 fraction {:.4}: {}\n",
            self.points_compared,
            self.violation_fraction,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

const COMPARED_OBSERVABLES: [&str; 10] = [
    "Mx", "My", "Mz", "Cxx", "Cxy", "Cxz", "Cyy", "Cyz", "Czz", "xi2",
];

fn observable_value(r: &ObservableRecord, k: usize) -> (f64, f64) {
    match k {
        0..=2 => (r.m[k], r.m_err[k]),
        3..=8 => {
            let (i, j) = output::UPPER_TRIANGLE[k - 3];
            (r.c[i][j], r.c_err[i][j])
        }
        _ => (r.xi2, r.xi2_err),
    }
}

/// Linear interpolation of a reference table at time `t`. The tables are
/// pre-sorted and `t` lies inside the reference range.
fn interpolate(reference: &[ObservableRecord], t: f64, k: usize) -> (f64, f64) {
    let hi = reference.partition_point(|r| r.t < t);
    if hi == 0 {
        return observable_value(&reference[0], k);
    }
    if hi == reference.len() {
        return observable_value(&reference[reference.len() - 1], k);
    }
    let (t0, t1) = (reference[hi - 1].t, reference[hi].t);
    let (v0, e0) = observable_value(&reference[hi - 1], k);
    let (v1, e1) = observable_value(&reference[hi], k);
    if t1 <= t0 {
        return (v1, e1);
    }
    let w = (t - t0) / (t1 - t0);
    (v0 + w * (v1 - v0), e0 + w * (e1 - e0))
}

/// Absolute deviation treated as agreement when both tables report zero
/// standard error (deterministic engines on both sides). Matches the
/// cross-oracle acceptance bound.
pub const DETERMINISTIC_TOLERANCE: f64 = 1e-6;

/// Compares a simulated table against a reference: per-observable maximum
/// deviation and z-scores (deviation over the combined standard error), the
/// fraction of |z| > 3 points, and the overall verdict. The reference is
/// interpolated linearly onto the simulated grid; undefined entries (NaN,
/// e.g. squeezing at vanishing spin length) are skipped. Points where both
/// tables report zero error are scored against
/// [`DETERMINISTIC_TOLERANCE`] / 3 so that z > 3 means a real mismatch
/// rather than floating-point noise.
pub fn compare_tables(
    sim: &[ObservableRecord],
    reference: &[ObservableRecord],
) -> Result<CompareReport> {
    if sim.is_empty() || reference.is_empty() {
        return Err(Error::Comparison("empty table".into()));
    }
    let mut sim: Vec<ObservableRecord> = sim.to_vec();
    let mut reference: Vec<ObservableRecord> = reference.to_vec();
    sim.sort_by(|a, b| a.t.total_cmp(&b.t));
    reference.sort_by(|a, b| a.t.total_cmp(&b.t));

    let lo = reference[0].t;
    let hi = reference[reference.len() - 1].t;
    let slack = 1e-9 * (1.0 + hi.abs());
    let in_range: Vec<&ObservableRecord> = sim
        .iter()
        .filter(|r| r.t >= lo - slack && r.t <= hi + slack)
        .collect();
    if in_range.is_empty() {
        return Err(Error::Comparison(format!(
            "time ranges are disjoint: simulated [{}, {}], reference [{lo}, {hi}]",
            sim[0].t,
            sim[sim.len() - 1].t
        )));
    }

    let mut observables = Vec::with_capacity(COMPARED_OBSERVABLES.len());
    let mut points_compared = 0;
    let mut total_violations = 0;
    for (k, name) in COMPARED_OBSERVABLES.iter().enumerate() {
        let mut points = 0;
        let mut max_dev = 0.0f64;
        let mut max_z = 0.0f64;
        let mut violations = 0;
        for r in &in_range {
            let (v_sim, e_sim) = observable_value(r, k);
            let (v_ref, e_ref) = interpolate(&reference, r.t, k);
            if !v_sim.is_finite() || !v_ref.is_finite() {
                continue;
            }
            let dev = (v_sim - v_ref).abs();
            let sigma = e_sim.hypot(e_ref);
            let z = if sigma > 0.0 {
                dev / sigma
            } else {
                dev / (DETERMINISTIC_TOLERANCE / 3.0)
            };
            points += 1;
            max_dev = max_dev.max(dev);
            max_z = max_z.max(z);
            if z > 3.0 {
                violations += 1;
            }
        }
        points_compared += points;
        total_violations += violations;
        observables.push(ObservableDeviation {
            name,
            points,
            max_abs_deviation: max_dev,
            max_abs_z: max_z,
            violations,
        });
    }

    Ok(CompareReport {
        observables,
        points_compared,
        violation_fraction: if points_compared > 0 {
            total_violations as f64 / points_compared as f64
        } else {
            0.0
        },
        pass: total_violations == 0,
    })
}
