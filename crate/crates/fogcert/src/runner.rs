//! Experiment orchestration: one simulation per seed, aggregated.

use crate::arch::assigned::AssignedSim;
use crate::arch::collaborative::CollabSim;
use crate::arch::fixed::FixedSim;
use crate::arch::{ArchitectureKind, SimError, SimOutput};
use crate::config::{ConfigError, RunConfig};
use crate::engine::RngStreams;
use crate::metrics::{aggregate, MetricsError, RunReport};
use crate::mobility::{load_trace, synthesize, TraceError, TraceSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Results of a multi-seed experiment.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub per_seed: Vec<RunReport>,
    pub aggregate: RunReport,
    /// Audit rows per seed, in seed order.
    pub audits: Vec<(u64, Vec<crate::metrics::AuditRow>)>,
    pub oracle_checks: u64,
    pub oracle_disagreements: u64,
    pub first_disagreement: Option<String>,
    pub effective_config: String,
}

impl RunOutcome {
    pub fn oracle_clean(&self) -> bool {
        self.oracle_disagreements == 0
    }
}

/// The traces for one seed: a file if configured, else synthetic
/// random-waypoint traces seeded from the run seed's mobility substream.
pub fn traces_for_seed(config: &RunConfig, seed: u64) -> Result<TraceSet, RunError> {
    if let Some(path) = &config.trace_file {
        return Ok(load_trace(path)?);
    }
    let grid = config.grid()?;
    Ok(synthesize(
        &grid,
        config.producers,
        config.duration_ms,
        &config.waypoint_params(RngStreams::mobility_seed(seed)),
    ))
}

/// Execute one seed of the configured experiment.
pub fn run_single(config: &RunConfig, seed: u64) -> Result<SimOutput, RunError> {
    let traces = traces_for_seed(config, seed)?;
    let output = match config.arch {
        ArchitectureKind::Fixed => FixedSim::new(config.fixed_config()?, &traces, seed)?.run()?,
        ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls => {
            AssignedSim::new(config.assigned_config()?, &traces, seed)?.run()?
        }
        ArchitectureKind::Collaborative => {
            CollabSim::new(config.collab_config()?, &traces, seed)?.run()?
        }
    };
    Ok(output)
}

/// Execute the experiment over every configured seed and aggregate.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let mut per_seed = Vec::new();
    let mut audits = Vec::new();
    let mut checks = 0;
    let mut disagreements = 0;
    let mut first_disagreement = None;
    for &seed in &config.seeds {
        let out = run_single(config, seed)?;
        checks += out.oracle.checks;
        disagreements += out.oracle.disagreements;
        if first_disagreement.is_none() {
            first_disagreement = out.oracle.first_disagreement.clone();
        }
        per_seed.push(out.report);
        audits.push((seed, out.audits));
    }
    let aggregate = aggregate(&per_seed)?;
    Ok(RunOutcome {
        per_seed,
        aggregate,
        audits,
        oracle_checks: checks,
        oracle_disagreements: disagreements,
        first_disagreement,
        effective_config: config.to_config_string(),
    })
}
