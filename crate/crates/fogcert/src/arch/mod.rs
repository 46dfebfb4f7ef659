//! The three verification architectures and the plumbing they share.

pub mod assigned;
pub mod collaborative;
pub mod fixed;

use crate::engine::EngineError;
use crate::grid::{CellGrid, CellId, GridError};
use crate::metrics::{AuditRow, MetricsError, OracleStats, RunReport};
use crate::mobility::TraceError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("simulation setup error: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArchitectureKind {
    Fixed,
    AssignedCls,
    AssignedNls,
    Collaborative,
}

impl ArchitectureKind {
    pub fn arch_name(&self) -> &'static str {
        match self {
            ArchitectureKind::Fixed => "fixed",
            ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls => "assigned",
            ArchitectureKind::Collaborative => "collaborative",
        }
    }

    pub fn strategy_name(&self) -> &'static str {
        match self {
            ArchitectureKind::Fixed => "-",
            ArchitectureKind::AssignedCls => "cls",
            ArchitectureKind::AssignedNls => "nls",
            ArchitectureKind::Collaborative => "-",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArchitectureKind::Fixed => "fixed",
            ArchitectureKind::AssignedCls => "assigned-cls",
            ArchitectureKind::AssignedNls => "assigned-nls",
            ArchitectureKind::Collaborative => "collaborative",
        };
        f.write_str(s)
    }
}

impl FromStr for ArchitectureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(ArchitectureKind::Fixed),
            "assigned-cls" => Ok(ArchitectureKind::AssignedCls),
            "assigned-nls" => Ok(ArchitectureKind::AssignedNls),
            "collaborative" => Ok(ArchitectureKind::Collaborative),
            other => Err(format!(
                "unknown architecture '{other}' (expected fixed, assigned-cls, assigned-nls or collaborative)"
            )),
        }
    }
}

/// Draws location claims. With probability `pf` the claim is a fake cell;
/// fakes are drawn uniformly from cells at Chebyshev distance >= 2 from the
/// true cell, so a spoofed location never names the producer's own
/// neighborhood. Falls back to any other cell on grids too small for that.
#[derive(Debug, Clone)]
pub struct ClaimSampler {
    fake_pool: Vec<Vec<CellId>>,
    cols: u16,
}

impl ClaimSampler {
    pub fn new(grid: &CellGrid) -> Self {
        let fake_pool = grid.cells().map(|c| grid.cells_at_least(c, 2)).collect();
        Self { fake_pool, cols: grid.cols() }
    }

    /// Draw the claim for one publication. Consumes one `f64` draw, plus one
    /// index draw when lying; the order is fixed for reproducibility.
    pub fn draw(&self, rng: &mut ChaCha8Rng, pf: f64, true_cell: CellId) -> CellId {
        if pf <= 0.0 {
            return true_cell;
        }
        let lie: f64 = rng.gen();
        if lie >= pf {
            return true_cell;
        }
        let pool = &self.fake_pool[true_cell.row as usize * self.cols as usize + true_cell.col as usize];
        if pool.is_empty() {
            // a single-cell grid leaves nowhere to lie about
            return true_cell;
        }
        pool[rng.gen_range(0..pool.len())]
    }
}

/// What one simulated run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: RunReport,
    pub audits: Vec<AuditRow>,
    pub oracle: OracleStats,
}

/// First-publication offsets: producer `i` first publishes at
/// `i * interval / n`, then every `interval`. Staggering avoids synchronized
/// bursts.
pub(crate) fn staggered_phases(n: usize, interval: u64) -> Vec<u64> {
    (0..n as u64).map(|i| i * interval / n as u64).collect()
}
