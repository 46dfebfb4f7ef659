//! Run configuration: flat dotted keys, file- and flag-friendly.
//!
//! A config is a set of `key = value` lines (`#` comments allowed).
//! Command-line flags override file values, and every run can emit its
//! effective config (all defaults resolved), which re-parses to an
//! identical configuration for reproducibility.

use crate::arch::assigned::{AssignedConfig, Strategy};
use crate::arch::collaborative::CollabConfig;
use crate::arch::fixed::FixedConfig;
use crate::arch::ArchitectureKind;
use crate::engine::{RadioModel, Uplink};
use crate::grid::{CellGrid, Position};
use crate::mobility::WaypointParams;
use crate::model::SimTime;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config error at '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("config parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn invalid(key: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.to_string() }
}

/// Default short-range radio range for the fixed-brokers architecture.
/// Slightly above the 100 m nominal WiFi figure: real radios reach past the
/// nominal range, which is what lets a producer on a cell edge still talk to
/// its previous broker. Corner coverage gaps persist below ~141 m.
pub const FIXED_RANGE_DEFAULT_M: f64 = 125.0;

/// Everything one experiment needs. See `README.md` for the key reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchitectureKind,
    pub pf: f64,
    pub seeds: Vec<u64>,
    pub producers: usize,
    pub duration_ms: SimTime,
    pub notification_interval_ms: Option<SimTime>,
    pub trace_file: Option<PathBuf>,
    pub grid_origin: (f64, f64),
    pub grid_width_m: f64,
    pub grid_height_m: f64,
    pub radio_range_m: Option<f64>,
    pub radio_loss_prob: Option<f64>,
    pub uplink_latency_ms: SimTime,
    pub sample_interval_ms: SimTime,
    pub fixed_beacon_interval_ms: SimTime,
    pub fixed_max_connection_ms: SimTime,
    pub fixed_cell_size_m: f64,
    pub assigned_cell_size_m: f64,
    pub assigned_beacon_interval_ms: SimTime,
    pub assigned_beacon_ttl_ms: SimTime,
    pub assigned_registry_ttl_ms: SimTime,
    pub assigned_exchange_interval_ms: SimTime,
    pub assigned_warmup_ms: SimTime,
    pub assigned_reconnect_threshold: u32,
    pub assigned_sample_every: u64,
    pub collab_poll_wait_ms: SimTime,
    pub collab_cell_size_m: f64,
    pub collab_broker_count: usize,
    pub speed_range_mps: (f64, f64),
    pub pause_range_s: (f64, f64),
    /// Remembers `assigned.strategy` so `arch = assigned` resolves to it
    /// regardless of key order.
    strategy_pref: Strategy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: ArchitectureKind::Fixed,
            pf: 0.0,
            seeds: vec![1, 2, 3, 4, 5],
            producers: 100,
            duration_ms: 3_600_000,
            notification_interval_ms: None,
            trace_file: None,
            grid_origin: (0.0, 0.0),
            grid_width_m: 1200.0,
            grid_height_m: 1200.0,
            radio_range_m: None,
            radio_loss_prob: None,
            uplink_latency_ms: 50,
            sample_interval_ms: 100,
            fixed_beacon_interval_ms: 2_000,
            fixed_max_connection_ms: 2_000,
            fixed_cell_size_m: 200.0,
            assigned_cell_size_m: 100.0,
            assigned_beacon_interval_ms: 2_000,
            assigned_beacon_ttl_ms: 2_500,
            assigned_registry_ttl_ms: 6_000,
            assigned_exchange_interval_ms: 2_000,
            assigned_warmup_ms: 30_000,
            assigned_reconnect_threshold: 2,
            assigned_sample_every: 30,
            collab_poll_wait_ms: 2_000,
            collab_cell_size_m: 200.0,
            collab_broker_count: 4,
            speed_range_mps: (0.9, 1.5),
            pause_range_s: (10.0, 50.0),
            strategy_pref: Strategy::Cls,
        }
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for term in value.split(',') {
        let term = term.trim();
        if term.is_empty() {
            continue;
        }
        if let Some((a, b)) = term.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start '{a}'"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range end '{b}'"))?;
            if b < a {
                return Err(format!("empty seed range {a}..{b}"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(term.parse().map_err(|_| format!("bad seed '{term}'"))?);
        }
    }
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(seeds)
}

impl RunConfig {
    /// Parse a config file body, applying keys onto `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
                line: lineno + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one dotted key from its string form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e| invalid(key, e))
        }
        match key {
            "arch" => {
                self.arch = match value {
                    "assigned" => match self.strategy_pref {
                        Strategy::Cls => ArchitectureKind::AssignedCls,
                        Strategy::Nls => ArchitectureKind::AssignedNls,
                    },
                    other => other.parse().map_err(|e: String| invalid(key, e))?,
                };
                match self.arch {
                    ArchitectureKind::AssignedCls => self.strategy_pref = Strategy::Cls,
                    ArchitectureKind::AssignedNls => self.strategy_pref = Strategy::Nls,
                    _ => {}
                }
            }
            "assigned.strategy" => {
                self.strategy_pref = match value {
                    "cls" => Strategy::Cls,
                    "nls" => Strategy::Nls,
                    other => return Err(invalid(key, format!("expected cls or nls, got '{other}'"))),
                };
                match (self.arch, self.strategy_pref) {
                    (ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls, Strategy::Cls) => {
                        self.arch = ArchitectureKind::AssignedCls
                    }
                    (ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls, Strategy::Nls) => {
                        self.arch = ArchitectureKind::AssignedNls
                    }
                    _ => {}
                }
            }
            "pf" => self.pf = num(key, value)?,
            "seeds" => self.seeds = parse_seeds(value).map_err(|e| invalid(key, e))?,
            "producers" => self.producers = num(key, value)?,
            "duration_ms" => self.duration_ms = num(key, value)?,
            "notification_interval_ms" => self.notification_interval_ms = Some(num(key, value)?),
            "trace.file" => self.trace_file = Some(PathBuf::from(value)),
            "grid.origin_x" => self.grid_origin.0 = num(key, value)?,
            "grid.origin_y" => self.grid_origin.1 = num(key, value)?,
            "grid.width_m" => self.grid_width_m = num(key, value)?,
            "grid.height_m" => self.grid_height_m = num(key, value)?,
            "radio.range_m" => self.radio_range_m = Some(num(key, value)?),
            "radio.loss_prob" => self.radio_loss_prob = Some(num(key, value)?),
            "uplink.latency_ms" => self.uplink_latency_ms = num(key, value)?,
            "engine.sample_interval_ms" => self.sample_interval_ms = num(key, value)?,
            "fixed.beacon_interval_ms" => self.fixed_beacon_interval_ms = num(key, value)?,
            "fixed.max_connection_ms" => self.fixed_max_connection_ms = num(key, value)?,
            "fixed.cell_size_m" => self.fixed_cell_size_m = num(key, value)?,
            "assigned.cell_size_m" => self.assigned_cell_size_m = num(key, value)?,
            "assigned.beacon_interval_ms" => self.assigned_beacon_interval_ms = num(key, value)?,
            "assigned.beacon_ttl_ms" => self.assigned_beacon_ttl_ms = num(key, value)?,
            "assigned.registry_ttl_ms" => self.assigned_registry_ttl_ms = num(key, value)?,
            "assigned.exchange_interval_ms" => {
                self.assigned_exchange_interval_ms = num(key, value)?
            }
            "assigned.warmup_ms" => self.assigned_warmup_ms = num(key, value)?,
            "assigned.reconnect_threshold" => self.assigned_reconnect_threshold = num(key, value)?,
            "assigned.sample_every" => self.assigned_sample_every = num(key, value)?,
            "collab.poll_wait_ms" => self.collab_poll_wait_ms = num(key, value)?,
            "collab.cell_size_m" => self.collab_cell_size_m = num(key, value)?,
            "collab.broker_count" => self.collab_broker_count = num(key, value)?,
            "mobility.speed_min_mps" => self.speed_range_mps.0 = num(key, value)?,
            "mobility.speed_max_mps" => self.speed_range_mps.1 = num(key, value)?,
            "mobility.pause_min_s" => self.pause_range_s.0 = num(key, value)?,
            "mobility.pause_max_s" => self.pause_range_s.1 = num(key, value)?,
            other => return Err(invalid(other, "unknown key")),
        }
        Ok(())
    }

    /// Radio range for the current architecture, defaults resolved.
    pub fn effective_radio_range(&self) -> f64 {
        self.radio_range_m.unwrap_or(match self.arch {
            ArchitectureKind::Fixed => FIXED_RANGE_DEFAULT_M,
            _ => 100.0,
        })
    }

    /// Short-range loss probability: defaults to 1% in the fixed
    /// architecture (WiFi collisions), lossless elsewhere.
    pub fn effective_loss_prob(&self) -> f64 {
        self.radio_loss_prob.unwrap_or(match self.arch {
            ArchitectureKind::Fixed => 0.01,
            _ => 0.0,
        })
    }

    /// Publication interval: one minute, except the assigned architecture
    /// publishes every beacon interval and samples metrics down.
    pub fn effective_notification_interval(&self) -> SimTime {
        self.notification_interval_ms.unwrap_or(match self.arch {
            ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls => {
                self.assigned_beacon_interval_ms
            }
            _ => 60_000,
        })
    }

    /// A copy with every defaulted option made explicit.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        c.radio_range_m = Some(self.effective_radio_range());
        c.radio_loss_prob = Some(self.effective_loss_prob());
        c.notification_interval_ms = Some(self.effective_notification_interval());
        c
    }

    /// Render as config-file text, sorted by key. The output re-parses to
    /// `self.effective()`.
    pub fn to_config_string(&self) -> String {
        let c = self.effective();
        let seeds = c
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut pairs: Vec<(String, String)> = vec![
            ("arch".into(), c.arch.to_string()),
            ("pf".into(), c.pf.to_string()),
            ("seeds".into(), seeds),
            ("producers".into(), c.producers.to_string()),
            ("duration_ms".into(), c.duration_ms.to_string()),
            (
                "notification_interval_ms".into(),
                c.notification_interval_ms.unwrap().to_string(),
            ),
            ("grid.origin_x".into(), c.grid_origin.0.to_string()),
            ("grid.origin_y".into(), c.grid_origin.1.to_string()),
            ("grid.width_m".into(), c.grid_width_m.to_string()),
            ("grid.height_m".into(), c.grid_height_m.to_string()),
            ("radio.range_m".into(), c.radio_range_m.unwrap().to_string()),
            ("radio.loss_prob".into(), c.radio_loss_prob.unwrap().to_string()),
            ("uplink.latency_ms".into(), c.uplink_latency_ms.to_string()),
            ("engine.sample_interval_ms".into(), c.sample_interval_ms.to_string()),
            ("fixed.beacon_interval_ms".into(), c.fixed_beacon_interval_ms.to_string()),
            ("fixed.max_connection_ms".into(), c.fixed_max_connection_ms.to_string()),
            ("fixed.cell_size_m".into(), c.fixed_cell_size_m.to_string()),
            ("assigned.strategy".into(), c.strategy_pref.name().into()),
            ("assigned.cell_size_m".into(), c.assigned_cell_size_m.to_string()),
            ("assigned.beacon_interval_ms".into(), c.assigned_beacon_interval_ms.to_string()),
            ("assigned.beacon_ttl_ms".into(), c.assigned_beacon_ttl_ms.to_string()),
            ("assigned.registry_ttl_ms".into(), c.assigned_registry_ttl_ms.to_string()),
            (
                "assigned.exchange_interval_ms".into(),
                c.assigned_exchange_interval_ms.to_string(),
            ),
            ("assigned.warmup_ms".into(), c.assigned_warmup_ms.to_string()),
            (
                "assigned.reconnect_threshold".into(),
                c.assigned_reconnect_threshold.to_string(),
            ),
            ("assigned.sample_every".into(), c.assigned_sample_every.to_string()),
            ("collab.poll_wait_ms".into(), c.collab_poll_wait_ms.to_string()),
            ("collab.cell_size_m".into(), c.collab_cell_size_m.to_string()),
            ("collab.broker_count".into(), c.collab_broker_count.to_string()),
            ("mobility.speed_min_mps".into(), c.speed_range_mps.0.to_string()),
            ("mobility.speed_max_mps".into(), c.speed_range_mps.1.to_string()),
            ("mobility.pause_min_s".into(), c.pause_range_s.0.to_string()),
            ("mobility.pause_max_s".into(), c.pause_range_s.1.to_string()),
        ];
        if let Some(path) = &c.trace_file {
            pairs.push(("trace.file".into(), path.display().to_string()));
        }
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.pf) {
            return Err(invalid("pf", format!("{} outside [0, 1]", self.pf)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed required"));
        }
        if self.producers == 0 {
            return Err(invalid("producers", "at least one producer required"));
        }
        if matches!(self.arch, ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls)
            && self.duration_ms <= self.assigned_warmup_ms
        {
            return Err(invalid(
                "duration_ms",
                format!(
                    "{} ms does not exceed the warm-up ({} ms)",
                    self.duration_ms, self.assigned_warmup_ms
                ),
            ));
        }
        let (slo, shi) = self.speed_range_mps;
        if !(slo > 0.0 && shi >= slo) {
            return Err(invalid("mobility.speed_min_mps", "need 0 < min <= max"));
        }
        let (plo, phi) = self.pause_range_s;
        if !(plo >= 0.0 && phi >= plo) {
            return Err(invalid("mobility.pause_min_s", "need 0 <= min <= max"));
        }
        if self.assigned_sample_every == 0 {
            return Err(invalid("assigned.sample_every", "must be at least 1"));
        }
        if self.collab_broker_count == 0 {
            return Err(invalid("collab.broker_count", "must be at least 1"));
        }
        // the grid must fit at least one cell of the architecture's size
        self.grid()?;
        Ok(())
    }

    fn cell_size(&self) -> f64 {
        match self.arch {
            ArchitectureKind::Fixed => self.fixed_cell_size_m,
            ArchitectureKind::AssignedCls | ArchitectureKind::AssignedNls => {
                self.assigned_cell_size_m
            }
            ArchitectureKind::Collaborative => self.collab_cell_size_m,
        }
    }

    /// The grid for the current architecture's cell size.
    pub fn grid(&self) -> Result<CellGrid, ConfigError> {
        CellGrid::new(
            Position::new(self.grid_origin.0, self.grid_origin.1),
            self.grid_width_m,
            self.grid_height_m,
            self.cell_size(),
        )
        .map_err(|e| invalid("grid.width_m", e))
    }

    fn radio(&self) -> RadioModel {
        RadioModel::new(self.effective_radio_range(), self.effective_loss_prob())
    }

    pub fn waypoint_params(&self, seed: u64) -> WaypointParams {
        WaypointParams {
            speed_range: self.speed_range_mps,
            pause_range_ms: (
                (self.pause_range_s.0 * 1000.0).round() as u64,
                (self.pause_range_s.1 * 1000.0).round() as u64,
            ),
            seed,
        }
    }

    pub fn fixed_config(&self) -> Result<FixedConfig, ConfigError> {
        Ok(FixedConfig {
            grid: self.grid()?,
            producers: self.producers,
            duration_ms: self.duration_ms,
            notification_interval_ms: self.effective_notification_interval(),
            beacon_interval_ms: self.fixed_beacon_interval_ms,
            max_connection_ms: self.fixed_max_connection_ms,
            sample_interval_ms: self.sample_interval_ms,
            radio: self.radio(),
            pf: self.pf,
            publish_phases: None,
            beacon_phases: None,
            pf_per_producer: None,
        })
    }

    pub fn assigned_config(&self) -> Result<AssignedConfig, ConfigError> {
        let strategy = match self.arch {
            ArchitectureKind::AssignedNls => Strategy::Nls,
            _ => Strategy::Cls,
        };
        Ok(AssignedConfig {
            grid: self.grid()?,
            producers: self.producers,
            duration_ms: self.duration_ms,
            strategy,
            notification_interval_ms: self.effective_notification_interval(),
            beacon_interval_ms: self.assigned_beacon_interval_ms,
            beacon_ttl_ms: self.assigned_beacon_ttl_ms,
            registry_ttl_ms: self.assigned_registry_ttl_ms,
            exchange_interval_ms: self.assigned_exchange_interval_ms,
            warmup_ms: self.assigned_warmup_ms,
            reconnect_threshold: self.assigned_reconnect_threshold,
            sample_every: self.assigned_sample_every,
            radio: self.radio(),
            uplink: Uplink { latency_ms: self.uplink_latency_ms },
            pf: self.pf,
            pf_per_producer: None,
        })
    }

    pub fn collab_config(&self) -> Result<CollabConfig, ConfigError> {
        Ok(CollabConfig {
            grid: self.grid()?,
            producers: self.producers,
            duration_ms: self.duration_ms,
            notification_interval_ms: self.effective_notification_interval(),
            poll_wait_ms: self.collab_poll_wait_ms,
            broker_count: self.collab_broker_count,
            radio: self.radio(),
            uplink: Uplink { latency_ms: self.uplink_latency_ms },
            pf: self.pf,
            publish_phases: None,
            pf_per_producer: None,
        })
    }
}
