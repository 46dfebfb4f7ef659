//! Discrete-event simulation of location certification in fog-based
//! publish/subscribe systems.
//!
//! Mobile producers publish sensor notifications tagged with the identifier
//! of the grid cell they claim to be in. Brokers (or the producers
//! themselves) verify those claims using short-range proximity evidence and
//! stamp every delivered notification with a boolean certification. Three
//! verification strategies are provided, each behind its own simulator:
//!
//! * [`arch::fixed`] — brokers anchored at cell centers; a claim is
//!   certified iff it names the cell of the broker that physically received
//!   it over short-range radio.
//! * [`arch::assigned`] — cloud brokers assigned to cells; producers attach
//!   neighbor lists to publications and brokers cross-check them against
//!   registries (complete-list or non-empty-list conditions).
//! * [`arch::collaborative`] — producers poll nearby peers before sending
//!   and the claim becomes whatever unique plurality the poll produced; the
//!   cloud broker only reads the poll flag.
//!
//! Runs are driven by a deterministic event queue ([`engine`]) over mobility
//! traces ([`mobility`]), and every certification decision is re-derived by
//! an independent oracle ([`metrics`]) so that simulator and specification
//! can be cross-checked notification by notification.
//!
//! The `examples/` directory contains one runnable example per capability;
//! the `fogcert` binary exposes the same runs behind flags and a flat
//! key-value config file (see `README.md`).

pub mod arch;
pub mod config;
pub mod engine;
pub mod grid;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod runner;
pub mod scenario;

pub use arch::ArchitectureKind;
pub use config::RunConfig;
pub use grid::{CellGrid, CellId, Position};
pub use metrics::{AuditRow, RunReport};
pub use mobility::TraceSet;
pub use model::{Notification, ProducerId, SimTime};
pub use runner::{run, RunOutcome};
