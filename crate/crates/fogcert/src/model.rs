//! Domain types shared by every architecture: attribute triples,
//! notifications, identifiers and the certification vocabulary.
//!
//! A notification carries a set of `(name1, name2, value)` triples keyed by
//! the `(name1, name2)` pair. The location claim is the
//! `("location", "value")` triple; certification is a broker-added
//! `("location", "certified")` boolean triple.

use crate::grid::CellId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Simulation time in integer milliseconds. All protocol timings (2 s
/// beacons, 30 s warm-up, 1 min publications) are exact in this unit.
pub type SimTime = u64;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ProducerId(pub u32);

impl fmt::Display for ProducerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct BrokerId(pub u32);

impl fmt::Display for BrokerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

pub const ATTR_LOCATION: &str = "location";
pub const FACET_VALUE: &str = "value";
pub const FACET_CERTIFIED: &str = "certified";
pub const FACET_COLLAB_DECIDED: &str = "collaborativelyDecided";

/// Closed variant for triple values; verification only ever compares values
/// for equality, so no free-form payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TripleValue {
    Bool(bool),
    Int(i64),
    Cell(CellId),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTriple {
    pub name1: String,
    pub name2: String,
    pub value: TripleValue,
}

/// Architecture-specific verification payload attached next to the triples.
/// Removable metadata: brokers strip it during verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExtraLocationInfo {
    /// Sorted, deduplicated producer ids heard over short range.
    NeighborList(Vec<ProducerId>),
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("notification carries no location/value triple")]
    MissingLocation,
    #[error("notification already carries a certification triple")]
    AlreadyCertified,
    #[error("notification carries no collaborativelyDecided triple")]
    MissingFlag,
    #[error("malformed notification line: {0}")]
    Malformed(String),
}

/// One event notification: a producer-stamped sequence number plus a set of
/// attribute triples and an optional extra verification payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub producer: ProducerId,
    pub seq: u64,
    pub created_at: SimTime,
    triples: BTreeMap<(String, String), TripleValue>,
    pub extra: Option<ExtraLocationInfo>,
}

impl Notification {
    /// Build a notification carrying a location claim.
    pub fn new(producer: ProducerId, seq: u64, created_at: SimTime, claim: CellId) -> Self {
        let mut triples = BTreeMap::new();
        triples.insert(
            (ATTR_LOCATION.to_string(), FACET_VALUE.to_string()),
            TripleValue::Cell(claim),
        );
        Self {
            producer,
            seq,
            created_at,
            triples,
            extra: None,
        }
    }

    /// Insert or replace a triple. `(name1, name2)` uniquely identifies a
    /// triple within one notification, so this upserts.
    pub fn set_triple(&mut self, name1: &str, name2: &str, value: TripleValue) {
        self.triples
            .insert((name1.to_string(), name2.to_string()), value);
    }

    pub fn get_triple(&self, name1: &str, name2: &str) -> Option<&TripleValue> {
        self.triples
            .get(&(name1.to_string(), name2.to_string()))
    }

    /// Triples in `(name1, name2)` order.
    pub fn triples(&self) -> impl Iterator<Item = AttributeTriple> + '_ {
        self.triples.iter().map(|((n1, n2), v)| AttributeTriple {
            name1: n1.clone(),
            name2: n2.clone(),
            value: v.clone(),
        })
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// The claimed cell from the location/value triple.
    pub fn location_claim(&self) -> Result<CellId, ModelError> {
        match self.get_triple(ATTR_LOCATION, FACET_VALUE) {
            Some(TripleValue::Cell(c)) => Ok(*c),
            _ => Err(ModelError::MissingLocation),
        }
    }

    /// Replace the location claim (collaborative polling does this when it
    /// adopts the poll winner).
    pub fn set_location_claim(&mut self, claim: CellId) {
        self.set_triple(ATTR_LOCATION, FACET_VALUE, TripleValue::Cell(claim));
    }

    /// The certification verdict, if a broker already processed this.
    pub fn certified(&self) -> Option<bool> {
        match self.get_triple(ATTR_LOCATION, FACET_CERTIFIED) {
            Some(TripleValue::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    /// Stamp the verdict and strip the extra verification payload. Fails if
    /// a verdict is already present, which would mean double processing.
    pub fn certify(mut self, verdict: bool) -> Result<Notification, ModelError> {
        if self.certified().is_some() {
            return Err(ModelError::AlreadyCertified);
        }
        self.set_triple(ATTR_LOCATION, FACET_CERTIFIED, TripleValue::Bool(verdict));
        self.extra = None;
        Ok(self)
    }

    pub fn set_collab_decided(&mut self, flag: bool) {
        self.set_triple(ATTR_LOCATION, FACET_COLLAB_DECIDED, TripleValue::Bool(flag));
    }

    /// Read and remove the collaborativelyDecided triple.
    pub fn take_collab_decided(&mut self) -> Result<bool, ModelError> {
        let key = (ATTR_LOCATION.to_string(), FACET_COLLAB_DECIDED.to_string());
        match self.triples.remove(&key) {
            Some(TripleValue::Bool(b)) => Ok(b),
            Some(other) => {
                self.triples.insert(key, other);
                Err(ModelError::MissingFlag)
            }
            None => Err(ModelError::MissingFlag),
        }
    }

    /// Serialize to one line of JSON with fixed field order: producer, seq,
    /// created_at, triples sorted by (name1, name2), extra.
    pub fn to_line(&self) -> String {
        let wire = WireNotification {
            producer: self.producer,
            seq: self.seq,
            created_at: self.created_at,
            triples: self.triples().collect(),
            extra: self.extra.clone(),
        };
        serde_json::to_string(&wire).expect("notification serialization cannot fail")
    }

    /// Parse one serialized line back into a notification.
    pub fn parse_line(line: &str) -> Result<Notification, ModelError> {
        let wire: WireNotification =
            serde_json::from_str(line).map_err(|e| ModelError::Malformed(e.to_string()))?;
        let mut triples = BTreeMap::new();
        for t in wire.triples {
            if triples.insert((t.name1.clone(), t.name2.clone()), t.value).is_some() {
                return Err(ModelError::Malformed(format!(
                    "duplicate triple ({}, {})",
                    t.name1, t.name2
                )));
            }
        }
        Ok(Notification {
            producer: wire.producer,
            seq: wire.seq,
            created_at: wire.created_at,
            triples,
            extra: wire.extra,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WireNotification {
    producer: ProducerId,
    seq: u64,
    created_at: SimTime,
    triples: Vec<AttributeTriple>,
    extra: Option<ExtraLocationInfo>,
}

/// What was actually true when a notification was published, recorded for
/// evaluation only. Immutable once written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub true_cell: CellId,
    pub claimed_cell: CellId,
}

impl GroundTruth {
    pub fn claim_is_true(&self) -> bool {
        self.true_cell == self.claimed_cell
    }
}
