//! Assigned-brokers architecture.
//!
//! Every cell has a broker in the cloud. Producers discover their access
//! broker from their (possibly false) claimed cell, reach it over a lossless
//! uplink, and attach the list of neighbors they heard beaconing recently.
//! Each broker keeps a registry of the producers currently attached to it
//! that still send valid claims for its cell, and snapshots of the adjacent
//! brokers' registries refreshed by periodic exchange. Verification is one
//! of two set conditions over (neighbor list, registry, adjacent
//! registries): the complete-list strategy or the non-empty-list strategy.
//!
//! A warm-up interval runs with honest claims and suppressed counting, and
//! metrics are sampled one publication in `sample_every` to keep reported
//! volumes comparable to the one-minute architectures.

use crate::arch::{staggered_phases, ClaimSampler, SimError, SimOutput};
use crate::engine::{BeaconSource, Event, EventQueue, RadioModel, RngStreams, Uplink};
use crate::grid::{CellGrid, CellId, Position};
use crate::metrics::{AuditOutcome, AuditRow, Ledger, VerdictSnapshot};
use crate::mobility::TraceSet;
use crate::model::{BrokerId, ExtraLocationInfo, GroundTruth, Notification, ProducerId, SimTime};
use std::collections::BTreeMap;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Complete-list: the neighbor list must include every registered
    /// producer and may not include anyone unknown to this broker and its
    /// adjacent brokers.
    Cls,
    /// Non-empty-list: at least one reported neighbor must be registered
    /// with this broker.
    Nls,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Cls => "cls",
            Strategy::Nls => "nls",
        }
    }
}

/// The producer-side extra payload: a snapshot of the current neighbor list.
pub fn prepare_extra(neighbor_list: &BTreeSet<ProducerId>) -> ExtraLocationInfo {
    ExtraLocationInfo::NeighborList(neighbor_list.iter().copied().collect())
}

/// Complete-list condition. `registered` is the broker's registry with the
/// sender already excluded (a producer cannot beacon to itself).
pub fn cls_verdict(
    claim: CellId,
    broker_cell: CellId,
    registered: &BTreeSet<ProducerId>,
    adjacent_registered: &BTreeSet<ProducerId>,
    neighbor_list: &BTreeSet<ProducerId>,
) -> bool {
    claim == broker_cell
        && registered.is_subset(neighbor_list)
        && neighbor_list
            .iter()
            .all(|b| registered.contains(b) || adjacent_registered.contains(b))
}

/// Non-empty-list condition over the same sets.
pub fn nls_verdict(
    claim: CellId,
    broker_cell: CellId,
    registered: &BTreeSet<ProducerId>,
    neighbor_list: &BTreeSet<ProducerId>,
) -> bool {
    claim == broker_cell && !registered.is_disjoint(neighbor_list)
}

#[derive(Debug, Clone)]
pub struct AssignedConfig {
    pub grid: CellGrid,
    pub producers: usize,
    pub duration_ms: SimTime,
    pub strategy: Strategy,
    pub notification_interval_ms: SimTime,
    pub beacon_interval_ms: SimTime,
    /// Neighbor-list entries older than this are evicted.
    pub beacon_ttl_ms: SimTime,
    /// Registry entries with no valid claim for this long expire.
    pub registry_ttl_ms: SimTime,
    pub exchange_interval_ms: SimTime,
    pub warmup_ms: SimTime,
    /// Consecutive uncertified results before the producer re-runs broker
    /// discovery with its current claimed cell.
    pub reconnect_threshold: u32,
    /// Count one publication in this many towards reported metrics.
    pub sample_every: u64,
    pub radio: RadioModel,
    pub uplink: Uplink,
    pub pf: f64,
    pub pf_per_producer: Option<Vec<f64>>,
}

#[derive(Debug)]
struct ProducerState {
    /// Broker index (== cell index) the producer is currently attached to.
    attached: Option<usize>,
    heard: BTreeMap<ProducerId, SimTime>,
    consecutive_uncertified: u32,
    next_seq: u64,
    publications_after_warmup: u64,
}

#[derive(Debug)]
struct BrokerState {
    cell: CellId,
    /// Attached producers and the time of their last valid claim.
    registry: BTreeMap<ProducerId, SimTime>,
    /// Snapshot of adjacent brokers' registries from the last exchange.
    adjacent_registered: BTreeSet<ProducerId>,
}

#[derive(Debug)]
struct InFlight {
    producer: usize,
    broker: usize,
    notif: Notification,
    truth: GroundTruth,
    neighbor_list: BTreeSet<ProducerId>,
    published_at: SimTime,
    counted: bool,
}

pub struct AssignedSim {
    cfg: AssignedConfig,
    traces: TraceSet,
    queue: EventQueue,
    rngs: RngStreams,
    sampler: ClaimSampler,
    adjacency: Vec<Vec<usize>>,
    brokers: Vec<BrokerState>,
    producers: Vec<ProducerState>,
    in_flight: BTreeMap<u64, InFlight>,
    next_msg: u64,
    warmed_up: bool,
    ledger: Ledger,
}

impl AssignedSim {
    pub fn new(cfg: AssignedConfig, traces: &TraceSet, seed: u64) -> Result<Self, SimError> {
        if traces.producer_count() < cfg.producers {
            return Err(SimError::Setup(format!(
                "trace set covers {} producers, config asks for {}",
                traces.producer_count(),
                cfg.producers
            )));
        }
        if cfg.warmup_ms >= cfg.duration_ms {
            return Err(SimError::Setup(format!(
                "warm-up {} ms must be shorter than the run ({} ms)",
                cfg.warmup_ms, cfg.duration_ms
            )));
        }
        let mut traces = traces.clone().clamped(&cfg.grid);
        traces.extend_duration(cfg.duration_ms);
        let adjacency: Vec<Vec<usize>> = cfg
            .grid
            .cells()
            .map(|cell| {
                cfg.grid
                    .cells()
                    .filter(|other| cfg.grid.adjacent(cell, *other))
                    .map(|other| cfg.grid.cell_index(other))
                    .collect()
            })
            .collect();
        let brokers = cfg
            .grid
            .cells()
            .map(|cell| BrokerState {
                cell,
                registry: BTreeMap::new(),
                adjacent_registered: BTreeSet::new(),
            })
            .collect();
        let producers = (0..cfg.producers)
            .map(|_| ProducerState {
                attached: None,
                heard: BTreeMap::new(),
                consecutive_uncertified: 0,
                next_seq: 0,
                publications_after_warmup: 0,
            })
            .collect();
        let sampler = ClaimSampler::new(&cfg.grid);
        let ledger = Ledger::new("assigned", cfg.strategy.name(), cfg.pf, seed);
        Ok(Self {
            cfg,
            traces,
            queue: EventQueue::new(),
            rngs: RngStreams::new(seed),
            sampler,
            adjacency,
            brokers,
            producers,
            in_flight: BTreeMap::new(),
            next_msg: 0,
            warmed_up: false,
            ledger,
        })
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        self.run_loop()?;
        let (report, audits, oracle) = self.ledger.finalize()?;
        Ok(SimOutput { report, audits, oracle })
    }

    fn position(&self, p: usize, t: SimTime) -> Position {
        self.traces
            .position_at(ProducerId(p as u32), t)
            .expect("traces cover the full run")
    }

    /// Discovery service: the broker responsible for a cell.
    fn discover_broker(&self, location: CellId) -> Result<usize, SimError> {
        if !self.cfg.grid.contains_cell(location) {
            return Err(SimError::Setup(format!("unknown cell {location}")));
        }
        Ok(self.cfg.grid.cell_index(location))
    }

    /// Attach to the broker serving `location`. The previous broker cancels
    /// the connection and drops the producer's registration.
    fn attach(&mut self, p: usize, location: CellId) -> Result<usize, SimError> {
        let target = self.discover_broker(location)?;
        if self.producers[p].attached != Some(target) {
            if let Some(old) = self.producers[p].attached {
                self.brokers[old].registry.remove(&ProducerId(p as u32));
            }
            self.producers[p].attached = Some(target);
        }
        Ok(target)
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        for (p, phase) in staggered_phases(self.cfg.producers, self.cfg.beacon_interval_ms)
            .iter()
            .enumerate()
        {
            if *phase < self.cfg.duration_ms {
                self.queue
                    .schedule(*phase, Event::Beacon(BeaconSource::Producer(ProducerId(p as u32))))?;
            }
        }
        // publications run half a beacon interval out of phase with beacons
        let publish_offset = self.cfg.beacon_interval_ms / 2;
        for (p, phase) in staggered_phases(self.cfg.producers, self.cfg.notification_interval_ms)
            .iter()
            .enumerate()
        {
            let at = *phase + publish_offset;
            if at < self.cfg.duration_ms {
                self.queue.schedule(at, Event::Publish(ProducerId(p as u32)))?;
            }
        }
        let exchange_at = self.cfg.exchange_interval_ms / 4;
        if exchange_at < self.cfg.duration_ms {
            self.queue.schedule(exchange_at, Event::RegistryExchange)?;
        }
        self.queue.schedule(self.cfg.warmup_ms, Event::WarmupEnd)?;

        // recurring events stop before the end of the run; uplink
        // deliveries drain past it so no notification stays in flight
        while let Some((t, event)) = self.queue.pop() {
            match event {
                Event::Beacon(BeaconSource::Producer(p)) => self.handle_beacon(p.0 as usize, t)?,
                Event::Publish(p) => self.handle_publish(p.0 as usize, t)?,
                Event::RegistryExchange => self.handle_exchange(t)?,
                Event::WarmupEnd => self.warmed_up = true,
                Event::Delivery(msg) => self.handle_delivery(msg, t)?,
                other => unreachable!("assigned architecture never schedules {other:?}"),
            }
        }
        Ok(())
    }

    fn handle_beacon(&mut self, p: usize, t: SimTime) -> Result<(), SimError> {
        let from = self.position(p, t);
        let pid = ProducerId(p as u32);
        for q in 0..self.cfg.producers {
            if q == p {
                continue;
            }
            let pos = self.position(q, t);
            if !self.cfg.radio.in_range(from, pos) {
                continue;
            }
            if !self.cfg.radio.receives(&mut self.rngs.radio) {
                continue;
            }
            self.producers[q].heard.insert(pid, t);
        }
        let next = t + self.cfg.beacon_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue
                .schedule(next, Event::Beacon(BeaconSource::Producer(pid)))?;
        }
        Ok(())
    }

    /// Current neighbor list: producers heard within the beacon TTL.
    fn neighbor_list(&mut self, p: usize, t: SimTime) -> BTreeSet<ProducerId> {
        let ttl = self.cfg.beacon_ttl_ms;
        self.producers[p]
            .heard
            .retain(|_, heard_at| t.saturating_sub(*heard_at) <= ttl);
        self.producers[p].heard.keys().copied().collect()
    }

    fn handle_publish(&mut self, p: usize, t: SimTime) -> Result<(), SimError> {
        let pid = ProducerId(p as u32);
        let seq = self.producers[p].next_seq;
        self.producers[p].next_seq += 1;
        let pos = self.position(p, t);
        let true_cell = self.cfg.grid.cell_of(pos)?;
        // honest claims and no counting until the warm-up ends
        let claimed = if self.warmed_up {
            let pf = self
                .cfg
                .pf_per_producer
                .as_ref()
                .map_or(self.cfg.pf, |v| v[p]);
            self.sampler.draw(&mut self.rngs.claims, pf, true_cell)
        } else {
            true_cell
        };
        let counted = if self.warmed_up {
            self.producers[p].publications_after_warmup += 1;
            (self.producers[p].publications_after_warmup - 1).is_multiple_of(self.cfg.sample_every)
        } else {
            false
        };
        let truth = GroundTruth { true_cell, claimed_cell: claimed };
        self.ledger.record_truth(pid, seq, truth);
        let neighbor_list = self.neighbor_list(p, t);
        let mut notif = Notification::new(pid, seq, t, claimed);
        notif.extra = Some(prepare_extra(&neighbor_list));
        // the claimed cell drives broker discovery, so a lying producer
        // attaches to the wrong-area broker
        let broker = self.attach(p, claimed)?;
        self.ledger.publish(counted, truth.claim_is_true(), true);
        let msg = self.next_msg;
        self.next_msg += 1;
        self.in_flight.insert(
            msg,
            InFlight {
                producer: p,
                broker,
                notif,
                truth,
                neighbor_list,
                published_at: t,
                counted,
            },
        );
        self.cfg
            .uplink
            .send(&mut self.queue, Some(BrokerId(broker as u32)), msg)?;
        let next = t + self.cfg.notification_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue.schedule(next, Event::Publish(pid))?;
        }
        Ok(())
    }

    fn handle_delivery(&mut self, msg: u64, t: SimTime) -> Result<(), SimError> {
        let inflight = self.in_flight.remove(&msg).expect("pending uplink message");
        let b = inflight.broker;
        let pid = ProducerId(inflight.producer as u32);
        let ttl = self.cfg.registry_ttl_ms;
        self.brokers[b]
            .registry
            .retain(|_, last_seen| t.saturating_sub(*last_seen) <= ttl);
        let registered: BTreeSet<ProducerId> = self.brokers[b]
            .registry
            .keys()
            .copied()
            .filter(|id| *id != pid)
            .collect();
        let claim = inflight
            .notif
            .location_claim()
            .expect("publications always carry a claim");
        let broker_cell = self.brokers[b].cell;
        let verdict = match self.cfg.strategy {
            Strategy::Cls => cls_verdict(
                claim,
                broker_cell,
                &registered,
                &self.brokers[b].adjacent_registered,
                &inflight.neighbor_list,
            ),
            Strategy::Nls => nls_verdict(claim, broker_cell, &registered, &inflight.neighbor_list),
        };
        let snapshot = match self.cfg.strategy {
            Strategy::Cls => VerdictSnapshot::AssignedCls {
                claim,
                broker_cell,
                sender: pid,
                neighbor_list: inflight.neighbor_list.iter().copied().collect(),
                registered: self.brokers[b].registry.keys().copied().collect(),
                adjacent_registered: self.brokers[b].adjacent_registered.iter().copied().collect(),
            },
            Strategy::Nls => VerdictSnapshot::AssignedNls {
                claim,
                broker_cell,
                sender: pid,
                neighbor_list: inflight.neighbor_list.iter().copied().collect(),
                registered: self.brokers[b].registry.keys().copied().collect(),
            },
        };
        self.ledger.oracle_check(&snapshot, verdict);
        // a valid claim for this broker's cell counts as the periodic
        // notification that keeps the registration alive
        if claim == broker_cell {
            self.brokers[b].registry.insert(pid, t);
        }
        let certified = inflight
            .notif
            .certify(verdict)
            .expect("publications are certified exactly once");
        debug_assert!(certified.extra.is_none(), "verification strips the neighbor list");
        self.ledger.deliver(
            inflight.counted,
            inflight.truth.claim_is_true(),
            verdict,
            None,
            AuditRow {
                producer: pid,
                seq: certified.seq,
                published_at: inflight.published_at,
                true_cell: inflight.truth.true_cell,
                claim_at_publish: inflight.truth.claimed_cell,
                claim_at_send: claim,
                was_queued: false,
                outcome: AuditOutcome::Delivered { certified: verdict, broker: b as u32, cause: None },
            },
        );
        // connection maintenance: repeated uncertified results trigger
        // re-discovery with the current claimed cell
        if verdict {
            self.producers[inflight.producer].consecutive_uncertified = 0;
        } else {
            self.producers[inflight.producer].consecutive_uncertified += 1;
            if self.producers[inflight.producer].consecutive_uncertified
                >= self.cfg.reconnect_threshold
            {
                self.attach(inflight.producer, claim)?;
                self.producers[inflight.producer].consecutive_uncertified = 0;
            }
        }
        Ok(())
    }

    fn handle_exchange(&mut self, t: SimTime) -> Result<(), SimError> {
        let ttl = self.cfg.registry_ttl_ms;
        for b in &mut self.brokers {
            b.registry.retain(|_, last_seen| t.saturating_sub(*last_seen) <= ttl);
        }
        let snapshots: Vec<Vec<ProducerId>> = self
            .brokers
            .iter()
            .map(|b| b.registry.keys().copied().collect())
            .collect();
        for (i, neighbors) in self.adjacency.iter().enumerate() {
            let mut merged = BTreeSet::new();
            for n in neighbors {
                merged.extend(snapshots[*n].iter().copied());
            }
            self.brokers[i].adjacent_registered = merged;
        }
        let next = t + self.cfg.exchange_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue.schedule(next, Event::RegistryExchange)?;
        }
        Ok(())
    }

    #[cfg(test)]
    fn attached_cell(&self, p: usize) -> Option<CellId> {
        self.producers[p].attached.map(|b| self.brokers[b].cell)
    }
}
