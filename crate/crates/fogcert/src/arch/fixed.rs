//! Fixed-brokers architecture.
//!
//! One broker is anchored at the center of every cell and advertises itself
//! by short-range beacons. A disconnected producer connects to the first
//! broker it hears; beacons from other brokers are ignored while connected.
//! Publications go to the connected broker over the same short-range radio,
//! re-checking range at send time, so a producer whose connection state is
//! stale can lose the publication. While disconnected, publications queue
//! locally and flush to whichever broker the producer connects to next.
//! Verification is claim-equals-broker-cell.

use crate::arch::{staggered_phases, ClaimSampler, SimError, SimOutput};
use crate::engine::{BeaconSource, Event, EventQueue, RadioModel, RngStreams};
use crate::grid::{CellGrid, CellId, Position};
use crate::metrics::{
    AuditOutcome, AuditRow, Ledger, UncertifiedTrueCause, VerdictSnapshot,
};
use crate::mobility::TraceSet;
use crate::model::{
    BrokerId, ExtraLocationInfo, GroundTruth, ModelError, Notification, ProducerId, SimTime,
};
use std::collections::{BTreeMap, VecDeque};

/// No producer-side verification in this architecture: the extra location
/// payload is always empty.
pub fn prepare_extra() -> Option<ExtraLocationInfo> {
    None
}

/// Broker-side verification: certify iff the claim names the broker's cell.
pub fn verify_location(broker_cell: CellId, n: &Notification) -> Result<bool, ModelError> {
    Ok(n.location_claim()? == broker_cell)
}

/// Connection staleness predicate evaluated on engine sample ticks.
pub fn connection_expired(last_beacon: SimTime, now: SimTime, max_connection_ms: SimTime) -> bool {
    now.saturating_sub(last_beacon) > max_connection_ms
}

#[derive(Debug, Clone)]
pub struct FixedConfig {
    pub grid: CellGrid,
    pub producers: usize,
    pub duration_ms: SimTime,
    pub notification_interval_ms: SimTime,
    pub beacon_interval_ms: SimTime,
    pub max_connection_ms: SimTime,
    pub sample_interval_ms: SimTime,
    pub radio: RadioModel,
    pub pf: f64,
    /// Per-producer first-publication offsets; staggered by default.
    pub publish_phases: Option<Vec<SimTime>>,
    /// Per-broker beacon offsets; spread evenly over one interval by default.
    pub beacon_phases: Option<Vec<SimTime>>,
    /// Per-producer lying probability override (scripted scenarios).
    pub pf_per_producer: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Conn {
    Disconnected,
    Connected { broker: usize, last_beacon: SimTime },
}

#[derive(Debug)]
struct PendingNotification {
    notif: Notification,
    truth: GroundTruth,
    published_at: SimTime,
}

#[derive(Debug)]
struct ProducerState {
    conn: Conn,
    queue: VecDeque<PendingNotification>,
    next_seq: u64,
}

#[derive(Debug)]
struct BrokerState {
    cell: CellId,
    anchor: Position,
    connected: BTreeMap<ProducerId, SimTime>,
}

pub struct FixedSim {
    cfg: FixedConfig,
    traces: TraceSet,
    queue: EventQueue,
    rngs: RngStreams,
    sampler: ClaimSampler,
    brokers: Vec<BrokerState>,
    producers: Vec<ProducerState>,
    ledger: Ledger,
}

impl FixedSim {
    pub fn new(cfg: FixedConfig, traces: &TraceSet, seed: u64) -> Result<Self, SimError> {
        if traces.producer_count() < cfg.producers {
            return Err(SimError::Setup(format!(
                "trace set covers {} producers, config asks for {}",
                traces.producer_count(),
                cfg.producers
            )));
        }
        let mut traces = traces.clone().clamped(&cfg.grid);
        traces.extend_duration(cfg.duration_ms);
        let brokers = cfg
            .grid
            .cells()
            .map(|cell| BrokerState {
                cell,
                anchor: cfg.grid.broker_anchor(cell),
                connected: BTreeMap::new(),
            })
            .collect();
        let producers = (0..cfg.producers)
            .map(|_| ProducerState {
                conn: Conn::Disconnected,
                queue: VecDeque::new(),
                next_seq: 0,
            })
            .collect();
        let sampler = ClaimSampler::new(&cfg.grid);
        let ledger = Ledger::new("fixed", "-", cfg.pf, seed);
        Ok(Self {
            cfg,
            traces,
            queue: EventQueue::new(),
            rngs: RngStreams::new(seed),
            sampler,
            brokers,
            producers,
            ledger,
        })
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        self.run_loop()?;
        self.finish()
    }

    fn position(&self, p: usize, t: SimTime) -> Position {
        self.traces
            .position_at(ProducerId(p as u32), t)
            .expect("traces cover the full run")
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        let n_brokers = self.brokers.len();
        for b in 0..n_brokers {
            let phase = match &self.cfg.beacon_phases {
                Some(phases) => phases[b],
                None => (b as u64 * self.cfg.beacon_interval_ms) / n_brokers as u64,
            };
            self.queue
                .schedule(phase, Event::Beacon(BeaconSource::Broker(BrokerId(b as u32))))?;
        }
        self.queue.schedule(0, Event::TraceSample)?;
        let phases = match &self.cfg.publish_phases {
            Some(p) => p.clone(),
            None => staggered_phases(self.cfg.producers, self.cfg.notification_interval_ms),
        };
        for (p, phase) in phases.iter().enumerate().take(self.cfg.producers) {
            if *phase < self.cfg.duration_ms {
                self.queue.schedule(*phase, Event::Publish(ProducerId(p as u32)))?;
            }
        }

        while let Some(at) = self.queue.peek_at() {
            if at >= self.cfg.duration_ms {
                break;
            }
            let (t, event) = self.queue.pop().expect("peeked event");
            match event {
                Event::Beacon(BeaconSource::Broker(b)) => self.handle_beacon(b.0 as usize, t)?,
                Event::Publish(p) => self.handle_publish(p.0 as usize, t)?,
                Event::TraceSample => self.handle_sample(t)?,
                other => unreachable!("fixed architecture never schedules {other:?}"),
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SimOutput, SimError> {
        for (p, state) in self.producers.iter_mut().enumerate() {
            while let Some(pending) = state.queue.pop_front() {
                self.ledger.note_end_queued(AuditRow {
                    producer: ProducerId(p as u32),
                    seq: pending.notif.seq,
                    published_at: pending.published_at,
                    true_cell: pending.truth.true_cell,
                    claim_at_publish: pending.truth.claimed_cell,
                    claim_at_send: pending.truth.claimed_cell,
                    was_queued: true,
                    outcome: AuditOutcome::Queued,
                });
            }
        }
        let (report, audits, oracle) = self.ledger.finalize()?;
        Ok(SimOutput { report, audits, oracle })
    }

    fn handle_beacon(&mut self, b: usize, t: SimTime) -> Result<(), SimError> {
        let anchor = self.brokers[b].anchor;
        for p in 0..self.cfg.producers {
            let pos = self.position(p, t);
            if !self.cfg.radio.in_range(anchor, pos) {
                continue;
            }
            if !self.cfg.radio.receives(&mut self.rngs.radio) {
                continue;
            }
            let pid = ProducerId(p as u32);
            match self.producers[p].conn {
                Conn::Connected { broker, .. } if broker == b => {
                    self.producers[p].conn = Conn::Connected { broker: b, last_beacon: t };
                    self.brokers[b].connected.insert(pid, t);
                }
                Conn::Connected { .. } => {
                    // already connected elsewhere; only disconnected
                    // producers react to beacons
                }
                Conn::Disconnected => {
                    self.producers[p].conn = Conn::Connected { broker: b, last_beacon: t };
                    self.brokers[b].connected.insert(pid, t);
                    self.flush_queue(p, b, t);
                }
            }
        }
        let next = t + self.cfg.beacon_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue
                .schedule(next, Event::Beacon(BeaconSource::Broker(BrokerId(b as u32))))?;
        }
        Ok(())
    }

    fn flush_queue(&mut self, p: usize, b: usize, t: SimTime) {
        while let Some(pending) = self.producers[p].queue.pop_front() {
            self.ledger.dequeue(true);
            self.transmit(p, b, t, pending, true);
        }
    }

    /// Transmit to the connected broker over short range, re-checking range
    /// at send time: a stale connection loses the publication.
    fn transmit(
        &mut self,
        p: usize,
        b: usize,
        t: SimTime,
        pending: PendingNotification,
        was_queued: bool,
    ) {
        let pid = ProducerId(p as u32);
        let truth = pending.truth;
        let lost_row = AuditRow {
            producer: pid,
            seq: pending.notif.seq,
            published_at: pending.published_at,
            true_cell: truth.true_cell,
            claim_at_publish: truth.claimed_cell,
            claim_at_send: truth.claimed_cell,
            was_queued,
            outcome: AuditOutcome::Lost,
        };
        let pos = self.position(p, t);
        if !self.cfg.radio.in_range(pos, self.brokers[b].anchor) {
            self.ledger.lose(true, lost_row);
            return;
        }
        if !self.cfg.radio.receives(&mut self.rngs.radio) {
            self.ledger.lose(true, lost_row);
            return;
        }
        let broker_cell = self.brokers[b].cell;
        let claim = pending
            .notif
            .location_claim()
            .expect("publications always carry a claim");
        let verdict = verify_location(broker_cell, &pending.notif)
            .expect("publications always carry a claim");
        self.ledger
            .oracle_check(&VerdictSnapshot::Fixed { claim, broker_cell }, verdict);
        let certified = pending
            .notif
            .certify(verdict)
            .expect("publications are certified exactly once");
        debug_assert_eq!(certified.certified(), Some(verdict));
        let cause = if !verdict && truth.claim_is_true() {
            Some(if was_queued {
                UncertifiedTrueCause::QueueFlush
            } else {
                UncertifiedTrueCause::OverlapEdge
            })
        } else {
            None
        };
        self.ledger.deliver(
            true,
            truth.claim_is_true(),
            verdict,
            None,
            AuditRow {
                producer: pid,
                seq: certified.seq,
                published_at: pending.published_at,
                true_cell: truth.true_cell,
                claim_at_publish: truth.claimed_cell,
                claim_at_send: claim,
                was_queued,
                outcome: AuditOutcome::Delivered { certified: verdict, broker: b as u32, cause },
            },
        );
    }

    fn handle_publish(&mut self, p: usize, t: SimTime) -> Result<(), SimError> {
        let pid = ProducerId(p as u32);
        let seq = self.producers[p].next_seq;
        self.producers[p].next_seq += 1;
        let pos = self.position(p, t);
        let true_cell = self.cfg.grid.cell_of(pos)?;
        let pf = self
            .cfg
            .pf_per_producer
            .as_ref()
            .map_or(self.cfg.pf, |v| v[p]);
        let claimed = self.sampler.draw(&mut self.rngs.claims, pf, true_cell);
        let truth = GroundTruth { true_cell, claimed_cell: claimed };
        self.ledger.record_truth(pid, seq, truth);
        let mut notif = Notification::new(pid, seq, t, claimed);
        notif.extra = prepare_extra();
        self.ledger.publish(true, truth.claim_is_true(), true);
        let pending = PendingNotification { notif, truth, published_at: t };
        match self.producers[p].conn {
            Conn::Disconnected => {
                self.producers[p].queue.push_back(pending);
                self.ledger.enqueue(true);
            }
            Conn::Connected { broker, .. } => self.transmit(p, broker, t, pending, false),
        }
        let next = t + self.cfg.notification_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue.schedule(next, Event::Publish(pid))?;
        }
        Ok(())
    }

    fn handle_sample(&mut self, t: SimTime) -> Result<(), SimError> {
        for p in 0..self.cfg.producers {
            if let Conn::Connected { broker, last_beacon } = self.producers[p].conn {
                if connection_expired(last_beacon, t, self.cfg.max_connection_ms) {
                    self.producers[p].conn = Conn::Disconnected;
                    self.brokers[broker].connected.remove(&ProducerId(p as u32));
                }
            }
        }
        let next = t + self.cfg.sample_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue.schedule(next, Event::TraceSample)?;
        }
        Ok(())
    }

    #[cfg(test)]
    fn connected_broker_of(&self, p: usize) -> Option<usize> {
        match self.producers[p].conn {
            Conn::Connected { broker, .. } => Some(broker),
            Conn::Disconnected => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Waypoint;

    fn cell(r: u16, c: u16) -> CellId {
        CellId::new(r, c)
    }

    fn single_cell_grid() -> CellGrid {
        CellGrid::new(Position::new(0.0, 0.0), 200.0, 200.0, 200.0).unwrap()
    }

    fn static_traces(positions: &[(f64, f64)], duration: SimTime) -> TraceSet {
        let tracks = positions
            .iter()
            .map(|(x, y)| vec![Waypoint { at: 0, pos: Position::new(*x, *y) }])
            .collect();
        TraceSet::from_waypoints(tracks, duration).unwrap()
    }

    fn base_cfg(grid: CellGrid, producers: usize, duration: SimTime) -> FixedConfig {
        FixedConfig {
            grid,
            producers,
            duration_ms: duration,
            notification_interval_ms: 60_000,
            beacon_interval_ms: 2_000,
            max_connection_ms: 2_000,
            sample_interval_ms: 100,
            radio: RadioModel::new(100.0, 0.0),
            pf: 0.0,
            publish_phases: None,
            beacon_phases: None,
            pf_per_producer: None,
        }
    }

    #[test]
    fn prepare_extra_is_always_empty() {
        assert_eq!(prepare_extra(), None);
        assert_eq!(prepare_extra(), None);
        let mut n = Notification::new(ProducerId(0), 0, 0, cell(0, 0));
        let triples_before = n.triple_count();
        n.extra = prepare_extra();
        assert_eq!(n.triple_count(), triples_before);
    }

    #[test]
    fn verify_location_is_claim_equality() {
        let n = Notification::new(ProducerId(0), 0, 0, cell(1, 1));
        assert_eq!(verify_location(cell(1, 1), &n), Ok(true));
        let n = Notification::new(ProducerId(0), 0, 0, cell(1, 2));
        assert_eq!(verify_location(cell(1, 1), &n), Ok(false));
        let mut n = Notification::new(ProducerId(0), 0, 0, cell(1, 1));
        n.set_triple("location", "value", crate::model::TripleValue::Int(5));
        assert_eq!(verify_location(cell(1, 1), &n), Err(ModelError::MissingLocation));
    }

    #[test]
    fn connection_expiry_is_strict_exceedance() {
        assert!(connection_expired(1_000, 3_001, 2_000));
        assert!(!connection_expired(1_000, 3_000, 2_000));
        assert!(!connection_expired(1_000, 1_000, 2_000));
    }

    #[test]
    fn nearby_disconnected_producer_connects_and_delivers_certified() {
        // 80 m from the anchor, well inside the 100 m range
        let traces = static_traces(&[(100.0, 20.0)], 10_000);
        let mut cfg = base_cfg(single_cell_grid(), 1, 10_000);
        cfg.publish_phases = Some(vec![1_000]);
        let out = FixedSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.delivered, 1.0);
        assert_eq!(out.report.dt_cert, 1.0);
        assert_eq!(out.report.lost, 0.0);
        assert_eq!(out.oracle.disagreements, 0);
    }

    #[test]
    fn corner_producer_never_connects() {
        // cell corner is 100 * sqrt(2) ~ 141 m from the anchor
        let grid = CellGrid::new(Position::new(0.0, 0.0), 400.0, 400.0, 200.0).unwrap();
        let traces = static_traces(&[(200.0, 200.0)], 10_000);
        let mut cfg = base_cfg(grid, 1, 10_000);
        cfg.publish_phases = Some(vec![1_000]);
        let out = FixedSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.delivered, 0.0);
        assert_eq!(out.report.queued, 1.0);
        assert!(matches!(out.audits[0].outcome, AuditOutcome::Queued));
    }

    #[test]
    fn connected_producer_ignores_other_brokers_beacons() {
        // exactly on the shared edge: within 100 m of both anchors, but in
        // the right-hand cell; broker 0 beacons first and keeps the producer
        let grid = CellGrid::new(Position::new(0.0, 0.0), 400.0, 200.0, 200.0).unwrap();
        let traces = static_traces(&[(200.0, 100.0)], 9_000);
        let mut cfg = base_cfg(grid, 1, 9_000);
        cfg.publish_phases = Some(vec![5_000]);
        let mut sim = FixedSim::new(cfg, &traces, 1).unwrap();
        sim.run_loop().unwrap();
        assert_eq!(sim.connected_broker_of(0), Some(0));
        let out = sim.finish().unwrap();
        // claim names cell (0,1) but broker 0 owns (0,0): delivered uncertified
        assert_eq!(out.report.delivered, 1.0);
        assert_eq!(out.report.dt_uncert, 1.0);
        match out.audits[0].outcome {
            AuditOutcome::Delivered { certified, broker, cause } => {
                assert!(!certified);
                assert_eq!(broker, 0);
                assert_eq!(cause, Some(UncertifiedTrueCause::OverlapEdge));
            }
            ref other => panic!("expected delivery, got {other:?}"),
        }
    }

    #[test]
    fn queued_publication_flushes_to_the_next_broker_uncertified() {
        // start in the corner gap of a 2x2 grid, publish while disconnected,
        // then walk into broker (0,0)'s range: the flush delivers the old
        // claim to a different cell's broker
        let grid = CellGrid::new(Position::new(0.0, 0.0), 400.0, 400.0, 200.0).unwrap();
        let tracks = vec![vec![
            Waypoint { at: 0, pos: Position::new(205.0, 205.0) },
            Waypoint { at: 60_000, pos: Position::new(130.0, 130.0) },
        ]];
        let traces = TraceSet::from_waypoints(tracks, 60_000).unwrap();
        let mut cfg = base_cfg(grid, 1, 60_000);
        cfg.publish_phases = Some(vec![500]);
        let out = FixedSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.delivered, 1.0);
        assert_eq!(out.report.dt_uncert, 1.0);
        assert_eq!(out.report.queued, 0.0);
        match out.audits[0].outcome {
            AuditOutcome::Delivered { certified, cause, .. } => {
                assert!(!certified);
                assert_eq!(cause, Some(UncertifiedTrueCause::QueueFlush));
            }
            ref other => panic!("expected delivery, got {other:?}"),
        }
        assert!(out.audits[0].was_queued);
        // the publish-time cell was the junction corner (1,1)
        assert_eq!(out.audits[0].claim_at_publish, cell(1, 1));
    }

    #[test]
    fn stale_connection_out_of_range_loses_the_publication() {
        // connect at 80 m, then sprint out of range; publish lands in the
        // stale window before the connection times out
        let tracks = vec![vec![
            Waypoint { at: 0, pos: Position::new(100.0, 20.0) },
            Waypoint { at: 1_500, pos: Position::new(100.0, 215.0) },
            Waypoint { at: 10_000, pos: Position::new(100.0, 215.0) },
        ]];
        let grid = CellGrid::new(Position::new(0.0, 0.0), 200.0, 400.0, 200.0).unwrap();
        let traces = TraceSet::from_waypoints(tracks, 10_000).unwrap();
        let mut cfg = base_cfg(grid, 1, 10_000);
        cfg.publish_phases = Some(vec![1_400]);
        let out = FixedSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.lost, 1.0);
        assert!(matches!(out.audits[0].outcome, AuditOutcome::Lost));
    }

    #[test]
    fn producer_is_in_at_most_one_connected_set() {
        let grid = CellGrid::new(Position::new(0.0, 0.0), 400.0, 200.0, 200.0).unwrap();
        let traces = static_traces(&[(200.0, 100.0), (50.0, 100.0), (350.0, 100.0)], 8_000);
        let cfg = base_cfg(grid, 3, 8_000);
        let mut sim = FixedSim::new(cfg, &traces, 1).unwrap();
        sim.run_loop().unwrap();
        for p in 0..3u32 {
            let holders = sim
                .brokers
                .iter()
                .filter(|b| b.connected.contains_key(&ProducerId(p)))
                .count();
            assert!(holders <= 1, "producer {p} held by {holders} brokers");
        }
    }
}
