//! Collaborative architecture.
//!
//! Verification happens on the producer side. At every publication the
//! producer's local broker broadcasts a short-range poll; each reachable
//! peer answers with the cell it is in, the local proposal joins the tally
//! as one vote, and after the poll window the claim becomes the unique
//! plurality cell if one exists. The notification goes to an arbitrary cloud
//! broker carrying a collaboratively-decided flag, and the broker certifies
//! by reading that flag: it provides certifications but never decides them.
//!
//! A decided poll can overwrite the proposal in both directions: a lie gets
//! corrected to the true cell by honest neighbors, and an honest claim on a
//! cell edge can be outvoted into the adjacent cell. Undecided polls (no
//! reply, or a tie) keep the original proposal and go out unflagged.

use crate::arch::{staggered_phases, ClaimSampler, SimError, SimOutput};
use crate::engine::{Event, EventQueue, RadioModel, RngStreams, Uplink};
use crate::grid::{CellGrid, CellId, Position};
use crate::metrics::{AuditOutcome, AuditRow, Ledger, MutationClass, VerdictSnapshot};
use crate::mobility::TraceSet;
use crate::model::{BrokerId, GroundTruth, ModelError, Notification, ProducerId, SimTime};
use std::collections::BTreeMap;

/// Reply counts per cell, plus whether the local vote was already added.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PollTally {
    pub counts: BTreeMap<CellId, u32>,
    pub includes_local: bool,
}

impl PollTally {
    pub fn add_vote(&mut self, cell: CellId) {
        *self.counts.entry(cell).or_insert(0) += 1;
    }

    pub fn add_local_vote(&mut self, cell: CellId) {
        debug_assert!(!self.includes_local, "local vote added twice");
        self.add_vote(cell);
        self.includes_local = true;
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn as_pairs(&self) -> Vec<(CellId, u32)> {
        self.counts.iter().map(|(c, n)| (*c, *n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollOutcome {
    Decided(CellId),
    Undecided,
}

/// The poll decision rule: decided iff more than one vote total and the
/// maximum count is achieved by exactly one cell.
pub fn decide(tally: &PollTally) -> PollOutcome {
    let total = tally.total();
    if total <= 1 {
        return PollOutcome::Undecided;
    }
    let max = tally.counts.values().copied().max().unwrap_or(0);
    let mut winners = tally.counts.iter().filter(|(_, n)| **n == max);
    let first = winners.next().map(|(c, _)| *c).expect("non-empty tally");
    if winners.next().is_some() {
        PollOutcome::Undecided
    } else {
        PollOutcome::Decided(first)
    }
}

/// The claim that goes out and the collaboratively-decided flag. A decided
/// poll replaces the proposal with the winning cell even when they differ;
/// an undecided poll keeps the proposal.
pub fn prepare_claim(proposed: CellId, outcome: PollOutcome) -> (CellId, bool) {
    match outcome {
        PollOutcome::Decided(winner) => (winner, true),
        PollOutcome::Undecided => (proposed, false),
    }
}

/// Broker-side verification: read the collaboratively-decided flag and strip
/// it from the notification.
pub fn verify(n: &mut Notification) -> Result<bool, ModelError> {
    n.take_collab_decided()
}

/// How the claim's veracity changed between publication and send.
pub fn classify_mutation(truth: &GroundTruth, sent_claim: CellId) -> MutationClass {
    let was_true = truth.claim_is_true();
    let is_true = sent_claim == truth.true_cell;
    match (was_true, is_true) {
        (true, true) => MutationClass::RemainTrue,
        (false, true) => MutationClass::FalseToTrue,
        (false, false) => MutationClass::RemainFalse,
        (true, false) => MutationClass::TrueToFalse,
    }
}

#[derive(Debug, Clone)]
pub struct CollabConfig {
    pub grid: CellGrid,
    pub producers: usize,
    pub duration_ms: SimTime,
    pub notification_interval_ms: SimTime,
    pub poll_wait_ms: SimTime,
    pub broker_count: usize,
    pub radio: RadioModel,
    pub uplink: Uplink,
    pub pf: f64,
    pub publish_phases: Option<Vec<SimTime>>,
    pub pf_per_producer: Option<Vec<f64>>,
}

#[derive(Debug)]
struct PendingPoll {
    proposed: CellId,
    truth: GroundTruth,
    published_at: SimTime,
    tally: PollTally,
}

#[derive(Debug)]
struct InFlight {
    producer: usize,
    broker: usize,
    notif: Notification,
    truth: GroundTruth,
    sent_claim: CellId,
    tally: Vec<(CellId, u32)>,
    published_at: SimTime,
}

pub struct CollabSim {
    cfg: CollabConfig,
    traces: TraceSet,
    queue: EventQueue,
    rngs: RngStreams,
    sampler: ClaimSampler,
    next_seq: Vec<u64>,
    pending_polls: BTreeMap<(ProducerId, u64), PendingPoll>,
    in_flight: BTreeMap<u64, InFlight>,
    next_msg: u64,
    ledger: Ledger,
}

impl CollabSim {
    pub fn new(cfg: CollabConfig, traces: &TraceSet, seed: u64) -> Result<Self, SimError> {
        if traces.producer_count() < cfg.producers {
            return Err(SimError::Setup(format!(
                "trace set covers {} producers, config asks for {}",
                traces.producer_count(),
                cfg.producers
            )));
        }
        if cfg.broker_count == 0 {
            return Err(SimError::Setup("broker count must be at least 1".into()));
        }
        let mut traces = traces.clone().clamped(&cfg.grid);
        traces.extend_duration(cfg.duration_ms + cfg.poll_wait_ms);
        let sampler = ClaimSampler::new(&cfg.grid);
        let ledger = Ledger::new("collaborative", "-", cfg.pf, seed);
        Ok(Self {
            next_seq: vec![0; cfg.producers],
            cfg,
            traces,
            queue: EventQueue::new(),
            rngs: RngStreams::new(seed),
            sampler,
            pending_polls: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            next_msg: 0,
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

    fn run_loop(&mut self) -> Result<(), SimError> {
        let phases = match &self.cfg.publish_phases {
            Some(p) => p.clone(),
            None => staggered_phases(self.cfg.producers, self.cfg.notification_interval_ms),
        };
        for (p, phase) in phases.iter().enumerate().take(self.cfg.producers) {
            if *phase < self.cfg.duration_ms {
                self.queue.schedule(*phase, Event::Publish(ProducerId(p as u32)))?;
            }
        }
        while let Some((t, event)) = self.queue.pop() {
            match event {
                Event::Publish(p) => self.handle_publish(p.0 as usize, t)?,
                Event::PollDeadline { producer, seq } => self.handle_deadline(producer, seq, t)?,
                Event::Delivery(msg) => self.handle_delivery(msg, t)?,
                other => unreachable!("collaborative architecture never schedules {other:?}"),
            }
        }
        Ok(())
    }

    fn handle_publish(&mut self, p: usize, t: SimTime) -> Result<(), SimError> {
        let pid = ProducerId(p as u32);
        let seq = self.next_seq[p];
        self.next_seq[p] += 1;
        let pos = self.position(p, t);
        let true_cell = self.cfg.grid.cell_of(pos)?;
        let pf = self
            .cfg
            .pf_per_producer
            .as_ref()
            .map_or(self.cfg.pf, |v| v[p]);
        let proposed = self.sampler.draw(&mut self.rngs.claims, pf, true_cell);
        let truth = GroundTruth { true_cell, claimed_cell: proposed };
        self.ledger.record_truth(pid, seq, truth);
        self.ledger.publish(true, truth.claim_is_true(), false);

        // short-range poll: every reachable peer answers with the cell it is
        // actually in right now
        let receivers: Vec<_> = (0..self.cfg.producers)
            .filter(|q| *q != p)
            .map(|q| (ProducerId(q as u32), self.position(q, t)))
            .collect();
        let repliers = self
            .cfg
            .radio
            .broadcast(pos, receivers, &mut self.rngs.radio);
        let mut tally = PollTally::default();
        for q in repliers {
            let reply_cell = self.cfg.grid.cell_of(self.position(q.0 as usize, t))?;
            tally.add_vote(reply_cell);
        }
        self.pending_polls.insert(
            (pid, seq),
            PendingPoll { proposed, truth, published_at: t, tally },
        );
        self.queue
            .schedule(t + self.cfg.poll_wait_ms, Event::PollDeadline { producer: pid, seq })?;

        let next = t + self.cfg.notification_interval_ms;
        if next < self.cfg.duration_ms {
            self.queue.schedule(next, Event::Publish(pid))?;
        }
        Ok(())
    }

    fn handle_deadline(&mut self, pid: ProducerId, seq: u64, _t: SimTime) -> Result<(), SimError> {
        let mut poll = self
            .pending_polls
            .remove(&(pid, seq))
            .expect("deadline for an open poll");
        poll.tally.add_local_vote(poll.proposed);
        let outcome = decide(&poll.tally);
        let (sent_claim, flag) = prepare_claim(poll.proposed, outcome);
        self.ledger
            .sent_after_poll(true, sent_claim == poll.truth.true_cell);
        let mut notif = Notification::new(pid, seq, poll.published_at, sent_claim);
        notif.set_collab_decided(flag);
        let p = pid.0 as usize;
        let broker = p % self.cfg.broker_count;
        let msg = self.next_msg;
        self.next_msg += 1;
        self.in_flight.insert(
            msg,
            InFlight {
                producer: p,
                broker,
                notif,
                truth: poll.truth,
                sent_claim,
                tally: poll.tally.as_pairs(),
                published_at: poll.published_at,
            },
        );
        self.cfg
            .uplink
            .send(&mut self.queue, Some(BrokerId(broker as u32)), msg)?;
        Ok(())
    }

    fn handle_delivery(&mut self, msg: u64, _t: SimTime) -> Result<(), SimError> {
        let mut inflight = self.in_flight.remove(&msg).expect("pending uplink message");
        let flag = verify(&mut inflight.notif).expect("publications always carry the poll flag");
        let verdict = flag;
        self.ledger.oracle_check(
            &VerdictSnapshot::Collab {
                flag,
                sent_claim: inflight.sent_claim,
                tally: inflight.tally.clone(),
            },
            verdict,
        );
        let certified = inflight
            .notif
            .certify(verdict)
            .expect("publications are certified exactly once");
        debug_assert_eq!(certified.certified(), Some(verdict));
        let mutation = if verdict {
            Some(classify_mutation(&inflight.truth, inflight.sent_claim))
        } else {
            debug_assert_eq!(
                inflight.sent_claim, inflight.truth.claimed_cell,
                "undecided polls keep the original proposal"
            );
            None
        };
        let pid = ProducerId(inflight.producer as u32);
        self.ledger.deliver(
            true,
            inflight.sent_claim == inflight.truth.true_cell,
            verdict,
            mutation,
            AuditRow {
                producer: pid,
                seq: certified.seq,
                published_at: inflight.published_at,
                true_cell: inflight.truth.true_cell,
                claim_at_publish: inflight.truth.claimed_cell,
                claim_at_send: inflight.sent_claim,
                was_queued: false,
                outcome: AuditOutcome::Delivered {
                    certified: verdict,
                    broker: inflight.broker as u32,
                    cause: None,
                },
            },
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Waypoint;
    use crate::mobility::TraceSet;

    fn cell(r: u16, c: u16) -> CellId {
        CellId::new(r, c)
    }

    fn tally(votes: &[(CellId, u32)]) -> PollTally {
        let mut t = PollTally::default();
        for (c, n) in votes {
            for _ in 0..*n {
                t.add_vote(*c);
            }
        }
        t.includes_local = true;
        t
    }

    #[test]
    fn decide_needs_a_reply_and_a_unique_maximum() {
        assert_eq!(decide(&tally(&[(cell(0, 0), 2)])), PollOutcome::Decided(cell(0, 0)));
        assert_eq!(decide(&tally(&[(cell(0, 0), 1), (cell(0, 1), 1)])), PollOutcome::Undecided);
        assert_eq!(decide(&tally(&[(cell(0, 0), 1)])), PollOutcome::Undecided);
        assert_eq!(
            decide(&tally(&[(cell(0, 0), 3), (cell(0, 1), 1)])),
            PollOutcome::Decided(cell(0, 0))
        );
        assert_eq!(
            decide(&tally(&[(cell(0, 0), 2), (cell(0, 1), 2)])),
            PollOutcome::Undecided
        );
    }

    #[test]
    fn decide_is_independent_of_reply_order() {
        // a lying proposer (local vote for a fake cell) with two co-located
        // honest repliers and one replier across the cell edge: every
        // arrival order corrects the claim to the true cell
        let votes = [cell(1, 1), cell(1, 1), cell(1, 2)];
        let mut outcomes = Vec::new();
        let perms: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in perms {
            let mut t = PollTally::default();
            for i in perm {
                t.add_vote(votes[i]);
            }
            t.add_local_vote(cell(3, 3));
            outcomes.push(decide(&t));
        }
        assert!(outcomes.iter().all(|o| *o == PollOutcome::Decided(cell(1, 1))));
    }

    #[test]
    fn prepare_claim_substitutes_on_decided_polls_only() {
        // lie corrected: proposal B, replies name the true cell A twice
        let (claim, flag) = prepare_claim(cell(0, 1), PollOutcome::Decided(cell(0, 0)));
        assert_eq!((claim, flag), (cell(0, 0), true));
        // honest edge producer outvoted into the adjacent cell
        let (claim, flag) = prepare_claim(cell(0, 0), PollOutcome::Decided(cell(0, 1)));
        assert_eq!((claim, flag), (cell(0, 1), true));
        // undecided: original claim, unflagged
        let (claim, flag) = prepare_claim(cell(0, 0), PollOutcome::Undecided);
        assert_eq!((claim, flag), (cell(0, 0), false));
    }

    #[test]
    fn verify_reads_and_strips_the_flag() {
        let mut n = Notification::new(ProducerId(0), 0, 0, cell(0, 0));
        n.set_collab_decided(true);
        assert_eq!(verify(&mut n), Ok(true));
        assert_eq!(verify(&mut n), Err(ModelError::MissingFlag));
        let mut n = Notification::new(ProducerId(0), 0, 0, cell(0, 0));
        n.set_collab_decided(false);
        assert_eq!(verify(&mut n), Ok(false));
    }

    #[test]
    fn mutation_classes_from_truth_and_sent_claim() {
        let truth = GroundTruth { true_cell: cell(1, 1), claimed_cell: cell(1, 1) };
        assert_eq!(classify_mutation(&truth, cell(1, 1)), MutationClass::RemainTrue);
        assert_eq!(classify_mutation(&truth, cell(1, 2)), MutationClass::TrueToFalse);
        let lied = GroundTruth { true_cell: cell(1, 1), claimed_cell: cell(3, 3) };
        assert_eq!(classify_mutation(&lied, cell(1, 1)), MutationClass::FalseToTrue);
        assert_eq!(classify_mutation(&lied, cell(3, 3)), MutationClass::RemainFalse);
        assert_eq!(classify_mutation(&lied, cell(2, 3)), MutationClass::RemainFalse);
    }

    fn static_traces(positions: &[(f64, f64)], duration: SimTime) -> TraceSet {
        let tracks = positions
            .iter()
            .map(|(x, y)| vec![Waypoint { at: 0, pos: Position::new(*x, *y) }])
            .collect();
        TraceSet::from_waypoints(tracks, duration).unwrap()
    }

    fn base_cfg(producers: usize, duration: SimTime) -> CollabConfig {
        CollabConfig {
            grid: CellGrid::new(Position::new(0.0, 0.0), 800.0, 800.0, 200.0).unwrap(),
            producers,
            duration_ms: duration,
            notification_interval_ms: 60_000,
            poll_wait_ms: 2_000,
            broker_count: 4,
            radio: RadioModel::new(100.0, 0.0),
            uplink: Uplink { latency_ms: 50 },
            pf: 0.0,
            publish_phases: None,
            pf_per_producer: None,
        }
    }

    #[test]
    fn unanimous_co_located_poll_certifies_remain_true() {
        // two honest in-range neighbors in the same cell: tally {A: 3}
        let traces = static_traces(&[(100.0, 100.0), (120.0, 100.0), (100.0, 130.0)], 5_000);
        let mut cfg = base_cfg(3, 5_000);
        cfg.publish_phases = Some(vec![0, 30_000, 30_000]);
        let out = CollabSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.published, 1.0);
        assert_eq!(out.report.dt_cert, 1.0);
        assert_eq!(out.report.remain_true, 1.0);
        assert_eq!(out.report.queued + out.report.lost, 0.0);
        assert_eq!(out.oracle.disagreements, 0);
    }

    #[test]
    fn lonely_proposer_stays_uncertified() {
        let traces = static_traces(&[(100.0, 100.0)], 5_000);
        let mut cfg = base_cfg(1, 5_000);
        cfg.publish_phases = Some(vec![0]);
        let out = CollabSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.dt_uncert, 1.0);
        assert_eq!(out.report.dt_cert, 0.0);
        // the sent claim is the original proposal
        assert_eq!(out.audits[0].claim_at_send, out.audits[0].claim_at_publish);
    }

    #[test]
    fn edge_proposer_collects_votes_from_both_cells() {
        // proposer on the edge of (0,0)/(0,1) with one neighbor in each
        // cell: tally {A: 2, B: 1} decides A
        let traces = static_traces(&[(190.0, 100.0), (150.0, 100.0), (230.0, 100.0)], 5_000);
        let mut cfg = base_cfg(3, 5_000);
        cfg.publish_phases = Some(vec![0, 30_000, 30_000]);
        let out = CollabSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.dt_cert, 1.0);
        assert_eq!(out.report.remain_true, 1.0);
        assert_eq!(out.audits[0].claim_at_send, cell(0, 0));
    }

    #[test]
    fn liar_with_two_honest_neighbors_is_corrected() {
        let traces = static_traces(&[(100.0, 100.0), (120.0, 100.0), (100.0, 130.0)], 5_000);
        let mut cfg = base_cfg(3, 5_000);
        cfg.publish_phases = Some(vec![0, 30_000, 30_000]);
        cfg.pf_per_producer = Some(vec![1.0, 0.0, 0.0]);
        let out = CollabSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.published_false, 1.0);
        assert_eq!(out.report.sent_true, 1.0);
        assert_eq!(out.report.false_to_true, 1.0);
        assert_eq!(out.report.df_cert + out.report.df_uncert, 0.0);
        assert_eq!(out.oracle.disagreements, 0);
    }

    #[test]
    fn single_disagreeing_reply_forces_a_tie() {
        // proposer in (0,0), single neighbor across the edge in (0,1):
        // {A: 1, B: 1} is a tie, so the notification goes out uncertified
        let traces = static_traces(&[(150.0, 100.0), (210.0, 100.0)], 5_000);
        let mut cfg = base_cfg(2, 5_000);
        cfg.publish_phases = Some(vec![0, 30_000]);
        let out = CollabSim::new(cfg, &traces, 1).unwrap().run().unwrap();
        assert_eq!(out.report.dt_uncert, 1.0);
        assert_eq!(out.report.dt_cert, 0.0);
    }
}
