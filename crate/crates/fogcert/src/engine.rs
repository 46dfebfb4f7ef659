//! Deterministic discrete-event scheduler plus the abstract radio.
//!
//! The event queue orders by `(fire_at, insertion_seq)`, so events scheduled
//! for the same millisecond fire in insertion order. Short-range delivery is
//! a hard disk of radius `range_m` with an optional independent loss draw per
//! reception; the wide-area uplink is lossless with a fixed latency.

use crate::grid::Position;
use crate::model::{BrokerId, ProducerId, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconSource {
    Broker(BrokerId),
    Producer(ProducerId),
}

/// Everything the simulators schedule. `Delivery` carries a key into the
/// architecture's pending-message table (uplink messages in flight).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Beacon(BeaconSource),
    Publish(ProducerId),
    PollDeadline { producer: ProducerId, seq: u64 },
    RegistryExchange,
    TraceSample,
    WarmupEnd,
    Delivery(u64),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule at {at} ms: clock already at {now} ms")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("producer has no current broker assignment")]
    NoBrokerAssigned,
}

#[derive(Debug, PartialEq, Eq)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority queue of events with FIFO tie-breaking and a monotonic clock.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    clock: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Fire time of the next event without popping it.
    pub fn peek_at(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(s)| s.at)
    }

    pub fn schedule(&mut self, at: SimTime, event: Event) -> Result<(), EngineError> {
        if at < self.clock {
            return Err(EngineError::SchedulingInPast { at, now: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Scheduled { at, seq, event }));
        Ok(())
    }

    /// Pop the next event and advance the clock to its fire time.
    pub fn pop(&mut self) -> Option<(SimTime, Event)> {
        let Reverse(s) = self.heap.pop()?;
        debug_assert!(s.at >= self.clock, "clock must be monotonic");
        self.clock = s.at;
        Some((s.at, s.event))
    }
}

/// Short-range radio: hard reception disk with an independent per-reception
/// loss probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioModel {
    pub range_m: f64,
    pub loss_prob: f64,
}

impl RadioModel {
    pub fn new(range_m: f64, loss_prob: f64) -> Self {
        assert!((0.0..=1.0).contains(&loss_prob), "loss_prob must be in [0,1]");
        Self { range_m, loss_prob }
    }

    /// Range check is inclusive: a receiver exactly at `range_m` hears.
    pub fn in_range(&self, a: Position, b: Position) -> bool {
        a.distance(&b) <= self.range_m
    }

    /// One reception loss draw. No draw is consumed when the channel is
    /// lossless, so loss-free configs do not perturb the radio stream.
    pub fn receives(&self, rng: &mut ChaCha8Rng) -> bool {
        if self.loss_prob <= 0.0 {
            true
        } else {
            rng.gen::<f64>() >= self.loss_prob
        }
    }

    /// Broadcast from `from`: the subset of receivers that are in range and
    /// pass their loss draw, in the iteration order given. Callers iterate
    /// receivers in ascending id order to keep the draw sequence stable.
    pub fn broadcast<I>(&self, from: Position, receivers: I, rng: &mut ChaCha8Rng) -> Vec<ProducerId>
    where
        I: IntoIterator<Item = (ProducerId, Position)>,
    {
        let mut heard = Vec::new();
        for (id, pos) in receivers {
            if self.in_range(from, pos) && self.receives(rng) {
                heard.push(id);
            }
        }
        heard
    }
}

/// Lossless wide-area uplink with constant latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uplink {
    pub latency_ms: SimTime,
}

impl Uplink {
    /// Schedule delivery of pending message `msg_id` to the assigned broker.
    /// Returns the delivery time; never loses a message.
    pub fn send(
        &self,
        queue: &mut EventQueue,
        broker: Option<BrokerId>,
        msg_id: u64,
    ) -> Result<SimTime, EngineError> {
        if broker.is_none() {
            return Err(EngineError::NoBrokerAssigned);
        }
        let at = queue.clock() + self.latency_ms;
        queue.schedule(at, Event::Delivery(msg_id))?;
        Ok(at)
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named independent random substreams derived from one run seed. The same
/// (seed, substream, draw index) yields the same value on every platform.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub claims: ChaCha8Rng,
    pub radio: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            claims: ChaCha8Rng::seed_from_u64(splitmix(seed, 1)),
            radio: ChaCha8Rng::seed_from_u64(splitmix(seed, 2)),
        }
    }

    /// Seed for the mobility substream (consumed by trace synthesis).
    pub fn mobility_seed(seed: u64) -> u64 {
        splitmix(seed, 3)
    }
}
