//! Deterministic discrete-event scheduler and message-delivery fabric.
//!
//! Simulated time is integer microseconds; exact arithmetic keeps runs
//! bit-identical across platforms. Events execute in (time, sequence) order,
//! so two events scheduled for the same instant run in insertion order.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

pub const US_PER_SEC: u64 = 1_000_000;

/// Node address inside the simulation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum NodeId {
    Vehicle(u32),
    Rsu(u32),
    /// The experiment driver itself (world stepping, round pacing).
    Harness,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Latency {
    Fixed(u64),
    /// Uniformly seeded per-message delay in [lo, hi] microseconds.
    Uniform { lo: u64, hi: u64 },
}

/// Per-link delivery model. FIFO is preserved per ordered (from, to) pair by
/// clamping each delivery to no earlier than the previous one on that link.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    pub latency: Latency,
    pub drop_probability: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel::instant()
    }
}

impl LinkModel {
    pub const fn instant() -> Self {
        LinkModel {
            latency: Latency::Fixed(0),
            drop_probability: 0.0,
        }
    }

    pub const fn fixed(latency_us: u64) -> Self {
        LinkModel {
            latency: Latency::Fixed(latency_us),
            drop_probability: 0.0,
        }
    }
}

/// Fault actions applied to a node at an exact simulated time.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum FaultAction {
    Crash,
    Recover,
    /// Switch the node into a byzantine behavior mode understood by the
    /// consensus layer.
    Byzantine(u32),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultScript {
    pub entries: Vec<FaultEntry>,
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct FaultEntry {
    pub time_us: u64,
    pub node: NodeId,
    pub action: FaultAction,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload<M> {
    Deliver { from: NodeId, to: NodeId, msg: M },
    Timer { node: NodeId, tag: u64 },
    Fault(FaultEntry),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<M> {
    pub time_us: u64,
    pub sequence: u64,
    pub payload: Payload<M>,
}

struct QueuedEvent<M> {
    time_us: u64,
    sequence: u64,
    payload: Payload<M>,
}

impl<M> PartialEq for QueuedEvent<M> {
    fn eq(&self, other: &Self) -> bool {
        self.time_us == other.time_us && self.sequence == other.sequence
    }
}
impl<M> Eq for QueuedEvent<M> {}
impl<M> PartialOrd for QueuedEvent<M> {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for QueuedEvent<M> {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.time_us, self.sequence).cmp(&(other.time_us, other.sequence))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ScheduleError {
    /// Attempt to schedule an event before the current clock.
    TimeTravel { event_us: u64, clock_us: u64 },
}

/// One line of the observable event log; JSONL-exportable and sufficient to
/// check a replay for divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time_us: u64,
    pub sequence: u64,
    pub kind: String,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub note: String,
}

/// The single source of event ordering for the whole simulation.
pub struct Scheduler<M> {
    clock_us: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<QueuedEvent<M>>>,
    rng: rand_chacha::ChaCha20Rng,
    /// Last delivery time per ordered (from, to) pair, for FIFO clamping.
    fifo: alloc::collections::BTreeMap<(NodeId, NodeId), u64>,
    pub log: Vec<LogEntry>,
    pub dropped: u64,
}

impl<M: Clone> Scheduler<M> {
    pub fn new(seed: u64) -> Self {
        Scheduler {
            clock_us: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng: rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0x6e65_7473_696d),
            fifo: alloc::collections::BTreeMap::new(),
            log: Vec::new(),
            dropped: 0,
        }
    }

    pub fn clock_us(&self) -> u64 {
        self.clock_us
    }

    pub fn schedule(&mut self, time_us: u64, payload: Payload<M>) -> Result<(), ScheduleError> {
        if time_us < self.clock_us {
            return Err(ScheduleError::TimeTravel {
                event_us: time_us,
                clock_us: self.clock_us,
            });
        }
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEvent {
            time_us,
            sequence,
            payload,
        }));
        Ok(())
    }

    pub fn schedule_timer(&mut self, time_us: u64, node: NodeId, tag: u64) {
        self.schedule(time_us, Payload::Timer { node, tag })
            .expect("timer in the past");
    }

    pub fn load_faults(&mut self, script: &FaultScript) {
        for e in &script.entries {
            self.schedule(e.time_us, Payload::Fault(*e))
                .expect("fault entry in the past");
        }
    }

    fn sample_latency(&mut self, latency: Latency) -> u64 {
        match latency {
            Latency::Fixed(us) => us,
            Latency::Uniform { lo, hi } => {
                debug_assert!(hi >= lo);
                lo + self.rng.next_u64() % (hi - lo + 1)
            }
        }
    }

    /// Send a message over a link. With probability `drop_probability` the
    /// message is dropped and logged instead of delivered.
    pub fn send(&mut self, from: NodeId, to: NodeId, msg: M, link: &LinkModel) {
        if link.drop_probability > 0.0 {
            let draw = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            if draw < link.drop_probability {
                self.dropped += 1;
                self.log.push(LogEntry {
                    time_us: self.clock_us,
                    sequence: self.next_seq,
                    kind: String::from("drop"),
                    from: Some(from),
                    to: Some(to),
                    note: String::new(),
                });
                return;
            }
        }
        let delay = self.sample_latency(link.latency);
        let mut at = self.clock_us + delay;
        // FIFO clamp: never deliver before an earlier send on the same link.
        if let Some(prev) = self.fifo.get(&(from, to)) {
            at = at.max(*prev);
        }
        self.fifo.insert((from, to), at);
        self.schedule(at, Payload::Deliver { from, to, msg })
            .expect("delivery in the past");
    }

    fn pop_due(&mut self, t_end_us: u64) -> Option<Event<M>> {
        let due = matches!(self.queue.peek(), Some(Reverse(e)) if e.time_us <= t_end_us);
        if !due {
            return None;
        }
        let Reverse(e) = self.queue.pop().unwrap();
        debug_assert!(e.time_us >= self.clock_us, "clock must be nondecreasing");
        self.clock_us = e.time_us;
        Some(Event {
            time_us: e.time_us,
            sequence: e.sequence,
            payload: e.payload,
        })
    }

    /// Execute all events with time <= t_end, dispatching each to `handler`.
    /// The handler may schedule and send further events.
    pub fn run_until(&mut self, t_end_us: u64, mut handler: impl FnMut(&mut Self, Event<M>)) {
        while let Some(ev) = self.pop_due(t_end_us) {
            self.log_event(&ev);
            handler(self, ev);
        }
        self.clock_us = self.clock_us.max(t_end_us);
    }

    fn log_event(&mut self, ev: &Event<M>) {
        let (kind, from, to) = match &ev.payload {
            Payload::Deliver { from, to, .. } => ("deliver", Some(*from), Some(*to)),
            Payload::Timer { node, .. } => ("timer", None, Some(*node)),
            Payload::Fault(f) => ("fault", None, Some(f.node)),
        };
        self.log.push(LogEntry {
            time_us: ev.time_us,
            sequence: ev.sequence,
            kind: String::from(kind),
            from,
            to,
            note: String::new(),
        });
    }
}
