use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::wire::{NodeId, Timestamp, Tsf};

use super::mobility::MobilityAction;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Mobility(MobilityAction),
    /// AP emits a beacon; `node` is the AP.
    Beacon,
    /// Delayed beacon reception; `node` is the receiving STA.
    BeaconArrival {
        ap: NodeId,
        tsf: Tsf,
    },
    /// FUP reaches a STA; `node` is the receiver.
    FupArrival {
        sender: NodeId,
        bytes: Arc<Vec<u8>>,
    },
    Tick,
    Snapshot,
}

impl EventKind {
    /// Tiebreak rank at equal true time.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::Mobility(_) => 0,
            EventKind::Beacon => 1,
            EventKind::BeaconArrival { .. } => 2,
            EventKind::FupArrival { .. } => 3,
            EventKind::Tick => 4,
            EventKind::Snapshot => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: Timestamp,
    pub node: NodeId,
    pub kind: EventKind,
    seq: u64,
}

impl Event {
    fn key(&self) -> (Timestamp, u8, NodeId, u64) {
        (self.time, self.kind.rank(), self.node, self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue over (true time, kind, node, insertion order).
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Timestamp, node: NodeId, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, node, kind, seq }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.heap.iter().filter(|Reverse(e)| pred(&e.kind)).count()
    }

    /// Events in processing order, leaving the queue untouched.
    pub fn sorted(&self) -> Vec<Event> {
        let mut v: Vec<Event> = self.heap.iter().map(|Reverse(e)| e.clone()).collect();
        v.sort();
        v
    }
}
