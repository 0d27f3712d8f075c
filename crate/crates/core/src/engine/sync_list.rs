use std::collections::VecDeque;

use crate::wire::{BeaconRecord, Timestamp};

/// Bounded list of logged beacons ordered by local arrival time. The oldest
/// entry is evicted when full.
#[derive(Debug, Clone)]
pub struct SyncList {
    entries: VecDeque<BeaconRecord>,
    capacity: usize,
    duplicates: u64,
}

impl SyncList {
    pub fn new(capacity: usize) -> Self {
        SyncList {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            duplicates: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn iter(&self) -> impl Iterator<Item = &BeaconRecord> {
        self.entries.iter()
    }

    /// Returns false (and counts it) when the same (ap, tsf) is already present.
    pub fn insert(&mut self, rec: BeaconRecord) -> bool {
        if self.entries.iter().any(|r| r.ap == rec.ap && r.tsf == rec.tsf) {
            self.duplicates += 1;
            return false;
        }
        let pos = self.entries.iter().rposition(|r| r.t <= rec.t).map_or(0, |p| p + 1);
        self.entries.insert(pos, rec);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        true
    }

    /// Up to `n` most recent records, ascending by t.
    pub fn most_recent(&self, n: usize) -> Vec<BeaconRecord> {
        let skip = self.entries.len().saturating_sub(n);
        self.entries.iter().skip(skip).copied().collect()
    }

    /// Up to `n` most recent records logged strictly after `since`.
    pub fn most_recent_after(&self, n: usize, since: Timestamp) -> Vec<BeaconRecord> {
        let mut out: Vec<_> = self
            .entries
            .iter()
            .rev()
            .take_while(|r| r.t > since)
            .take(n)
            .copied()
            .collect();
        out.reverse();
        out
    }

    pub(crate) fn remap(&mut self, f: impl Fn(Timestamp) -> Timestamp) {
        for r in self.entries.iter_mut() {
            r.t = f(r.t);
        }
    }
}
