//! Per-station synchronization state machine.
//!
//! The engine owns no clock and no socket. The harness feeds it beacon
//! arrivals, decoded FUPs and timer ticks, all stamped with the node's own
//! local clock, and applies the returned clock corrections.
//!
//! Every timestamp the engine stores (sync list, parent table, pending timers)
//! lives in the node's current disciplined time base: whenever it emits a
//! correction it remaps its stored times the same way the clock will move.

mod config;
mod parent;
mod sync_list;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::EngineConfig;
pub use parent::{estimate_link_error, pair, update_mean_intertime, ClockQualityEntry, LinkError, Match};
pub use sync_list::SyncList;

use crate::timebase::{cda_offset, rate_if_baseline, SyncSample};
use crate::wire::{Beacon, BeaconRecord, ClockQuality, FupMessage, NodeId, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("role violation: {0}")]
    RoleViolation(&'static str),
    #[error("time not increasing: {next} after {previous}")]
    TimeNotIncreasing { previous: Timestamp, next: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Full-function station: slave and master sides.
    Ffts,
    /// Reduced-function station: slave side only.
    Rfts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRole {
    pub kind: NodeKind,
    pub gc_capable: bool,
    /// Local clock quality Q_L.
    pub q_local: ClockQuality,
}

impl NodeRole {
    pub fn grandmaster_capable(q_local: ClockQuality) -> Self {
        NodeRole {
            kind: NodeKind::Ffts,
            gc_capable: true,
            q_local,
        }
    }

    /// Boundary clock that never acts as grandmaster.
    pub fn boundary() -> Self {
        NodeRole {
            kind: NodeKind::Ffts,
            gc_capable: false,
            q_local: ClockQuality::INFINITE,
        }
    }

    pub fn slave_only() -> Self {
        NodeRole {
            kind: NodeKind::Rfts,
            gc_capable: false,
            q_local: ClockQuality::INFINITE,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.kind == NodeKind::Rfts && self.gc_capable {
            return Err(EngineError::Config(
                "reduced-function stations cannot be grandmaster capable".into(),
            ));
        }
        if !self.gc_capable && !self.q_local.is_infinite() {
            return Err(EngineError::Config(
                "stations that cannot act as grandmaster must have infinite local quality".into(),
            ));
        }
        if self.gc_capable && self.q_local.is_infinite() {
            return Err(EngineError::Config(
                "grandmaster-capable stations need a finite local quality".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncStatus {
    Unsynchronized,
    Synchronized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IgnoreReason {
    /// Our own FUP came back.
    SelfSent,
    /// Source quality not better than our reference.
    Quality,
    /// No beacon in common.
    NoMatch,
    /// Source claims a reference we recently lost.
    HoldDown,
    /// Arrival time not after the previous paired FUP from this master.
    Stale,
}

impl IgnoreReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            IgnoreReason::SelfSent => "self",
            IgnoreReason::Quality => "quality",
            IgnoreReason::NoMatch => "no_match",
            IgnoreReason::HoldDown => "holddown",
            IgnoreReason::Stale => "stale",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Step the local clock back by this amount.
    AdjustOffset(Timestamp),
    /// Multiply the local rate correction by this factor.
    AdjustRate(f64),
    ParentChanged {
        old: Option<NodeId>,
        new: Option<NodeId>,
    },
    QrefChanged(ClockQuality),
    /// Pairing ran against a FUP from `master`.
    Paired {
        master: NodeId,
        matches: usize,
    },
    EntryExpired(NodeId),
    /// Parent table emptied on a grandmaster-capable node.
    BecameGrandmaster,
    Ignored {
        from: NodeId,
        reason: IgnoreReason,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub beacons_logged: u64,
    pub fups_sent: u64,
    pub fups_received: u64,
    pub fups_paired: u64,
    pub ignored: BTreeMap<&'static str, u64>,
}

#[derive(Debug, Clone, Default)]
pub struct TickOutput {
    pub actions: Vec<Action>,
    pub fups: Vec<FupMessage>,
}

#[derive(Debug, Clone, Copy)]
struct HoldDown {
    lost: ClockQuality,
    until: Timestamp,
}

#[derive(Debug, Clone)]
pub struct Engine {
    id: NodeId,
    role: NodeRole,
    config: EngineConfig,
    sync_list: SyncList,
    parent_table: BTreeMap<NodeId, ClockQualityEntry>,
    parent: Option<NodeId>,
    q_ref: ClockQuality,
    last_sample: Option<SyncSample>,
    next_fup: Option<Timestamp>,
    last_fup_at: Option<Timestamp>,
    seq: u32,
    holddown: Option<HoldDown>,
    rng: ChaCha8Rng,
    diagnostics: Diagnostics,
}

impl Engine {
    pub fn new(id: NodeId, role: NodeRole, config: EngineConfig, seed: u64) -> Result<Self, EngineError> {
        role.validate()?;
        config.validate()?;
        Ok(Engine {
            id,
            role,
            sync_list: SyncList::new(config.sync_list_capacity),
            config,
            parent_table: BTreeMap::new(),
            parent: None,
            q_ref: role.q_local,
            last_sample: None,
            next_fup: None,
            last_fup_at: None,
            seq: 0,
            holddown: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn role(&self) -> &NodeRole {
        &self.role
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn q_ref(&self) -> ClockQuality {
        self.q_ref
    }

    pub fn sync_list(&self) -> &SyncList {
        &self.sync_list
    }

    pub fn parent_table(&self) -> &BTreeMap<NodeId, ClockQualityEntry> {
        &self.parent_table
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn status(&self) -> SyncStatus {
        if self.parent.is_some() {
            SyncStatus::Synchronized
        } else {
            SyncStatus::Unsynchronized
        }
    }

    /// A grandmaster-capable node without a parent uses its own clock as the
    /// network reference and never adjusts it.
    pub fn is_acting_gc(&self) -> bool {
        self.role.gc_capable && self.parent.is_none()
    }

    /// Beacon logging: every beacon heard, from any AP.
    pub fn on_beacon(&mut self, beacon: Beacon, local_t: Timestamp) -> bool {
        let logged = self.sync_list.insert(BeaconRecord {
            ap: beacon.ap,
            tsf: beacon.tsf,
            t: local_t,
        });
        if logged {
            self.diagnostics.beacons_logged += 1;
        }
        logged
    }

    /// Our current error estimate, as advertised in outgoing FUPs.
    pub fn estimate_own_error(&self) -> LinkError {
        if self.is_acting_gc() {
            return LinkError::Finite(self.config.gc_error.as_nanos());
        }
        match self.parent.and_then(|p| self.parent_table.get(&p)) {
            Some(entry) => estimate_link_error(entry, self.config.e_f_local_ppm),
            None => LinkError::Infinite,
        }
    }

    pub fn build_fup(&mut self, now: Timestamp) -> Result<Option<FupMessage>, EngineError> {
        if self.role.kind == NodeKind::Rfts {
            return Err(EngineError::RoleViolation("reduced-function stations do not send FUPs"));
        }
        let records = match (self.config.fresh_records_only, self.last_fup_at) {
            (true, Some(since)) => self.sync_list.most_recent_after(self.config.fup_records_max, since),
            _ => self.sync_list.most_recent(self.config.fup_records_max),
        };
        self.last_fup_at = Some(now);
        if records.is_empty() {
            return Ok(None);
        }
        self.seq = self.seq.wrapping_add(1);
        self.diagnostics.fups_sent += 1;
        Ok(Some(FupMessage {
            sender: self.id,
            seq: self.seq,
            records,
            e: self.estimate_own_error().to_wire(),
            sq: self.q_ref,
        }))
    }

    fn ignore(&mut self, from: NodeId, reason: IgnoreReason, out: &mut Vec<Action>) {
        *self.diagnostics.ignored.entry(reason.as_str()).or_default() += 1;
        out.push(Action::Ignored { from, reason });
    }

    fn holddown_blocks(&self, sq: &ClockQuality, now: Timestamp) -> bool {
        match self.holddown {
            Some(h) if now < h.until => *sq <= h.lost,
            _ => false,
        }
    }

    pub fn on_fup(&mut self, msg: &FupMessage, arrival_tau: Timestamp) -> Vec<Action> {
        let mut out = Vec::new();
        let from = msg.sender;
        if from == self.id {
            self.ignore(from, IgnoreReason::SelfSent, &mut out);
            return out;
        }
        let gate = !self.config.disable_sq_gate;
        if gate && self.is_acting_gc() && !msg.sq.is_better_than(&self.role.q_local) {
            self.ignore(from, IgnoreReason::Quality, &mut out);
            return out;
        }

        self.diagnostics.fups_received += 1;
        let matches = pair(&msg.records, self.sync_list.iter());
        out.push(Action::Paired {
            master: from,
            matches: matches.len(),
        });
        let Some(latest) = matches.last().copied() else {
            self.ignore(from, IgnoreReason::NoMatch, &mut out);
            return out;
        };
        self.diagnostics.fups_paired += 1;

        let from_parent = self.parent == Some(from);
        if gate {
            // A grandmaster-capable node never follows a source it could
            // replace itself, parent included.
            let reason = if !from_parent && !msg.sq.is_better_than(&self.q_ref)
                || self.role.gc_capable && !msg.sq.is_better_than(&self.role.q_local)
            {
                Some(IgnoreReason::Quality)
            } else if self.holddown_blocks(&msg.sq, arrival_tau) {
                Some(IgnoreReason::HoldDown)
            } else {
                None
            };
            if let Some(reason) = reason {
                // An older entry no longer describes what this master offers.
                self.parent_table.remove(&from);
                self.ignore(from, reason, &mut out);
                if from_parent {
                    self.reselect_after_removal(arrival_tau, &mut out);
                }
                return out;
            }
        }

        let e = LinkError::from_wire(msg.e);
        match self.parent_table.get_mut(&from) {
            Some(entry) => {
                if update_mean_intertime(entry, arrival_tau, &self.config).is_err() {
                    self.ignore(from, IgnoreReason::Stale, &mut out);
                    return out;
                }
                entry.e = e;
                entry.q = msg.sq;
            }
            None => {
                self.parent_table
                    .insert(from, ClockQualityEntry::new(from, e, arrival_tau, msg.sq));
            }
        }

        self.select_parent(arrival_tau, &mut out);

        if self.parent == Some(from) {
            self.discipline(latest, arrival_tau, &mut out);
        }
        out
    }

    /// Clock adjustment from the most recent match of a FUP sent by our parent.
    fn discipline(&mut self, latest: Match, arrival_tau: Timestamp, out: &mut Vec<Action>) {
        let sample = SyncSample {
            local_t: latest.local.t,
            remote_t: latest.remote.t,
        };
        let offset = cda_offset(&sample);
        let rate = match (self.config.rate_correction, self.last_sample) {
            (true, Some(prev)) => rate_if_baseline(&prev, &sample, self.config.min_rate_baseline)
                .ok()
                .flatten(),
            _ => None,
        };

        out.push(Action::AdjustOffset(offset));
        self.remap(|t| t - offset);
        let mut stored = sample.shifted(-offset);

        if let Some(r) = rate {
            out.push(Action::AdjustRate(r));
            let anchor = arrival_tau - offset;
            let rescale = move |t: Timestamp| anchor + Timestamp(((t - anchor).as_nanos() as f64 * r).round() as i64);
            self.remap(rescale);
            stored.local_t = rescale(stored.local_t);
        }
        self.last_sample = Some(stored);
    }

    fn remap(&mut self, f: impl Fn(Timestamp) -> Timestamp + Copy) {
        self.sync_list.remap(f);
        for entry in self.parent_table.values_mut() {
            entry.tau = f(entry.tau);
        }
        if let Some(s) = self.last_sample.as_mut() {
            s.local_t = f(s.local_t);
        }
        self.next_fup = self.next_fup.map(f);
        self.last_fup_at = self.last_fup_at.map(f);
        if let Some(h) = self.holddown.as_mut() {
            h.until = f(h.until);
        }
    }

    fn link_error(&self, entry: &ClockQualityEntry) -> LinkError {
        estimate_link_error(entry, self.config.e_f_local_ppm)
    }

    /// Re-evaluates the best potential parent after any parent-table change.
    ///
    /// Quality decides first; link error only separates entries of equal
    /// quality, and then only beyond the hysteresis margin.
    pub fn select_parent(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        let best = self
            .parent_table
            .values()
            .min_by_key(|e| (e.q, self.link_error(e), e.master))
            .cloned();
        let Some(best) = best else {
            return;
        };
        let switch = match self.parent {
            None => true,
            Some(p) if p == best.master => false,
            Some(p) => match self.parent_table.get(&p) {
                None => true,
                Some(current) if best.q < current.q => true,
                Some(current) if best.q == current.q => self
                    .link_error(&best)
                    .below_fraction_of(self.config.hysteresis_alpha, self.link_error(current)),
                Some(_) => false,
            },
        };
        if switch {
            let old = self.parent.replace(best.master);
            self.last_sample = None;
            out.push(Action::ParentChanged {
                old,
                new: Some(best.master),
            });
        }
        let q = self.parent_table[&self.parent.expect("parent set above")].q;
        self.set_q_ref(q, now, out);
    }

    fn set_q_ref(&mut self, q: ClockQuality, now: Timestamp, out: &mut Vec<Action>) {
        if q == self.q_ref {
            return;
        }
        if self.q_ref < q && self.config.holddown > Timestamp::ZERO {
            let lost = match self.holddown {
                Some(h) if now < h.until => h.lost.max(self.q_ref),
                _ => self.q_ref,
            };
            self.holddown = Some(HoldDown {
                lost,
                until: now + self.config.holddown,
            });
        }
        self.q_ref = q;
        out.push(Action::QrefChanged(q));
    }

    /// Drops parent-table entries not refreshed within `t_pcl`.
    pub fn expire_entries(&mut self, now: Timestamp) -> Vec<Action> {
        let mut out = Vec::new();
        let t_pcl = self.config.t_pcl;
        let dead: Vec<NodeId> = self
            .parent_table
            .values()
            .filter(|e| now - e.tau > t_pcl)
            .map(|e| e.master)
            .collect();
        if dead.is_empty() {
            return out;
        }
        for id in &dead {
            self.parent_table.remove(id);
            out.push(Action::EntryExpired(*id));
        }
        self.reselect_after_removal(now, &mut out);
        out
    }

    fn reselect_after_removal(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        if !self.parent_table.is_empty() {
            self.select_parent(now, out);
        } else if let Some(old) = self.parent.take() {
            self.last_sample = None;
            out.push(Action::ParentChanged {
                old: Some(old),
                new: None,
            });
            self.set_q_ref(self.role.q_local, now, out);
            if self.role.gc_capable {
                out.push(Action::BecameGrandmaster);
            }
        }
    }

    fn jittered_period(&mut self) -> Timestamp {
        let j = self.config.fup_jitter_frac;
        let factor = if j > 0.0 { 1.0 + self.rng.gen_range(-j..=j) } else { 1.0 };
        Timestamp((self.config.t_fup.as_nanos() as f64 * factor).round() as i64)
    }

    /// Timer entry point: expiry sweep plus FUP emission on full-function nodes.
    pub fn tick(&mut self, now: Timestamp) -> TickOutput {
        let mut output = TickOutput {
            actions: self.expire_entries(now),
            fups: Vec::new(),
        };
        if self.role.kind == NodeKind::Rfts {
            return output;
        }
        let due = match self.next_fup {
            Some(t) => t,
            None => {
                let phase = if self.config.fup_jitter_frac > 0.0 {
                    let t_fup = self.config.t_fup.as_nanos();
                    Timestamp(self.rng.gen_range(0..t_fup))
                } else {
                    self.config.t_fup
                };
                let first = now + phase;
                self.next_fup = Some(first);
                first
            }
        };
        if now >= due {
            let mut next = due + self.jittered_period();
            if next <= now {
                next = now + self.jittered_period();
            }
            self.next_fup = Some(next);
            if let Ok(Some(fup)) = self.build_fup(now) {
                output.fups.push(fup);
            }
        }
        output
    }

    /// Called on a station that comes back after leaving the network. Its
    /// former children may still advertise the quality they learned through
    /// it until their entries expire, so every FUP that would install a
    /// parent is refused for `holddown`.
    pub fn rejoin(&mut self, now: Timestamp) {
        if self.config.holddown > Timestamp::ZERO {
            self.holddown = Some(HoldDown {
                lost: ClockQuality::INFINITE,
                until: now + self.config.holddown,
            });
        }
    }

    /// Seeds the parent table directly. Meant for tests and tooling that need
    /// a specific table state.
    pub fn insert_entry(&mut self, entry: ClockQualityEntry) {
        self.parent_table.insert(entry.master, entry);
    }
}
