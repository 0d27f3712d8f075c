use crate::engine::{IgnoreReason, NodeKind};
use crate::wire::{ClockQuality, NodeId, Timestamp};

/// Static facts about a simulated station, recorded once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub kind: NodeKind,
    pub gc_capable: bool,
    pub q_local: ClockQuality,
    pub t_fup: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub nodes: Vec<NodeInfo>,
    pub snapshot_interval: Timestamp,
    pub duration: Timestamp,
}

impl TraceMeta {
    pub fn node(&self, id: NodeId) -> Option<&NodeInfo> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn max_t_fup(&self) -> Timestamp {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Ffts)
            .map(|n| n.t_fup)
            .max()
            .unwrap_or(Timestamp::from_secs(2))
    }
}

/// Per-node state sampled at a snapshot instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSnapshot {
    /// Disciplined local clock reading.
    pub local: Timestamp,
    pub parent: Option<NodeId>,
    pub q_ref: ClockQuality,
    pub acting_gc: bool,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Snapshot(NodeSnapshot),
    ParentChanged { old: Option<NodeId>, new: Option<NodeId> },
    QrefChanged(ClockQuality),
    OffsetStep(Timestamp),
    RateAdjust(f64),
    Paired { master: NodeId, matches: usize },
    Ignored { from: NodeId, reason: IgnoreReason },
    EntryExpired(NodeId),
    BecameGrandmaster,
    FupSent { seq: u32, records: usize },
    FupDelivered { from: NodeId, seq: u32 },
    FupDropped { from: NodeId, seq: u32 },
    NodeDown,
    NodeUp,
    Hearability { ap: NodeId, added: bool },
    Reassociated(NodeId),
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Snapshot(_) => "snapshot",
            TraceEvent::ParentChanged { .. } => "parent_changed",
            TraceEvent::QrefChanged(_) => "qref_changed",
            TraceEvent::OffsetStep(_) => "offset_step",
            TraceEvent::RateAdjust(_) => "rate_adjust",
            TraceEvent::Paired { .. } => "paired",
            TraceEvent::Ignored { .. } => "ignored",
            TraceEvent::EntryExpired(_) => "entry_expired",
            TraceEvent::BecameGrandmaster => "became_gc",
            TraceEvent::FupSent { .. } => "fup_sent",
            TraceEvent::FupDelivered { .. } => "fup_delivered",
            TraceEvent::FupDropped { .. } => "fup_dropped",
            TraceEvent::NodeDown => "node_down",
            TraceEvent::NodeUp => "node_up",
            TraceEvent::Hearability { .. } => "hearability",
            TraceEvent::Reassociated(_) => "reassociated",
        }
    }

    pub fn detail(&self) -> String {
        fn opt(id: &Option<NodeId>) -> String {
            id.map_or_else(|| "-".to_string(), |i| i.to_string())
        }
        match self {
            TraceEvent::Snapshot(s) => format!(
                "local={} parent={} q_ref={}",
                s.local.as_nanos(),
                opt(&s.parent),
                s.q_ref
            ),
            TraceEvent::ParentChanged { old, new } => format!("{}->{}", opt(old), opt(new)),
            TraceEvent::QrefChanged(q) => q.to_string(),
            TraceEvent::OffsetStep(o) => o.as_nanos().to_string(),
            TraceEvent::RateAdjust(r) => format!("{r:.12}"),
            TraceEvent::Paired { master, matches } => format!("{master} matches={matches}"),
            TraceEvent::Ignored { from, reason } => format!("{from} {}", reason.as_str()),
            TraceEvent::EntryExpired(id) | TraceEvent::Reassociated(id) => id.to_string(),
            TraceEvent::BecameGrandmaster | TraceEvent::NodeDown | TraceEvent::NodeUp => String::new(),
            TraceEvent::FupSent { seq, records } => format!("seq={seq} records={records}"),
            TraceEvent::FupDelivered { from, seq } | TraceEvent::FupDropped { from, seq } => {
                format!("{from} seq={seq}")
            }
            TraceEvent::Hearability { ap, added } => {
                format!("{} {ap}", if *added { "add" } else { "remove" })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// True (simulation) time.
    pub time: Timestamp,
    pub node: NodeId,
    pub event: TraceEvent,
}

/// Delivery accounting for one message class. Every attempt is either
/// delivered or dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounters {
    pub emitted: u64,
    pub attempts: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounters {
    pub beacons: ClassCounters,
    pub fups: ClassCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
    pub messages: MessageCounters,
}

impl Trace {
    pub fn empty(meta: TraceMeta) -> Self {
        Trace {
            meta,
            records: Vec::new(),
            messages: MessageCounters::default(),
        }
    }

    pub fn push(&mut self, time: Timestamp, node: NodeId, event: TraceEvent) {
        debug_assert!(self.records.last().is_none_or(|r| r.time <= time));
        self.records.push(TraceRecord { time, node, event });
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn span(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.records.first()?.time, self.records.last()?.time))
    }

    /// Snapshot instants in order, each with the per-node states taken then.
    pub fn snapshots(&self) -> Vec<(Timestamp, Vec<(NodeId, NodeSnapshot)>)> {
        let mut out: Vec<(Timestamp, Vec<(NodeId, NodeSnapshot)>)> = Vec::new();
        for r in &self.records {
            if let TraceEvent::Snapshot(s) = &r.event {
                match out.last_mut() {
                    Some((t, v)) if *t == r.time => v.push((r.node, *s)),
                    _ => out.push((r.time, vec![(r.node, *s)])),
                }
            }
        }
        out
    }

    pub fn events_of(&self, node: NodeId) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.node == node)
    }
}
