use std::collections::BTreeMap;

use crate::wire::{NodeId, Timestamp};

use super::trace::{NodeSnapshot, Trace, TraceEvent};
use super::AnalysisError;

/// One point of a node's synchronization error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorSample {
    pub time: Timestamp,
    pub node: NodeId,
    /// Disciplined local time minus the reference grandmaster's local time.
    pub error_ns: i64,
}

fn reference_for(node: NodeId, states: &BTreeMap<NodeId, NodeSnapshot>, fallback: Option<NodeId>) -> Option<NodeId> {
    let mut cur = node;
    for _ in 0..=states.len() {
        let s = states.get(&cur)?;
        match s.parent {
            Some(p) if states.get(&p).is_some_and(|ps| ps.active) => cur = p,
            _ => return if s.acting_gc { Some(cur) } else { fallback },
        }
    }
    fallback
}

/// Error of every active node at every snapshot, measured against the
/// acting grandmaster at the root of its tree, or against the best acting
/// grandmaster when its own tree has none.
pub fn error_series(trace: &Trace) -> Vec<ErrorSample> {
    let mut out = Vec::new();
    for (time, nodes) in trace.snapshots() {
        let states: BTreeMap<NodeId, NodeSnapshot> =
            nodes.iter().filter(|(_, s)| s.active).map(|(n, s)| (*n, *s)).collect();
        let best_gc = states
            .iter()
            .filter(|(_, s)| s.acting_gc)
            .filter_map(|(n, _)| trace.meta.node(*n).map(|i| (i.q_local, *n)))
            .min()
            .map(|(_, n)| n);
        for (&node, s) in &states {
            if let Some(r) = reference_for(node, &states, best_gc) {
                out.push(ErrorSample {
                    time,
                    node,
                    error_ns: (s.local - states[&r].local).as_nanos(),
                });
            }
        }
    }
    out
}

pub fn series_by_node(samples: &[ErrorSample]) -> BTreeMap<NodeId, Vec<(Timestamp, i64)>> {
    let mut m: BTreeMap<NodeId, Vec<(Timestamp, i64)>> = BTreeMap::new();
    for s in samples {
        m.entry(s.node).or_default().push((s.time, s.error_ns));
    }
    m
}

/// Synchronization error of `node` at true time `t`, linearly interpolated
/// between the surrounding snapshots.
pub fn sync_error(trace: &Trace, node: NodeId, t: Timestamp) -> Result<i64, AnalysisError> {
    if trace.meta.node(node).is_none() {
        return Err(AnalysisError::UnknownNode(node));
    }
    let series: Vec<(Timestamp, i64)> = error_series(trace)
        .into_iter()
        .filter(|s| s.node == node)
        .map(|s| (s.time, s.error_ns))
        .collect();
    interpolate(&series, t).ok_or(AnalysisError::OutOfSpan(t))
}

pub fn interpolate(series: &[(Timestamp, i64)], t: Timestamp) -> Option<i64> {
    let i = series.partition_point(|(st, _)| *st < t);
    let (t1, e1) = *series.get(i)?;
    if t1 == t {
        return Some(e1);
    }
    let (t0, e0) = *series.get(i.checked_sub(1)?)?;
    let frac = (t - t0).as_nanos() as f64 / (t1 - t0).as_nanos() as f64;
    Some((e0 as f64 + frac * (e1 - e0) as f64).round() as i64)
}

/// First instant from which |error| stays below `threshold_ns` over a full
/// window of three FUP periods, per node. `None` means it never did.
pub fn convergence_time(trace: &Trace, threshold_ns: i64) -> BTreeMap<NodeId, Option<Timestamp>> {
    let window = trace.meta.max_t_fup() * 3;
    let series = series_by_node(&error_series(trace));
    let gap = trace.meta.snapshot_interval * 3 / 2;
    trace
        .meta
        .nodes
        .iter()
        .map(|n| {
            let s = series.get(&n.id).map(Vec::as_slice).unwrap_or(&[]);
            (n.id, first_stable(s, threshold_ns, window, gap))
        })
        .collect()
}

fn first_stable(s: &[(Timestamp, i64)], threshold: i64, window: Timestamp, gap: Timestamp) -> Option<Timestamp> {
    let mut start: Option<Timestamp> = None;
    let mut prev: Option<Timestamp> = None;
    for &(t, e) in s {
        let contiguous = prev.is_none_or(|p| t - p <= gap);
        prev = Some(t);
        if e.abs() >= threshold || !contiguous {
            start = None;
        }
        if e.abs() < threshold {
            let st = *start.get_or_insert(t);
            if t - st >= window {
                return Some(st);
            }
        }
    }
    None
}

/// Times of ParentChanged and QrefChanged events, in order.
pub fn change_times(trace: &Trace) -> Vec<Timestamp> {
    trace
        .records
        .iter()
        .filter(|r| matches!(r.event, TraceEvent::ParentChanged { .. } | TraceEvent::QrefChanged(_)))
        .map(|r| r.time)
        .collect()
}

pub fn settle_window(trace: &Trace) -> Timestamp {
    trace.meta.max_t_fup() * 3
}

/// Whether no parent or reference change happened in the settle window
/// ending at `t`.
pub fn is_settled_at(changes: &[Timestamp], window: Timestamp, t: Timestamp) -> bool {
    if t < window {
        return false;
    }
    let i = changes.partition_point(|c| *c <= t);
    i == 0 || t - changes[i - 1] >= window
}

/// Instant at which the network last became settled, if it is at the end of
/// the trace.
pub fn settle_time(trace: &Trace) -> Option<Timestamp> {
    let (_, end) = trace.span()?;
    let window = settle_window(trace);
    let changes = change_times(trace);
    let at = changes.last().map_or(window, |c| *c + window);
    (at <= end).then_some(at)
}

/// Pairing outcomes on one TS link.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkPairing {
    /// FUPs from the master that the slave tried to pair.
    pub fups_rx: u64,
    /// Of those, FUPs with at least one match.
    pub fups_paired: u64,
    /// Match count to number of FUPs with that count.
    pub histogram: BTreeMap<usize, u64>,
}

impl LinkPairing {
    pub fn max_matches(&self) -> usize {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    pub fn success_rate(&self) -> Option<f64> {
        (self.fups_rx > 0).then(|| self.fups_paired as f64 / self.fups_rx as f64)
    }
}

/// Per (master, slave) pairing statistics.
pub fn pairing_stats(trace: &Trace) -> BTreeMap<(NodeId, NodeId), LinkPairing> {
    let mut out: BTreeMap<(NodeId, NodeId), LinkPairing> = BTreeMap::new();
    for r in &trace.records {
        if let TraceEvent::Paired { master, matches } = r.event {
            let l = out.entry((master, r.node)).or_default();
            l.fups_rx += 1;
            if matches > 0 {
                l.fups_paired += 1;
            }
            *l.histogram.entry(matches).or_default() += 1;
        }
    }
    out
}

/// Overall pairing success over all links.
pub fn pairing_success(stats: &BTreeMap<(NodeId, NodeId), LinkPairing>) -> Option<f64> {
    let rx: u64 = stats.values().map(|l| l.fups_rx).sum();
    let ok: u64 = stats.values().map(|l| l.fups_paired).sum();
    (rx > 0).then(|| ok as f64 / rx as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorStats {
    pub samples: usize,
    pub mean_abs_ns: f64,
    pub max_abs_ns: i64,
}

pub fn error_stats<'a>(samples: impl IntoIterator<Item = &'a i64>) -> ErrorStats {
    let mut n = 0usize;
    let mut sum = 0f64;
    let mut max = 0i64;
    for e in samples {
        n += 1;
        sum += e.unsigned_abs() as f64;
        max = max.max(e.saturating_abs());
    }
    ErrorStats {
        samples: n,
        mean_abs_ns: if n > 0 { sum / n as f64 } else { 0.0 },
        max_abs_ns: max,
    }
}
