use std::collections::{BTreeMap, BTreeSet};

use crate::wire::{NodeId, Timestamp};

use super::trace::{Trace, TraceEvent, TraceMeta};
use super::AnalysisError;

/// Parent pointers among active stations at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSnapshot {
    pub time: Timestamp,
    /// (child, parent) for every active station following an active parent.
    pub edges: BTreeSet<(NodeId, NodeId)>,
    /// Active stations without an active parent.
    pub roots: BTreeSet<NodeId>,
    /// The acting grandmaster when the stations form one tree under it.
    pub root: Option<NodeId>,
    pub active: BTreeSet<NodeId>,
}

impl TreeSnapshot {
    pub fn parent_of(&self, child: NodeId) -> Option<NodeId> {
        self.edges
            .range((child, NodeId([0; 6]))..=(child, NodeId::BROADCAST))
            .next()
            .map(|e| e.1)
    }

    /// Root reached by following parents from `node`.
    pub fn root_of(&self, node: NodeId) -> NodeId {
        let mut cur = node;
        let mut steps = 0;
        while let Some(p) = self.parent_of(cur) {
            cur = p;
            steps += 1;
            if steps > self.active.len() {
                break;
            }
        }
        cur
    }

    /// Stations on the path from `node` up to its root, `node` first.
    pub fn path_to_root(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent_of(cur) {
            if path.contains(&p) {
                break;
            }
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn hops(&self, node: NodeId) -> usize {
        self.path_to_root(node).len() - 1
    }

    pub fn is_single_tree(&self) -> bool {
        self.root.is_some()
    }
}

/// Parent pointers as the trace evolves, folding ParentChanged and up/down
/// events in order.
#[derive(Debug, Clone, Default)]
pub(crate) struct TreeState {
    parent: BTreeMap<NodeId, Option<NodeId>>,
    active: BTreeMap<NodeId, bool>,
}

impl TreeState {
    pub(crate) fn new(meta: &TraceMeta) -> Self {
        TreeState {
            parent: meta.nodes.iter().map(|n| (n.id, None)).collect(),
            active: meta.nodes.iter().map(|n| (n.id, true)).collect(),
        }
    }

    pub(crate) fn apply(&mut self, node: NodeId, ev: &TraceEvent) {
        match ev {
            TraceEvent::ParentChanged { new, .. } => {
                self.parent.insert(node, *new);
            }
            TraceEvent::NodeDown => {
                self.active.insert(node, false);
            }
            TraceEvent::NodeUp => {
                self.active.insert(node, true);
                self.parent.insert(node, None);
            }
            _ => {}
        }
    }

    pub(crate) fn snapshot(&self, time: Timestamp, meta: &TraceMeta) -> Result<TreeSnapshot, AnalysisError> {
        let active: BTreeSet<NodeId> = self.active.iter().filter(|(_, a)| **a).map(|(n, _)| *n).collect();
        let mut edges = BTreeSet::new();
        let mut roots = BTreeSet::new();
        for &n in &active {
            match self.parent.get(&n).copied().flatten() {
                Some(p) if active.contains(&p) => {
                    edges.insert((n, p));
                }
                _ => {
                    roots.insert(n);
                }
            }
        }
        // Follow pointers from every node; a walk that revisits a node
        // without reaching a root is a loop.
        let next: BTreeMap<NodeId, NodeId> = edges.iter().copied().collect();
        let mut done: BTreeSet<NodeId> = roots.clone();
        for &start in &active {
            let mut path = Vec::new();
            let mut on_path = BTreeSet::new();
            let mut cur = start;
            while !done.contains(&cur) {
                if !on_path.insert(cur) {
                    let i = path.iter().position(|&x| x == cur).expect("on path");
                    return Err(AnalysisError::Cycle {
                        time,
                        nodes: path[i..].to_vec(),
                    });
                }
                path.push(cur);
                cur = next[&cur];
            }
            done.extend(path);
        }
        let root = match roots.iter().next() {
            Some(&r) if roots.len() == 1 && meta.node(r).is_some_and(|i| i.gc_capable) => Some(r),
            _ => None,
        };
        Ok(TreeSnapshot {
            time,
            edges,
            roots,
            root,
            active,
        })
    }
}

/// Synchronization tree at true time `t`, from the parent changes up to `t`.
pub fn extract_tree(trace: &Trace, t: Timestamp) -> Result<TreeSnapshot, AnalysisError> {
    if let Some((start, end)) = trace.span() {
        if t < start.min(Timestamp::ZERO) || t > end {
            return Err(AnalysisError::OutOfSpan(t));
        }
    }
    let mut state = TreeState::new(&trace.meta);
    for r in trace.records.iter().take_while(|r| r.time <= t) {
        state.apply(r.node, &r.event);
    }
    state.snapshot(t, &trace.meta)
}

/// The tree at every snapshot instant. Stops at the first loop.
pub fn tree_timeline(trace: &Trace) -> Result<Vec<TreeSnapshot>, AnalysisError> {
    let mut state = TreeState::new(&trace.meta);
    let mut out = Vec::new();
    let mut last: Option<Timestamp> = None;
    for r in &trace.records {
        if let TraceEvent::Snapshot(_) = r.event {
            if last != Some(r.time) {
                last = Some(r.time);
                out.push(state.snapshot(r.time, &trace.meta)?);
            }
        } else {
            state.apply(r.node, &r.event);
        }
    }
    Ok(out)
}

/// Every loop found at a snapshot instant, one per instant.
pub fn find_cycles(trace: &Trace) -> Vec<AnalysisError> {
    let mut state = TreeState::new(&trace.meta);
    let mut out = Vec::new();
    let mut last: Option<Timestamp> = None;
    for r in &trace.records {
        if let TraceEvent::Snapshot(_) = r.event {
            if last != Some(r.time) {
                last = Some(r.time);
                if let Err(e) = state.snapshot(r.time, &trace.meta) {
                    out.push(e);
                }
            }
        } else {
            state.apply(r.node, &r.event);
        }
    }
    out
}
