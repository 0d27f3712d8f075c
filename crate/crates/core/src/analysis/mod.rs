//! Post-run analytics over simulation traces: synchronization error against
//! the grandmaster, tree extraction and loop detection, convergence and
//! pairing statistics, CSV export.

pub mod export;
mod metrics;
mod trace;
mod tree;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use metrics::{
    change_times, convergence_time, error_series, error_stats, interpolate, is_settled_at, pairing_stats,
    pairing_success, series_by_node, settle_time, settle_window, sync_error, ErrorSample, ErrorStats, LinkPairing,
};
pub use trace::{ClassCounters, MessageCounters, NodeInfo, NodeSnapshot, Trace, TraceEvent, TraceMeta, TraceRecord};
pub use tree::{extract_tree, find_cycles, tree_timeline, TreeSnapshot};

use crate::wire::{NodeId, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("time {0} outside the trace")]
    OutOfSpan(Timestamp),
    #[error("parent-pointer loop at {time}: {}", fmt_nodes(nodes))]
    Cycle { time: Timestamp, nodes: Vec<NodeId> },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{} exists; pass --force to overwrite", .0.display())]
    WouldOverwrite(PathBuf),
}

fn fmt_nodes(nodes: &[NodeId]) -> String {
    nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" -> ")
}

const MAX_REPORTED: usize = 10;

/// Default |error| bound used for convergence in summaries.
pub const DEFAULT_CONVERGENCE_THRESHOLD_NS: i64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSummary {
    pub id: NodeId,
    pub convergence: Option<Timestamp>,
    pub error: ErrorStats,
    pub parent: Option<NodeId>,
}

/// Headline results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub duration: Timestamp,
    pub settle_time: Option<Timestamp>,
    /// Root of the final tree when it is a single tree.
    pub final_root: Option<NodeId>,
    pub nodes: Vec<NodeSummary>,
    /// Error statistics over all nodes, after settling when the run settled.
    pub error: ErrorStats,
    pub pairing_success: Option<f64>,
    pub messages: MessageCounters,
    pub violations: Vec<String>,
}

impl Summary {
    pub fn compute(trace: &Trace, threshold_ns: i64) -> Self {
        let samples = error_series(trace);
        let settle = settle_time(trace);
        let from = settle.unwrap_or(Timestamp::ZERO);
        let conv = convergence_time(trace, threshold_ns);
        let by_node = series_by_node(&samples);
        let end = trace.span().map_or(Timestamp::ZERO, |s| s.1);
        let cycles = find_cycles(trace);
        let mut violations: Vec<String> = cycles.iter().take(MAX_REPORTED).map(|e| e.to_string()).collect();
        if cycles.len() > MAX_REPORTED {
            violations.push(format!(
                "... loops at {} more snapshot instants",
                cycles.len() - MAX_REPORTED
            ));
        }
        for (name, c) in [("beacon", trace.messages.beacons), ("fup", trace.messages.fups)] {
            if c.delivered + c.dropped != c.attempts {
                violations.push(format!("{name} delivery accounting does not balance"));
            }
        }
        let final_tree = extract_tree(trace, end).ok();
        let nodes = trace
            .meta
            .nodes
            .iter()
            .map(|n| {
                let errs: Vec<i64> = by_node
                    .get(&n.id)
                    .map(|v| v.iter().filter(|(t, _)| *t >= from).map(|(_, e)| *e).collect())
                    .unwrap_or_default();
                NodeSummary {
                    id: n.id,
                    convergence: conv.get(&n.id).copied().flatten(),
                    error: error_stats(&errs),
                    parent: final_tree.as_ref().and_then(|t| t.parent_of(n.id)),
                }
            })
            .collect();
        let all: Vec<i64> = samples.iter().filter(|s| s.time >= from).map(|s| s.error_ns).collect();
        Summary {
            duration: trace.meta.duration,
            settle_time: settle,
            final_root: final_tree.and_then(|t| t.root),
            nodes,
            error: error_stats(&all),
            pairing_success: pairing_success(&pairing_stats(trace)),
            messages: trace.messages,
            violations,
        }
    }

    pub fn render(&self) -> String {
        let opt_t = |t: Option<Timestamp>| t.map_or_else(|| "unbounded".to_string(), export::format_secs);
        let opt_n = |n: Option<NodeId>| n.map_or_else(|| "-".to_string(), |n| n.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "duration_s: {}", export::format_secs(self.duration));
        let _ = writeln!(
            s,
            "settled_at_s: {}",
            self.settle_time
                .map_or_else(|| "not settled".to_string(), export::format_secs)
        );
        let _ = writeln!(s, "root: {}", opt_n(self.final_root));
        let _ = writeln!(s, "mean_abs_error_ns: {:.1}", self.error.mean_abs_ns);
        let _ = writeln!(s, "max_abs_error_ns: {}", self.error.max_abs_ns);
        let _ = writeln!(
            s,
            "pairing_success: {}",
            self.pairing_success
                .map_or_else(|| "-".to_string(), |p| format!("{p:.4}"))
        );
        for (name, c) in [("beacons", self.messages.beacons), ("fups", self.messages.fups)] {
            let _ = writeln!(
                s,
                "{name}: emitted={} attempts={} delivered={} dropped={}",
                c.emitted, c.attempts, c.delivered, c.dropped
            );
        }
        let _ = writeln!(s, "violations: {}", self.violations.len());
        for v in &self.violations {
            let _ = writeln!(s, "  {v}");
        }
        let _ = writeln!(
            s,
            "\nnode          parent        converged_s        mean_abs_ns  max_abs_ns"
        );
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "{}  {:<12}  {:<17}  {:>11.1}  {:>10}",
                n.id,
                opt_n(n.parent),
                opt_t(n.convergence),
                n.error.mean_abs_ns,
                n.error.max_abs_ns
            );
        }
        s
    }
}

/// Writes errors.csv, tree.csv, events.csv, pairing.csv and summary.txt
/// into `dir`.
pub fn export_run(trace: &Trace, dir: &Path, force: bool) -> Result<Summary, AnalysisError> {
    let paths = export::prepare_output_dir(dir, &export::OUTPUT_FILES, force)?;
    let summary = Summary::compute(trace, DEFAULT_CONVERGENCE_THRESHOLD_NS);
    export::write_errors(&error_series(trace), &paths[0])?;
    let timeline = match tree_timeline(trace) {
        Ok(t) => t,
        // Keep the consistent prefix; the loop itself is in the summary.
        Err(_) => partial_timeline(trace),
    };
    export::write_tree(&timeline, &paths[1])?;
    export::write_events(trace, &paths[2])?;
    export::write_pairing(&pairing_stats(trace), &paths[3])?;
    export::write_text(&paths[4], &summary.render())?;
    Ok(summary)
}

fn partial_timeline(trace: &Trace) -> Vec<TreeSnapshot> {
    let mut times: Vec<Timestamp> = trace.snapshots().into_iter().map(|(t, _)| t).collect();
    times.dedup();
    let mut out = Vec::new();
    for t in times {
        match extract_tree(trace, t) {
            Ok(s) => out.push(s),
            Err(_) => break,
        }
    }
    out
}

/// Per-node mean |error| over samples at or after `from`.
pub fn mean_abs_error_by_node(trace: &Trace, from: Timestamp) -> BTreeMap<NodeId, f64> {
    series_by_node(&error_series(trace))
        .into_iter()
        .map(|(n, v)| {
            let errs: Vec<i64> = v.into_iter().filter(|(t, _)| *t >= from).map(|(_, e)| e).collect();
            (n, error_stats(&errs).mean_abs_ns)
        })
        .collect()
}
