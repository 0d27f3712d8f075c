use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::wire::{NodeId, Timestamp};

use super::metrics::{ErrorSample, LinkPairing};
use super::trace::{Trace, TraceEvent};
use super::tree::TreeSnapshot;
use super::AnalysisError;

pub const ERRORS_CSV: &str = "errors.csv";
pub const TREE_CSV: &str = "tree.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const PAIRING_CSV: &str = "pairing.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

pub const OUTPUT_FILES: [&str; 5] = [ERRORS_CSV, TREE_CSV, EVENTS_CSV, PAIRING_CSV, SUMMARY_TXT];

/// Seconds with exactly nine decimals, so nanoseconds survive a round trip.
pub fn format_secs(t: Timestamp) -> String {
    let ns = t.as_nanos();
    let sign = if ns < 0 { "-" } else { "" };
    let a = ns.unsigned_abs();
    format!("{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)
}

pub fn parse_secs(s: &str) -> Option<Timestamp> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if frac.len() > 9 || whole.is_empty() {
        return None;
    }
    let w: i64 = whole.parse().ok()?;
    let f: i64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<9}").parse().ok()?
    };
    let ns = w.checked_mul(1_000_000_000)?.checked_add(f)?;
    Some(Timestamp(if neg { -ns } else { ns }))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AnalysisError {
    AnalysisError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, AnalysisError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let h = r.headers().map_err(|e| io_err(path, e))?;
    if h.iter().ne(header.iter().copied()) {
        return Err(io_err(path, format!("unexpected header {h:?}")));
    }
    r.records().map(|rec| rec.map_err(|e| io_err(path, e))).collect()
}

fn field<T>(
    path: &Path,
    rec: &csv::StringRecord,
    i: usize,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T, AnalysisError> {
    rec.get(i)
        .and_then(parse)
        .ok_or_else(|| io_err(path, format!("bad field {i} in {rec:?}")))
}

const ERRORS_HEADER: [&str; 3] = ["true_time_s", "node_id", "error_ns"];

pub fn write_errors(samples: &[ErrorSample], path: &Path) -> Result<(), AnalysisError> {
    write_table(
        path,
        &ERRORS_HEADER,
        samples
            .iter()
            .map(|s| vec![format_secs(s.time), s.node.to_string(), s.error_ns.to_string()]),
    )
}

pub fn read_errors(path: &Path) -> Result<Vec<ErrorSample>, AnalysisError> {
    read_table(path, &ERRORS_HEADER)?
        .iter()
        .map(|r| {
            Ok(ErrorSample {
                time: field(path, r, 0, parse_secs)?,
                node: field(path, r, 1, |s| s.parse().ok())?,
                error_ns: field(path, r, 2, |s| s.parse().ok())?,
            })
        })
        .collect()
}

/// One row of the tree table; roots have no parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeRow {
    pub time: Timestamp,
    pub child: NodeId,
    pub parent: Option<NodeId>,
}

const TREE_HEADER: [&str; 3] = ["true_time_s", "child_id", "parent_id"];

pub fn tree_rows(timeline: &[TreeSnapshot]) -> Vec<TreeRow> {
    let mut rows = Vec::new();
    for snap in timeline {
        for &n in &snap.active {
            rows.push(TreeRow {
                time: snap.time,
                child: n,
                parent: snap.parent_of(n),
            });
        }
    }
    rows
}

pub fn write_tree(timeline: &[TreeSnapshot], path: &Path) -> Result<(), AnalysisError> {
    write_table(
        path,
        &TREE_HEADER,
        tree_rows(timeline).into_iter().map(|r| {
            vec![
                format_secs(r.time),
                r.child.to_string(),
                r.parent.map_or_else(String::new, |p| p.to_string()),
            ]
        }),
    )
}

pub fn read_tree(path: &Path) -> Result<Vec<TreeRow>, AnalysisError> {
    read_table(path, &TREE_HEADER)?
        .iter()
        .map(|r| {
            Ok(TreeRow {
                time: field(path, r, 0, parse_secs)?,
                child: field(path, r, 1, |s| s.parse().ok())?,
                parent: field(path, r, 2, |s| {
                    if s.is_empty() {
                        Some(None)
                    } else {
                        s.parse().ok().map(Some)
                    }
                })?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRow {
    pub time: Timestamp,
    pub node: NodeId,
    pub kind: String,
    pub detail: String,
}

const EVENTS_HEADER: [&str; 4] = ["true_time_s", "node_id", "kind", "detail"];

/// Every trace record except snapshots, which the error and tree tables
/// already cover.
pub fn event_rows(trace: &Trace) -> Vec<EventRow> {
    trace
        .records
        .iter()
        .filter(|r| !matches!(r.event, TraceEvent::Snapshot(_)))
        .map(|r| EventRow {
            time: r.time,
            node: r.node,
            kind: r.event.kind().to_string(),
            detail: r.event.detail(),
        })
        .collect()
}

pub fn write_events(trace: &Trace, path: &Path) -> Result<(), AnalysisError> {
    write_table(
        path,
        &EVENTS_HEADER,
        event_rows(trace)
            .into_iter()
            .map(|r| vec![format_secs(r.time), r.node.to_string(), r.kind, r.detail]),
    )
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>, AnalysisError> {
    read_table(path, &EVENTS_HEADER)?
        .iter()
        .map(|r| {
            Ok(EventRow {
                time: field(path, r, 0, parse_secs)?,
                node: field(path, r, 1, |s| s.parse().ok())?,
                kind: field(path, r, 2, |s| Some(s.to_string()))?,
                detail: field(path, r, 3, |s| Some(s.to_string()))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairingRow {
    pub master: NodeId,
    pub slave: NodeId,
    pub fups_rx: u64,
    pub fups_paired: u64,
    pub max_matches: usize,
}

const PAIRING_HEADER: [&str; 5] = ["master_id", "slave_id", "fups_rx", "fups_paired", "max_matches"];

pub fn pairing_rows(stats: &BTreeMap<(NodeId, NodeId), LinkPairing>) -> Vec<PairingRow> {
    stats
        .iter()
        .map(|(&(master, slave), l)| PairingRow {
            master,
            slave,
            fups_rx: l.fups_rx,
            fups_paired: l.fups_paired,
            max_matches: l.max_matches(),
        })
        .collect()
}

pub fn write_pairing(stats: &BTreeMap<(NodeId, NodeId), LinkPairing>, path: &Path) -> Result<(), AnalysisError> {
    write_table(
        path,
        &PAIRING_HEADER,
        pairing_rows(stats).into_iter().map(|r| {
            vec![
                r.master.to_string(),
                r.slave.to_string(),
                r.fups_rx.to_string(),
                r.fups_paired.to_string(),
                r.max_matches.to_string(),
            ]
        }),
    )
}

pub fn read_pairing(path: &Path) -> Result<Vec<PairingRow>, AnalysisError> {
    read_table(path, &PAIRING_HEADER)?
        .iter()
        .map(|r| {
            Ok(PairingRow {
                master: field(path, r, 0, |s| s.parse().ok())?,
                slave: field(path, r, 1, |s| s.parse().ok())?,
                fups_rx: field(path, r, 2, |s| s.parse().ok())?,
                fups_paired: field(path, r, 3, |s| s.parse().ok())?,
                max_matches: field(path, r, 4, |s| s.parse().ok())?,
            })
        })
        .collect()
}

/// Creates `dir` if needed and refuses to clobber existing outputs unless
/// `force` is set.
pub fn prepare_output_dir(dir: &Path, names: &[&str], force: bool) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(AnalysisError::WouldOverwrite(p.clone()));
        }
    }
    Ok(paths)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), AnalysisError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}
