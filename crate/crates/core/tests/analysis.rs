mod common;

use common::*;
use domino::analysis::export::{self, read_errors, read_events, read_pairing, read_tree};
use domino::analysis::*;
use domino::engine::NodeKind;
use domino::simnet::{simulate, Scenario};
use domino::wire::{NodeId, Timestamp};

fn pair(slave_ppm: f64, duration_s: i64) -> Scenario {
    let mut sc = Net::new()
        .aps(&[ap(1)])
        .gc(sta(1), 0, &[ap(1)])
        .slave(sta(2), &[ap(1)])
        .ppm(sta(2), slave_ppm)
        .scenario(duration_s, 4);
    sc.sim.jitter_sd_ns = 0.0;
    sc
}

#[test]
fn lone_grandmaster_is_a_root_without_edges() {
    let sc = Net::new().aps(&[ap(1)]).gc(sta(1), 0, &[ap(1)]).scenario(5, 0);
    let trace = simulate(&sc).unwrap();
    let tree = extract_tree(&trace, Timestamp::from_secs(5)).unwrap();
    assert!(tree.edges.is_empty());
    assert_eq!(tree.root, Some(sta(1)));
}

#[test]
fn grandmaster_error_is_zero() {
    let trace = simulate(&pair(10.0, 10)).unwrap();
    for k in 0..=100 {
        assert_eq!(sync_error(&trace, sta(1), Timestamp::from_millis(100 * k)).unwrap(), 0);
    }
}

#[test]
fn unknown_node_is_an_error() {
    let trace = simulate(&pair(0.0, 2)).unwrap();
    assert_eq!(
        sync_error(&trace, sta(77), Timestamp::ZERO),
        Err(AnalysisError::UnknownNode(sta(77)))
    );
}

/// No FUP ever arrives, so the slave free-runs: 10 ppm over 1 s is 10 us.
#[test]
fn free_running_error_is_drift() {
    let mut sc = pair(10.0, 3);
    sc.loss.fup_loss_prob = Some(1.0);
    let trace = simulate(&sc).unwrap();
    assert_eq!(sync_error(&trace, sta(2), Timestamp::from_secs(1)).unwrap(), 10_000);
    assert_eq!(
        sync_error(&trace, sta(2), Timestamp::from_millis(1_050)).unwrap(),
        10_500
    );
}

#[test]
fn convergence_examples() {
    let mut sc = pair(10.0, 40);
    for s in &mut sc.topology.stas {
        s.engine_config.fup_jitter_frac = 0.0;
    }
    sc.topology.stas[1].initial_offset = Timestamp::from_millis(3);
    let trace = simulate(&sc).unwrap();
    let t_f = Timestamp::from_secs(2);
    let conv = convergence_time(&trace, 5_000);
    assert_eq!(conv[&sta(1)], Some(Timestamp::ZERO));
    let c = conv[&sta(2)].expect("converges");
    assert!(c <= t_f * 2 + trace.meta.snapshot_interval * 2, "{c}");

    let mut lossy = pair(10.0, 40);
    lossy.loss.fup_loss_prob = Some(1.0);
    lossy.topology.stas[1].initial_offset = Timestamp::from_millis(3);
    let trace = simulate(&lossy).unwrap();
    assert_eq!(convergence_time(&trace, 5_000)[&sta(2)], None);
}

#[test]
fn pairing_rates_at_the_extremes() {
    let trace = simulate(&pair(0.0, 60)).unwrap();
    let stats = pairing_stats(&trace);
    let link = &stats[&(sta(1), sta(2))];
    assert!(link.fups_rx >= 25);
    assert_eq!(link.success_rate(), Some(1.0));

    // no beacon in common: every FUP arrives, none pairs
    let sc = Net::new()
        .aps(&[ap(1), ap(2)])
        .gc(sta(1), 0, &[ap(1)])
        .slave(sta(2), &[ap(2)])
        .scenario(60, 4);
    let trace = simulate(&sc).unwrap();
    let stats = pairing_stats(&trace);
    assert!(stats[&(sta(1), sta(2))].fups_rx >= 25);
    assert_eq!(pairing_success(&stats), Some(0.0));

    // every beacon lost: the grandmaster has nothing to report
    let mut sc = pair(0.0, 60);
    sc.loss.beacon_loss_prob = Some(1.0);
    let trace = simulate(&sc).unwrap();
    assert_eq!(trace.messages.fups.emitted, 0);
    assert_eq!(pairing_success(&pairing_stats(&trace)), None);
}

#[test]
fn chain_hops_and_roots() {
    let sc = Net::new()
        .aps(&[ap(1), ap(2), ap(3)])
        .gc(sta(1), 0, &[ap(1)])
        .boundary(sta(2), &[ap(1), ap(2)])
        .boundary(sta(3), &[ap(2), ap(3)])
        .slave(sta(4), &[ap(3)])
        .scenario(30, 2);
    let trace = simulate(&sc).unwrap();
    let tree = extract_tree(&trace, Timestamp::from_secs(30)).unwrap();
    assert_eq!(tree.hops(sta(4)), 3);
    assert_eq!(tree.path_to_root(sta(4)), vec![sta(4), sta(3), sta(2), sta(1)]);
    assert!(tree.is_single_tree());
    // before anyone pairs every station is its own root
    let early = extract_tree(&trace, Timestamp::ZERO).unwrap();
    assert_eq!(early.roots.len(), 4);
    assert_eq!(early.root, None);
}

fn synthetic(nodes: &[NodeId]) -> Trace {
    Trace::empty(TraceMeta {
        nodes: nodes
            .iter()
            .map(|&id| NodeInfo {
                id,
                kind: NodeKind::Ffts,
                gc_capable: false,
                q_local: domino::wire::ClockQuality::INFINITE,
                t_fup: Timestamp::from_secs(2),
            })
            .collect(),
        snapshot_interval: Timestamp::from_millis(100),
        duration: Timestamp::from_secs(1),
    })
}

#[test]
fn loops_are_reported() {
    let (a, b, c) = (sta(1), sta(2), sta(3));
    let mut t = synthetic(&[a, b, c]);
    let link = |t: &mut Trace, at: i64, child, parent| {
        t.push(
            Timestamp(at),
            child,
            TraceEvent::ParentChanged {
                old: None,
                new: Some(parent),
            },
        )
    };
    link(&mut t, 1, a, b);
    link(&mut t, 2, b, c);
    assert!(extract_tree(&t, Timestamp(2)).is_ok());
    link(&mut t, 3, c, a);
    match extract_tree(&t, Timestamp(3)) {
        Err(AnalysisError::Cycle { nodes, .. }) => {
            let mut n = nodes.clone();
            n.sort();
            assert_eq!(n, vec![a, b, c]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn settle_window_logic() {
    let w = Timestamp::from_secs(6);
    let changes = [Timestamp::from_secs(1), Timestamp::from_secs(10)];
    assert!(!is_settled_at(&changes, w, Timestamp::from_secs(5)));
    assert!(is_settled_at(&changes, w, Timestamp::from_secs(8)));
    assert!(!is_settled_at(&changes, w, Timestamp::from_secs(12)));
    assert!(is_settled_at(&changes, w, Timestamp::from_secs(16)));
}

#[test]
fn interpolation_between_snapshots() {
    let s = [(Timestamp(0), 0), (Timestamp(100), 1_000)];
    assert_eq!(interpolate(&s, Timestamp(25)), Some(250));
    assert_eq!(interpolate(&s, Timestamp(100)), Some(1_000));
    assert_eq!(interpolate(&s, Timestamp(101)), None);
}

#[test]
fn seconds_format_round_trips() {
    for ns in [0i64, 1, -1, 999_999_999, 1_000_000_000, -2_500_000_001, 123_456_789_012] {
        assert_eq!(
            export::parse_secs(&export::format_secs(Timestamp(ns))),
            Some(Timestamp(ns))
        );
    }
    assert_eq!(export::parse_secs("1.5"), Some(Timestamp(1_500_000_000)));
    assert_eq!(export::parse_secs("x"), None);
}

#[test]
fn empty_trace_exports_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let t = synthetic(&[]);
    export_run(&t, dir.path(), false).unwrap();
    for name in [
        export::ERRORS_CSV,
        export::TREE_CSV,
        export::EVENTS_CSV,
        export::PAIRING_CSV,
    ] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
}

#[test]
fn error_rows_match_snapshots_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Net::new().aps(&[ap(1)]).gc(sta(1), 0, &[ap(1)]).scenario(3, 0);
    let trace = simulate(&sc).unwrap();
    export_run(&trace, dir.path(), false).unwrap();
    let rows = read_errors(&dir.path().join(export::ERRORS_CSV)).unwrap();
    assert_eq!(rows.len(), trace.snapshots().len());
    assert_eq!(rows.len(), 31);
}

#[test]
fn all_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = sample().scenario(20, 6);
    sc.loss.wireless_loss_prob = 0.1;
    let trace = simulate(&sc).unwrap();
    export_run(&trace, dir.path(), false).unwrap();
    let p = |n| dir.path().join(n);
    assert_eq!(read_errors(&p(export::ERRORS_CSV)).unwrap(), error_series(&trace));
    assert_eq!(
        read_tree(&p(export::TREE_CSV)).unwrap(),
        export::tree_rows(&tree_timeline(&trace).unwrap())
    );
    assert_eq!(read_events(&p(export::EVENTS_CSV)).unwrap(), export::event_rows(&trace));
    assert_eq!(
        read_pairing(&p(export::PAIRING_CSV)).unwrap(),
        export::pairing_rows(&pairing_stats(&trace))
    );
}

#[test]
fn export_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let t = synthetic(&[]);
    export_run(&t, dir.path(), false).unwrap();
    assert!(matches!(
        export_run(&t, dir.path(), false),
        Err(AnalysisError::WouldOverwrite(_))
    ));
    export_run(&t, dir.path(), true).unwrap();
}

#[test]
fn export_reports_path_on_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = export_run(&synthetic(&[]), &blocker.join("sub"), false).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn summary_lists_every_node() {
    let trace = simulate(&sample().scenario(30, 1)).unwrap();
    let s = Summary::compute(&trace, DEFAULT_CONVERGENCE_THRESHOLD_NS);
    assert_eq!(s.nodes.len(), 10);
    assert_eq!(s.final_root, Some(m(1)));
    assert!(s.violations.is_empty());
    let text = s.render();
    assert!(text.contains("root: 020000000001"));
}
