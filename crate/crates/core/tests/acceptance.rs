//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use domino::analysis::{
    error_series, export, export_run, extract_tree, find_cycles, mean_abs_error_by_node, pairing_stats, series_by_node,
    settle_time, settle_window, Trace, TraceEvent,
};
use domino::engine::{
    estimate_link_error, pair, update_mean_intertime, Action, ClockQualityEntry, Engine, EngineConfig, LinkError,
    NodeRole,
};
use domino::simnet::{simulate, MobilityAction, MobilityEvent, Scenario};
use domino::wire::{Beacon, BeaconRecord, ClockQuality, FupMessage, NodeId, Timestamp, Tsf};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario_file(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn secs(t: Timestamp) -> f64 {
    t.as_secs_f64()
}

fn formula_fidelity() -> Outcome {
    let entry = |e: i64, t_bar: Option<i64>| ClockQualityEntry {
        mean_intertime: t_bar.map(Timestamp),
        ..ClockQualityEntry::new(sta(1), LinkError::Finite(e), Timestamp::ZERO, ClockQuality::INFINITE)
    };
    let cfg = EngineConfig::default();
    let step = |prev: Option<i64>, dt: i64| {
        let mut e = entry(0, prev);
        update_mean_intertime(&mut e, Timestamp(dt), &cfg).unwrap();
        e.mean_intertime
    };
    let cases: [(&str, Option<i64>, Option<i64>); 6] = [
        (
            "link error e=0 ef=10ppm T=2s",
            fin(estimate_link_error(&entry(0, Some(2 * S)), 10.0)),
            Some(10 * US),
        ),
        (
            "link error e=5us ef=20ppm T=4s",
            fin(estimate_link_error(&entry(5 * US, Some(4 * S)), 20.0)),
            Some(45 * US),
        ),
        (
            "link error undefined intertime",
            fin(estimate_link_error(&entry(0, None), 10.0)),
            None,
        ),
        ("first interval 2s", step(None, 2 * S).map(|t| t.0), Some(5 * S)),
        ("ema fixed point", step(Some(2 * S), 2 * S).map(|t| t.0), Some(2 * S)),
        (
            "ema 4s after 2s",
            step(Some(2 * S), 4 * S).map(|t| t.0),
            Some(2_250 * MS),
        ),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(n, got, want)| format!("{n}: {got:?} != {want:?}"))
        .collect();
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} exact values", cases.len())
        } else {
            bad.join("; ")
        },
    )
}

fn fin(e: LinkError) -> Option<i64> {
    match e {
        LinkError::Finite(v) => Some(v),
        LinkError::Infinite => None,
    }
}

fn pairing_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut total = 0;
    for i in 0..1000 {
        let rec = |rng: &mut ChaCha8Rng| BeaconRecord {
            ap: ap(rng.gen_range(1..=3)),
            tsf: Tsf(rng.gen_range(0..12)),
            t: Timestamp(rng.gen_range(0..1_000_000)),
        };
        let nr = rng.gen_range(0..=32);
        let nl = rng.gen_range(0..=32);
        let remote: Vec<_> = (0..nr).map(|_| rec(&mut rng)).collect();
        let local: Vec<_> = (0..nl).map(|_| rec(&mut rng)).collect();
        let got = pair(&remote, &local);
        if got.windows(2).any(|w| w[0].local.t > w[1].local.t) {
            return Err(format!("instance {i}: not ascending by local arrival"));
        }
        let key = |r: &BeaconRecord, l: &BeaconRecord| (r.ap, r.tsf, r.t, l.ap, l.tsf, l.t);
        let mut want = Vec::new();
        for r in &remote {
            for l in &local {
                if r.ap == l.ap && r.tsf == l.tsf {
                    want.push(key(r, l));
                }
            }
        }
        let mut have: Vec<_> = got.iter().map(|m| key(&m.remote, &m.local)).collect();
        want.sort();
        have.sort();
        if have != want {
            return Err(format!("instance {i}: {} matches, oracle {}", have.len(), want.len()));
        }
        total += want.len();
    }
    Ok(format!("1000 instances, {total} matches"))
}

fn sample_tree() -> Outcome {
    let trace = simulate(&scenario_file("sample.toml")).map_err(|e| e.to_string())?;
    let end = trace.meta.duration;
    let settled = settle_time(&trace).ok_or("never settled")?;
    let tree = extract_tree(&trace, end).map_err(|e| e.to_string())?;
    let cycles = find_cycles(&trace);
    let unreachable: Vec<String> = trace
        .meta
        .nodes
        .iter()
        .filter(|n| tree.root_of(n.id) != m(1))
        .map(|n| n.id.to_string())
        .collect();
    let s3_path = tree.path_to_root(s(3));
    let ok = tree.is_single_tree()
        && tree.root == Some(m(1))
        && unreachable.is_empty()
        && cycles.is_empty()
        && tree.parent_of(s(3)) != Some(m(1))
        && s3_path.contains(&m(2));
    let path: Vec<String> = s3_path.iter().map(|n| n.to_string()).collect();
    check(
        ok,
        format!(
            "root {}, settled {:.1} s, {} unreachable, {} loops, S3 path {}",
            tree.root.map_or("none".to_string(), |r| r.to_string()),
            secs(settled),
            unreachable.len(),
            cycles.len(),
            path.join(" -> ")
        ),
    )
}

fn sawtooth() -> Outcome {
    let cfg = EngineConfig {
        rate_correction: false,
        ..EngineConfig::default()
    };
    let mut sc = Net::with_config(cfg)
        .aps(&[ap(1)])
        .gc(sta(1), 0, &[ap(1)])
        .slave(sta(2), &[ap(1)])
        .ppm(sta(2), 10.0)
        .scenario(120, 21);
    sc.loss.wireless_loss_prob = 0.0;
    let trace = simulate(&sc).map_err(|e| e.to_string())?;
    let settled = settle_time(&trace).ok_or("never settled")?;
    let series = series_by_node(&error_series(&trace))
        .remove(&sta(2))
        .ok_or("no samples")?;
    let post: Vec<(Timestamp, i64)> = series.into_iter().filter(|(t, _)| *t >= settled).collect();
    let max = post.iter().map(|(_, e)| e.abs()).max().unwrap_or(0);
    let steps: Vec<Timestamp> = trace
        .events_of(sta(2))
        .filter(|r| matches!(r.event, TraceEvent::OffsetStep(_)) && r.time > settled)
        .map(|r| r.time)
        .collect();
    // across every correction the error drops; between corrections it only grows
    let mut resets = 0;
    let mut rising = true;
    for w in steps.windows(2) {
        let seg: Vec<i64> = post
            .iter()
            .filter(|(t, _)| *t > w[0] && *t < w[1])
            .map(|(_, e)| e.abs())
            .collect();
        rising &= seg.windows(2).all(|p| p[1] + 200 >= p[0]);
        let before = post.iter().rev().find(|(t, _)| *t < w[1]).map(|(_, e)| e.abs());
        let after = post.iter().find(|(t, _)| *t > w[1]).map(|(_, e)| e.abs());
        if let (Some(b), Some(a)) = (before, after) {
            if a * 2 < b {
                resets += 1;
            }
        }
    }
    let ok = (10 * US..=40 * US).contains(&max) && rising && steps.len() >= 20 && resets + 1 == steps.len();
    check(
        ok,
        format!(
            "max |err| {:.1} us in [10, 40], {} corrections, {} resets, rising between: {rising}",
            max as f64 / 1e3,
            steps.len(),
            resets
        ),
    )
}

fn hop_growth() -> Outcome {
    let cfg = EngineConfig {
        rate_correction: false,
        ..EngineConfig::default()
    };
    let hops = [sta(2), sta(3), sta(4), sta(5)];
    let mut net = Net::with_config(cfg)
        .aps(&[ap(1), ap(2), ap(3), ap(4)])
        .gc(sta(1), 0, &[ap(1)])
        .boundary(sta(2), &[ap(1), ap(2)])
        .boundary(sta(3), &[ap(2), ap(3)])
        .boundary(sta(4), &[ap(3), ap(4)])
        .slave(sta(5), &[ap(4)]);
    for h in hops {
        net = net.ppm(h, 10.0);
    }
    let mut sc = net.scenario(120, 5);
    sc.sim.jitter_sd_ns = 0.0;
    sc.loss.wireless_loss_prob = 0.0;
    let trace = simulate(&sc).map_err(|e| e.to_string())?;
    let tree = extract_tree(&trace, trace.meta.duration).map_err(|e| e.to_string())?;
    let depth: Vec<usize> = hops.iter().map(|&h| tree.hops(h)).collect();
    let from = settle_time(&trace).ok_or("never settled")?;
    let means = mean_abs_error_by_node(&trace, from);
    let m: Vec<f64> = hops.iter().map(|h| means[h]).collect();
    let ok = depth == [1, 2, 3, 4] && m.windows(2).all(|w| w[0] < w[1]);
    let shown: Vec<String> = m.iter().map(|v| format!("{:.2}", v / 1e3)).collect();
    check(ok, format!("hops {depth:?}, mean |err| us {}", shown.join(" < ")))
}

fn pairing_under_loss() -> Outcome {
    let p = 0.5;
    let k = 8;
    let cfg = EngineConfig {
        fup_records_max: k,
        fresh_records_only: true,
        fup_jitter_frac: 0.0,
        t_fup: DEFAULT_T_B * 8,
        ..EngineConfig::default()
    };
    let mut net = Net::with_config(cfg).aps(&[ap(1)]).gc(sta(1), 0, &[ap(1)]);
    for n in 1..=4 {
        net = net.slave(s(n), &[ap(1)]);
    }
    let mut sc = net.scenario(500, 17);
    sc.sim.jitter_sd_ns = 0.0;
    sc.loss.wireless_loss_prob = 0.0;
    sc.loss.beacon_loss_prob = Some(p);
    sc.loss.fup_loss_prob = Some(0.0);
    let trace = simulate(&sc).map_err(|e| e.to_string())?;
    let stats = pairing_stats(&trace);
    let (rx, ok): (u64, u64) = stats
        .iter()
        .filter(|((master, _), _)| *master == sta(1))
        .fold((0, 0), |(a, b), (_, l)| (a + l.fups_rx, b + l.fups_paired));
    let expected = 1.0 - (1.0 - (1.0 - p) * (1.0 - p)).powi(k as i32);
    let measured = ok as f64 / rx.max(1) as f64;
    let sigma = (expected * (1.0 - expected) / rx.max(1) as f64).sqrt();
    check(
        rx >= 2000 && (measured - expected).abs() <= 3.0 * sigma,
        format!(
            "{measured:.4} vs {expected:.4} over {rx} FUPs (3 sigma = {:.4})",
            3.0 * sigma
        ),
    )
}

const DEFAULT_T_B: Timestamp = domino::simnet::DEFAULT_BEACON_PERIOD;

fn failover() -> Outcome {
    let sc = scenario_file("failover.toml");
    let (g1, g2) = (sta(1), sta(2));
    let down = Timestamp::from_secs(100);
    let up = Timestamp::from_secs(250);
    let trace = simulate(&sc).map_err(|e| e.to_string())?;
    let q1 = trace.meta.node(g1).ok_or("no G1")?.q_local;
    let q2 = trace.meta.node(g2).ok_or("no G2")?.q_local;
    let t_pcl = sc.topology.stas[0].engine_config.t_pcl;
    let bound = t_pcl + settle_window(&trace);

    let rooted = |t: Timestamp, root: NodeId, q: ClockQuality| -> bool {
        let Ok(tree) = extract_tree(&trace, t) else {
            return false;
        };
        let snap = trace.snapshots().into_iter().find(|(st, _)| *st == t);
        tree.root == Some(root)
            && snap.is_some_and(|(_, nodes)| nodes.iter().filter(|(_, n)| n.active).all(|(_, n)| n.q_ref == q))
    };
    let times: Vec<Timestamp> = trace.snapshots().into_iter().map(|(t, _)| t).collect();
    let first = |from: Timestamp, to: Timestamp, root, q| {
        let mut first = None;
        for &t in times.iter().filter(|t| **t >= from && **t < to) {
            if rooted(t, root, q) {
                first.get_or_insert(t);
            } else {
                first = None;
            }
        }
        first
    };
    let before = rooted(down - Timestamp::from_secs(1), g1, q1);
    let to_g2 = first(down, up, g2, q2);
    let back = first(up, trace.meta.duration + Timestamp::from_millis(1), g1, q1);
    let ok = before && to_g2.is_some_and(|t| t <= down + bound) && back.is_some_and(|t| t <= up + bound);
    let fmt = |t: Option<Timestamp>, base: Timestamp| t.map_or("never".into(), |t| format!("+{:.1} s", secs(t - base)));
    check(
        ok,
        format!(
            "G2 root and reference {} after G1 left, G1 again {} after return (bound {:.0} s)",
            fmt(to_g2, down),
            fmt(back, up),
            secs(bound)
        ),
    )
}

/// Random hearability changes, reassociations and power cycles over twelve
/// stations; every script is valid by construction.
fn churn_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aps: Vec<NodeId> = (1..=4).map(ap).collect();
    let mut net = Net::new().aps(&aps);
    let mut hears: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut stas = Vec::new();
    for n in 1..=12u64 {
        let id = sta(n);
        let count = rng.gen_range(1..=3);
        let mut set: Vec<NodeId> = aps.choose_multiple(&mut rng, count).copied().collect();
        set.sort();
        net = match n {
            1..=3 => net.gc(id, (n * 5) as u8, &set),
            4..=8 => net.boundary(id, &set),
            _ => net.slave(id, &set),
        };
        net = net.ppm(id, rng.gen_range(-20.0..20.0));
        hears.insert(id, set.into_iter().collect());
        stas.push(id);
    }
    let mut assoc: BTreeMap<NodeId, NodeId> = net.topo.association.clone();
    let mut down: BTreeSet<NodeId> = BTreeSet::new();
    let mut events = Vec::new();
    let mut t = Timestamp::from_secs(5);
    for _ in 0..rng.gen_range(10..30) {
        t += Timestamp::from_millis(rng.gen_range(100..4_000));
        let id = *stas.choose(&mut rng).unwrap();
        let heard = hears[&id].clone();
        let action = match rng.gen_range(0..5) {
            0 => {
                let Some(&a) = aps.iter().find(|a| !heard.contains(a)) else {
                    continue;
                };
                hears.get_mut(&id).unwrap().insert(a);
                MobilityAction::Add { ap: a, sta: id }
            }
            1 if heard.len() > 1 => {
                let a = *heard.iter().collect::<Vec<_>>().choose(&mut rng).unwrap();
                let reassociate = (assoc[&id] == *a).then(|| *heard.iter().find(|x| *x != a).unwrap());
                if let Some(r) = reassociate {
                    assoc.insert(id, r);
                }
                hears.get_mut(&id).unwrap().remove(a);
                MobilityAction::Remove {
                    ap: *a,
                    sta: id,
                    reassociate,
                }
            }
            2 if heard.len() > 1 => {
                let a = *heard.iter().find(|x| **x != assoc[&id]).unwrap();
                assoc.insert(id, a);
                MobilityAction::Reassociate { sta: id, ap: a }
            }
            3 | 4 => {
                if down.remove(&id) {
                    MobilityAction::NodeUp(id)
                } else {
                    down.insert(id);
                    MobilityAction::NodeDown(id)
                }
            }
            _ => continue,
        };
        events.push(MobilityEvent { time: t, action });
    }
    let mut sc = net.scenario(60, seed);
    sc.mobility.events = events;
    sc.loss.wireless_loss_prob = 0.1;
    sc
}

fn loop_freedom() -> Outcome {
    let results: Vec<(u64, usize, usize)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let sc = churn_scenario(seed);
            let events = sc.mobility.events.len();
            let loops = simulate(&sc).map(|t| find_cycles(&t).len()).unwrap_or(usize::MAX);
            (seed, events, loops)
        })
        .collect();
    let bad: Vec<String> = results
        .iter()
        .filter(|(_, _, l)| *l > 0)
        .map(|(s, _, l)| format!("seed {s}: {l}"))
        .collect();
    let events: usize = results.iter().map(|r| r.1).sum();
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("100 scripts, {events} mobility events, no loop at any snapshot")
        } else {
            bad.join("; ")
        },
    )
}

/// Two masters with the same source quality feed one slave; their advertised
/// errors swap every round. Returns parent changes after the first adoption.
fn scripted_flapping(cfg: EngineConfig, low: i64, high: i64) -> usize {
    let q = quality(0, sta(9));
    let (a, b) = (sta(1), sta(2));
    let mut slave = Engine::new(s(1), NodeRole::slave_only(), cfg, 3).unwrap();
    let mut changes = 0usize;
    for k in 0..60u64 {
        let t = Timestamp::from_secs(2 * k as i64 + 1);
        slave.on_beacon(Beacon { ap: ap(1), tsf: Tsf(k) }, t);
        let rec = BeaconRecord {
            ap: ap(1),
            tsf: Tsf(k),
            t,
        };
        let (ea, eb) = if k % 2 == 0 { (high, low) } else { (low, high) };
        for (i, (sender, e)) in [(a, ea), (b, eb)].into_iter().enumerate() {
            let msg = FupMessage {
                sender,
                seq: k as u32,
                records: vec![rec],
                e,
                sq: q,
            };
            let actions = slave.on_fup(&msg, t + Timestamp::from_millis(10 + i as i64));
            changes += actions
                .iter()
                .filter(|x| matches!(x, Action::ParentChanged { .. }))
                .count();
        }
    }
    changes.saturating_sub(1)
}

fn hysteresis() -> Outcome {
    let gated = EngineConfig::default();
    let open = EngineConfig {
        disable_sq_gate: true,
        ..EngineConfig::default()
    };
    let (low, high) = (8 * US, 10 * US);
    let strict = scripted_flapping(gated, low, high);
    let inside = scripted_flapping(open.clone(), low, high);
    let outside = scripted_flapping(open, 2 * US, 10 * US);
    check(
        strict == 0 && inside == 0 && outside > 0,
        format!("changes after adoption: gate on {strict}, band only {inside}, outside band {outside}"),
    )
}

fn determinism() -> Outcome {
    let sc = scenario_file("failover.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let trace: Trace = simulate(&sc).map_err(|e| e.to_string())?;
        let out = dir.path().join(run);
        export_run(&trace, &out, false).map_err(|e| e.to_string())?;
        outputs.push(out);
    }
    let mut bytes = 0;
    for f in export::OUTPUT_FILES {
        let a = std::fs::read(outputs[0].join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outputs[1].join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs"));
        }
        bytes += a.len();
    }
    Ok(format!("{} files, {bytes} bytes identical", export::OUTPUT_FILES.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "formula fidelity", Duration::from_secs(1), formula_fidelity),
        (2, "pairing oracle equivalence", Duration::from_secs(5), pairing_oracle),
        (3, "sample topology tree", Duration::from_secs(10), sample_tree),
        (4, "sawtooth skew bound", Duration::from_secs(5), sawtooth),
        (5, "error growth per hop", Duration::from_secs(10), hop_growth),
        (
            6,
            "pairing success under loss",
            Duration::from_secs(20),
            pairing_under_loss,
        ),
        (7, "grandmaster failover", Duration::from_secs(15), failover),
        (8, "loop freedom under churn", Duration::from_secs(60), loop_freedom),
        (9, "hysteresis anti-flapping", Duration::from_secs(5), hysteresis),
        (10, "determinism", Duration::from_secs(10), determinism),
    ];
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {} s budget", limit.as_secs())),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} [{n}] {name}: {detail} ({:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
