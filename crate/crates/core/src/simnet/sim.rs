use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{NodeInfo, NodeSnapshot, Trace, TraceEvent, TraceMeta};
use crate::engine::{Action, Engine};
use crate::timebase::VirtualClock;
use crate::wire::{decode_fup, encode_fup, Beacon, NodeId, Timestamp, Tsf};

use super::loss::LossState;
use super::mobility::{self, MobilityAction};
use super::queue::{EventKind, EventQueue};
use super::scenario::Scenario;
use super::topology::{StaSpec, Topology};
use super::{deliver_beacon, deliver_fup, schedule_scenario, ConfigError, SimConfig};

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn engine_seed(seed: u64, id: NodeId, incarnation: u64) -> u64 {
    let mut v = [0u8; 8];
    v[2..].copy_from_slice(&id.0);
    mix(seed ^ mix(u64::from_be_bytes(v)) ^ mix(incarnation.wrapping_add(1)))
}

struct Station {
    spec: StaSpec,
    engine: Engine,
    clock: VirtualClock,
    active: bool,
    incarnation: u64,
}

/// A running scenario: topology, per-station engines and clocks, and the
/// trace being recorded.
pub struct Simulation {
    topology: Topology,
    loss: LossState,
    cfg: SimConfig,
    duration: Timestamp,
    seed: u64,
    stations: BTreeMap<NodeId, Station>,
    aps: BTreeMap<NodeId, crate::simnet::ApSpec>,
    jitter_rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    trace: Trace,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ConfigError> {
        scenario.validate()?;
        let mut stations = BTreeMap::new();
        let mut infos = Vec::new();
        for (i, spec) in scenario.topology.stas.iter().enumerate() {
            let station = Self::boot(spec, scenario.seed, 0, &scenario.sim)
                .map_err(|m| ConfigError::invalid(format!("stas[{i}]"), m))?;
            infos.push(NodeInfo {
                id: spec.id,
                kind: spec.role.kind,
                gc_capable: spec.role.gc_capable,
                q_local: spec.role.q_local,
                t_fup: spec.engine_config.t_fup,
            });
            stations.insert(spec.id, station);
        }
        infos.sort_by_key(|n| n.id);
        let jitter = (scenario.sim.jitter_sd_ns > 0.0)
            .then(|| Normal::new(0.0, scenario.sim.jitter_sd_ns).expect("validated sd"));
        Ok(Simulation {
            topology: scenario.topology.clone(),
            loss: scenario.loss.start(),
            cfg: scenario.sim.clone(),
            duration: scenario.duration,
            seed: scenario.seed,
            stations,
            aps: scenario.topology.aps.iter().map(|a| (a.id, a.clone())).collect(),
            jitter_rng: ChaCha8Rng::seed_from_u64(mix(scenario.seed ^ 0x6a69_7474)),
            jitter,
            trace: Trace::empty(TraceMeta {
                nodes: infos,
                snapshot_interval: scenario.sim.snapshot_interval,
                duration: scenario.duration,
            }),
        })
    }

    fn boot(spec: &StaSpec, seed: u64, incarnation: u64, sim: &SimConfig) -> Result<Station, String> {
        let mut cfg = spec.effective_config();
        cfg.disable_sq_gate |= sim.debug_disable_sq_gate;
        let engine =
            Engine::new(spec.id, spec.role, cfg, engine_seed(seed, spec.id, incarnation)).map_err(|e| e.to_string())?;
        let clock = VirtualClock::new(spec.freq_error_ppm)
            .map_err(|e| e.to_string())?
            .with_initial_offset(spec.initial_offset);
        Ok(Station {
            spec: spec.clone(),
            engine,
            clock,
            active: true,
            incarnation,
        })
    }

    /// Local clock reading with receive-timestamp noise.
    fn stamp(&mut self, sta: NodeId, now: Timestamp) -> Timestamp {
        let noise = match &self.jitter {
            Some(d) => Timestamp(d.sample(&mut self.jitter_rng).round() as i64),
            None => Timestamp::ZERO,
        };
        self.read(sta, now) + noise
    }

    fn read(&mut self, sta: NodeId, now: Timestamp) -> Timestamp {
        self.stations
            .get_mut(&sta)
            .expect("known station")
            .clock
            .read(now)
            .expect("events are processed in time order")
    }

    fn is_active(&self, sta: NodeId) -> bool {
        self.stations.get(&sta).is_some_and(|s| s.active)
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Processes every queued event in order and returns the trace.
    pub fn run(mut self, mut queue: EventQueue) -> Trace {
        while let Some(ev) = queue.pop() {
            let now = ev.time;
            match ev.kind {
                EventKind::Mobility(action) => self.on_mobility(now, action),
                EventKind::Beacon => self.on_beacon_emitted(now, ev.node, &mut queue),
                EventKind::BeaconArrival { ap, tsf } => self.on_beacon_received(now, ev.node, ap, tsf),
                EventKind::FupArrival { sender, bytes } => self.on_fup_arrival(now, ev.node, sender, &bytes),
                EventKind::Tick => {
                    self.on_tick(now, ev.node, &mut queue);
                    let next = now + self.cfg.tick_interval;
                    if next < self.duration {
                        queue.push(next, ev.node, EventKind::Tick);
                    }
                }
                EventKind::Snapshot => {
                    self.on_snapshot(now);
                    let next = now + self.cfg.snapshot_interval;
                    if next <= self.duration {
                        queue.push(next, ev.node, EventKind::Snapshot);
                    }
                }
            }
        }
        self.trace
    }

    fn on_mobility(&mut self, now: Timestamp, action: MobilityAction) {
        let sta = action.sta();
        match action {
            MobilityAction::NodeDown(_) => {
                if let Some(s) = self.stations.get_mut(&sta) {
                    s.active = false;
                }
                self.trace.push(now, sta, TraceEvent::NodeDown);
            }
            MobilityAction::NodeUp(_) => {
                let Some(s) = self.stations.get(&sta) else { return };
                if s.active {
                    return;
                }
                let incarnation = s.incarnation + 1;
                let fresh = Self::boot(&s.spec, self.seed, incarnation, &self.cfg).expect("spec validated at start");
                let s = self.stations.get_mut(&sta).expect("known station");
                s.engine = fresh.engine;
                s.engine.rejoin(s.clock.local_at(now));
                s.incarnation = incarnation;
                s.active = true;
                self.trace.push(now, sta, TraceEvent::NodeUp);
            }
            _ => {
                if mobility::apply(&mut self.topology, &action).is_err() {
                    return;
                }
                match action {
                    MobilityAction::Add { ap, .. } => {
                        self.trace.push(now, sta, TraceEvent::Hearability { ap, added: true })
                    }
                    MobilityAction::Remove { ap, reassociate, .. } => {
                        self.trace.push(now, sta, TraceEvent::Hearability { ap, added: false });
                        if let Some(new_ap) = reassociate {
                            self.trace.push(now, sta, TraceEvent::Reassociated(new_ap));
                        }
                    }
                    MobilityAction::Reassociate { ap, .. } => self.trace.push(now, sta, TraceEvent::Reassociated(ap)),
                    _ => {}
                }
            }
        }
    }

    fn on_beacon_emitted(&mut self, now: Timestamp, ap: NodeId, queue: &mut EventQueue) {
        let tsf = self.aps[&ap].tsf_at(now);
        let stations = &self.stations;
        let d = deliver_beacon(ap, now, &self.topology, &mut self.loss, |s| {
            stations.get(&s).is_some_and(|x| x.active)
        });
        let c = &mut self.trace.messages.beacons;
        c.emitted += 1;
        c.attempts += (d.received.len() + d.dropped.len()) as u64;
        c.dropped += d.dropped.len() as u64;
        c.delivered += d.received.len() as u64;
        for (sta, arrival) in d.received {
            if arrival == now {
                self.on_beacon_received(now, sta, ap, tsf);
            } else {
                queue.push(arrival, sta, EventKind::BeaconArrival { ap, tsf });
            }
        }
    }

    fn on_beacon_received(&mut self, now: Timestamp, sta: NodeId, ap: NodeId, tsf: Tsf) {
        if !self.is_active(sta) {
            return;
        }
        let t = self.stamp(sta, now);
        let s = self.stations.get_mut(&sta).expect("known station");
        s.engine.on_beacon(Beacon { ap, tsf }, t);
    }

    fn on_fup_arrival(&mut self, now: Timestamp, sta: NodeId, sender: NodeId, bytes: &[u8]) {
        if !self.is_active(sta) {
            return;
        }
        let Ok(msg) = decode_fup(bytes) else { return };
        let tau = self.read(sta, now);
        let s = self.stations.get_mut(&sta).expect("known station");
        let actions = s.engine.on_fup(&msg, tau);
        self.trace.push(
            now,
            sta,
            TraceEvent::FupDelivered {
                from: sender,
                seq: msg.seq,
            },
        );
        self.apply_actions(now, sta, actions);
    }

    fn on_tick(&mut self, now: Timestamp, sta: NodeId, queue: &mut EventQueue) {
        if !self.is_active(sta) {
            return;
        }
        let local = self.read(sta, now);
        let s = self.stations.get_mut(&sta).expect("known station");
        let out = s.engine.tick(local);
        self.apply_actions(now, sta, out.actions);
        for msg in out.fups {
            let Ok(bytes) = encode_fup(&msg) else { continue };
            self.trace.push(
                now,
                sta,
                TraceEvent::FupSent {
                    seq: msg.seq,
                    records: msg.records.len(),
                },
            );
            let stations = &self.stations;
            let d = match deliver_fup(
                sta,
                now,
                &self.topology,
                &mut self.loss,
                self.cfg.backbone_latency,
                |s| stations.get(&s).is_some_and(|x| x.active),
            ) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let c = &mut self.trace.messages.fups;
            c.emitted += 1;
            c.attempts += (d.received.len() + d.dropped.len()) as u64;
            c.dropped += d.dropped.len() as u64;
            c.delivered += d.received.len() as u64;
            for rx in d.dropped {
                self.trace.push(
                    now,
                    rx,
                    TraceEvent::FupDropped {
                        from: sta,
                        seq: msg.seq,
                    },
                );
            }
            let bytes = Arc::new(bytes);
            for (rx, arrival) in d.received {
                queue.push(
                    arrival,
                    rx,
                    EventKind::FupArrival {
                        sender: sta,
                        bytes: Arc::clone(&bytes),
                    },
                );
            }
        }
    }

    fn apply_actions(&mut self, now: Timestamp, sta: NodeId, actions: Vec<Action>) {
        let s = self.stations.get_mut(&sta).expect("known station");
        for a in actions {
            let ev = match a {
                Action::AdjustOffset(o) => {
                    s.clock.apply_offset(o);
                    TraceEvent::OffsetStep(o)
                }
                Action::AdjustRate(r) => {
                    let _ = s.clock.apply_rate(r, now);
                    TraceEvent::RateAdjust(r)
                }
                Action::ParentChanged { old, new } => TraceEvent::ParentChanged { old, new },
                Action::QrefChanged(q) => TraceEvent::QrefChanged(q),
                Action::Paired { master, matches } => TraceEvent::Paired { master, matches },
                Action::EntryExpired(id) => TraceEvent::EntryExpired(id),
                Action::BecameGrandmaster => TraceEvent::BecameGrandmaster,
                Action::Ignored { from, reason } => TraceEvent::Ignored { from, reason },
            };
            self.trace.push(now, sta, ev);
        }
    }

    fn on_snapshot(&mut self, now: Timestamp) {
        for (id, s) in &self.stations {
            let snap = NodeSnapshot {
                local: s.clock.local_at(now),
                parent: s.engine.parent(),
                q_ref: s.engine.q_ref(),
                acting_gc: s.engine.is_acting_gc(),
                active: s.active,
            };
            self.trace.push(now, *id, TraceEvent::Snapshot(snap));
        }
    }
}

/// Validates, schedules and runs a scenario.
pub fn simulate(scenario: &Scenario) -> Result<Trace, ConfigError> {
    let sim = Simulation::new(scenario)?;
    let queue = schedule_scenario(
        &scenario.topology,
        &scenario.mobility,
        scenario.duration,
        scenario.seed,
        &scenario.sim,
    )?;
    Ok(sim.run(queue))
}
