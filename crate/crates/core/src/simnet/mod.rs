//! Deterministic discrete-event simulation of an ESS: APs emitting beacons,
//! per-link loss, the wired backbone relaying FUPs, and station mobility.

mod loss;
mod mobility;
mod queue;
pub mod scenario;
mod sim;
mod topology;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use loss::{BurstModel, LossModel, LossState, MessageClass};
pub use mobility::{MobilityAction, MobilityEvent, MobilityScript};
pub use queue::{Event, EventKind, EventQueue};
pub use scenario::Scenario;
pub use sim::{simulate, Simulation};
pub use topology::{ApSpec, StaSpec, Topology, DEFAULT_BEACON_PERIOD};

use crate::wire::{NodeId, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Simulator knobs that are not part of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub snapshot_interval: Timestamp,
    pub tick_interval: Timestamp,
    /// Standard deviation of receive-timestamp noise.
    pub jitter_sd_ns: f64,
    /// Latency added by the wired relay to FUP broadcasts.
    pub backbone_latency: Timestamp,
    /// Test-only: every engine accepts FUPs regardless of source quality.
    pub debug_disable_sq_gate: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            snapshot_interval: Timestamp::from_millis(100),
            tick_interval: Timestamp::from_millis(10),
            jitter_sd_ns: 50.0,
            backbone_latency: Timestamp::from_millis(1),
            debug_disable_sq_gate: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.snapshot_interval <= Timestamp::ZERO {
            return Err(ConfigError::invalid("sim.snapshot_interval", "must be positive"));
        }
        if self.tick_interval <= Timestamp::ZERO {
            return Err(ConfigError::invalid("sim.tick_interval", "must be positive"));
        }
        if !(self.jitter_sd_ns >= 0.0 && self.jitter_sd_ns.is_finite()) {
            return Err(ConfigError::invalid(
                "sim.jitter_sd_ns",
                "must be finite and non-negative",
            ));
        }
        if self.backbone_latency < Timestamp::ZERO {
            return Err(ConfigError::invalid("sim.backbone_latency", "must be non-negative"));
        }
        Ok(())
    }
}

/// Builds the initial event queue: every beacon emission before `duration`,
/// mobility events, the first tick of each station (at a seeded phase inside
/// one tick interval) and the first snapshot. Ticks and snapshots reschedule
/// themselves while the simulation runs.
pub fn schedule_scenario(
    topology: &Topology,
    mobility: &MobilityScript,
    duration: Timestamp,
    seed: u64,
    sim: &SimConfig,
) -> Result<EventQueue, ConfigError> {
    topology.validate()?;
    mobility.validate(topology)?;
    sim.validate()?;
    if duration < Timestamp::ZERO {
        return Err(ConfigError::invalid("duration", "must be non-negative"));
    }
    let mut q = EventQueue::new();
    for ap in &topology.aps {
        let mut t = ap.beacon_phase;
        while t < duration {
            if t >= Timestamp::ZERO {
                q.push(t, ap.id, EventKind::Beacon);
            }
            t += ap.beacon_period;
        }
    }
    for ev in &mobility.events {
        if ev.time < duration {
            q.push(ev.time, ev.action.sta(), EventKind::Mobility(ev.action));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7469_636b);
    let mut ids: Vec<NodeId> = topology.stas.iter().map(|s| s.id).collect();
    ids.sort();
    for id in ids {
        let phase = Timestamp(rng.gen_range(0..sim.tick_interval.as_nanos()));
        if phase < duration {
            q.push(phase, id, EventKind::Tick);
        }
    }
    q.push(Timestamp::ZERO, NodeId([0; 6]), EventKind::Snapshot);
    Ok(q)
}

/// Outcome of one broadcast: who got it and when, and who missed it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delivery {
    pub received: Vec<(NodeId, Timestamp)>,
    pub dropped: Vec<NodeId>,
    /// FUP only: the first wireless leg failed, so nobody got it.
    pub uplink_lost: bool,
}

/// Beacon reception by every hearer of `ap` for which `listening` holds.
pub fn deliver_beacon(
    ap: NodeId,
    emission: Timestamp,
    topology: &Topology,
    loss: &mut LossState,
    listening: impl Fn(NodeId) -> bool,
) -> Delivery {
    let mut out = Delivery::default();
    for sta in topology.hearers(ap) {
        if !listening(sta) {
            continue;
        }
        if loss.drops(sta, MessageClass::Beacon) {
            out.dropped.push(sta);
        } else {
            out.received.push((sta, emission + topology.delay(ap, sta)));
        }
    }
    out
}

/// FUP broadcast: uplink to the sender's AP, lossless relay over the
/// backbone, then an independent downlink to every other listening STA.
/// A lost uplink counts as a drop for every intended receiver.
pub fn deliver_fup(
    sender: NodeId,
    send_time: Timestamp,
    topology: &Topology,
    loss: &mut LossState,
    backbone_latency: Timestamp,
    listening: impl Fn(NodeId) -> bool,
) -> Result<Delivery, ConfigError> {
    if !topology.association.contains_key(&sender) {
        return Err(ConfigError::invalid(
            format!("association.{sender}"),
            "FUP sender is not associated",
        ));
    }
    let receivers: Vec<NodeId> = topology
        .association
        .keys()
        .copied()
        .filter(|&s| s != sender && listening(s))
        .collect();
    let mut out = Delivery::default();
    if loss.drops(sender, MessageClass::Fup) {
        out.dropped = receivers;
        out.uplink_lost = true;
        return Ok(out);
    }
    let arrival = send_time + backbone_latency;
    for sta in receivers {
        if loss.drops(sta, MessageClass::Fup) {
            out.dropped.push(sta);
        } else {
            out.received.push((sta, arrival));
        }
    }
    Ok(out)
}
