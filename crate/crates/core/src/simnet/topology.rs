use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{EngineConfig, NodeKind, NodeRole};
use crate::timebase::VirtualClock;
use crate::wire::{NodeId, Timestamp, Tsf};

use super::ConfigError;

pub const DEFAULT_BEACON_PERIOD: Timestamp = Timestamp::from_micros(102_400);

#[derive(Debug, Clone, PartialEq)]
pub struct ApSpec {
    pub id: NodeId,
    pub beacon_period: Timestamp,
    pub tsf_start: Tsf,
    /// Emission time of the first beacon.
    pub beacon_phase: Timestamp,
}

impl ApSpec {
    pub fn new(id: NodeId) -> Self {
        ApSpec {
            id,
            beacon_period: DEFAULT_BEACON_PERIOD,
            tsf_start: Tsf(0),
            beacon_phase: Timestamp::ZERO,
        }
    }

    /// TSF carried by a beacon emitted at true time `t`.
    pub fn tsf_at(&self, t: Timestamp) -> Tsf {
        let us = (t.as_nanos() / 1_000).max(0) as u64;
        Tsf(self.tsf_start.0.wrapping_add(us))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub freq_error_ppm: f64,
    /// Error advertised while acting as grandmaster; only for gc-capable roles.
    pub gc_error_ns: Option<i64>,
    /// Clock reading at true time zero.
    pub initial_offset: Timestamp,
    pub engine_config: EngineConfig,
}

impl StaSpec {
    pub fn new(id: NodeId, role: NodeRole) -> Self {
        StaSpec {
            id,
            role,
            freq_error_ppm: 0.0,
            gc_error_ns: None,
            initial_offset: Timestamp::ZERO,
            engine_config: EngineConfig::default(),
        }
    }

    /// Engine configuration with the grandmaster error folded in.
    pub fn effective_config(&self) -> EngineConfig {
        let mut cfg = self.engine_config.clone();
        if let Some(e) = self.gc_error_ns {
            cfg.gc_error = Timestamp::from_nanos(e);
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub aps: Vec<ApSpec>,
    pub stas: Vec<StaSpec>,
    /// STA to the AP it is associated with.
    pub association: BTreeMap<NodeId, NodeId>,
    /// (AP, STA) pairs where the STA hears the AP's beacons.
    pub hearability: BTreeSet<(NodeId, NodeId)>,
    /// Per-pair propagation delay; absent pairs use zero.
    pub propagation_delay: BTreeMap<(NodeId, NodeId), Timestamp>,
}

impl Topology {
    pub fn ap(&self, id: NodeId) -> Option<&ApSpec> {
        self.aps.iter().find(|a| a.id == id)
    }

    pub fn sta(&self, id: NodeId) -> Option<&StaSpec> {
        self.stas.iter().find(|s| s.id == id)
    }

    pub fn hears(&self, ap: NodeId, sta: NodeId) -> bool {
        self.hearability.contains(&(ap, sta))
    }

    /// Convenience for building topologies in code: registers the pair as
    /// hearable too.
    pub fn associate(&mut self, sta: NodeId, ap: NodeId) {
        self.hearability.insert((ap, sta));
        self.association.insert(sta, ap);
    }

    pub fn hearers(&self, ap: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.hearability
            .range((ap, NodeId([0; 6]))..=(ap, NodeId::BROADCAST))
            .map(|&(_, sta)| sta)
    }

    pub fn delay(&self, ap: NodeId, sta: NodeId) -> Timestamp {
        self.propagation_delay
            .get(&(ap, sta))
            .copied()
            .unwrap_or(Timestamp::ZERO)
    }

    pub fn max_beacon_period(&self) -> Timestamp {
        self.aps
            .iter()
            .map(|a| a.beacon_period)
            .max()
            .unwrap_or(Timestamp::ZERO)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (i, ap) in self.aps.iter().enumerate() {
            if !seen.insert(ap.id) {
                return Err(ConfigError::invalid(
                    format!("aps[{i}].id"),
                    format!("duplicate id {}", ap.id),
                ));
            }
            if ap.beacon_period <= Timestamp::ZERO {
                return Err(ConfigError::invalid(
                    format!("aps[{i}].beacon_period"),
                    "must be positive",
                ));
            }
        }
        let max_tb = self.max_beacon_period();
        for (i, sta) in self.stas.iter().enumerate() {
            if !seen.insert(sta.id) {
                return Err(ConfigError::invalid(
                    format!("stas[{i}].id"),
                    format!("duplicate id {}", sta.id),
                ));
            }
            sta.role
                .validate()
                .map_err(|e| ConfigError::invalid(format!("stas[{i}]"), e.to_string()))?;
            VirtualClock::new(sta.freq_error_ppm)
                .map_err(|e| ConfigError::invalid(format!("stas[{i}].freq_error_ppm"), e.to_string()))?;
            if sta.gc_error_ns.is_some() && !sta.role.gc_capable {
                return Err(ConfigError::invalid(
                    format!("stas[{i}].gc_error_ns"),
                    "only grandmaster-capable stations carry a grandmaster error",
                ));
            }
            if sta.gc_error_ns.is_some_and(|e| e < 0) {
                return Err(ConfigError::invalid(
                    format!("stas[{i}].gc_error_ns"),
                    "must be non-negative",
                ));
            }
            let cfg = sta.effective_config();
            cfg.validate()
                .map_err(|e| ConfigError::invalid(format!("stas[{i}].engine"), e.to_string()))?;
            if sta.role.kind == NodeKind::Ffts && !self.aps.is_empty() {
                cfg.validate_beacon_period(max_tb)
                    .map_err(|e| ConfigError::invalid(format!("stas[{i}].engine.t_fup"), e.to_string()))?;
            }
            match self.association.get(&sta.id) {
                None => {
                    return Err(ConfigError::invalid(
                        format!("association.{}", sta.id),
                        "station is not associated to any AP",
                    ))
                }
                Some(ap) if self.ap(*ap).is_none() => {
                    return Err(ConfigError::invalid(
                        format!("association.{}", sta.id),
                        format!("unknown AP {ap}"),
                    ))
                }
                Some(ap) if !self.hears(*ap, sta.id) => {
                    return Err(ConfigError::invalid(
                        format!("association.{}", sta.id),
                        format!("station cannot hear its AP {ap}"),
                    ))
                }
                Some(_) => {}
            }
        }
        for sta in self.association.keys() {
            if self.sta(*sta).is_none() {
                return Err(ConfigError::invalid(format!("association.{sta}"), "unknown station"));
            }
        }
        for (ap, sta) in &self.hearability {
            if self.ap(*ap).is_none() {
                return Err(ConfigError::invalid("hearability", format!("unknown AP {ap}")));
            }
            if self.sta(*sta).is_none() {
                return Err(ConfigError::invalid("hearability", format!("unknown station {sta}")));
            }
        }
        for ((ap, sta), d) in &self.propagation_delay {
            if !self.hears(*ap, *sta) {
                return Err(ConfigError::invalid(
                    "hearability",
                    format!("propagation delay for non-hearable pair {ap}/{sta}"),
                ));
            }
            if *d < Timestamp::ZERO {
                return Err(ConfigError::invalid(
                    "hearability.propagation_delay",
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }
}
