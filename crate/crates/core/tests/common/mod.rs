#![allow(dead_code)]

use domino::engine::{EngineConfig, NodeKind, NodeRole};
use domino::simnet::{ApSpec, Scenario, StaSpec, Topology};
use domino::wire::{ClockQuality, NodeId, Timestamp};

pub const US: i64 = 1_000;
pub const MS: i64 = 1_000_000;
pub const S: i64 = 1_000_000_000;

pub fn ap(n: u64) -> NodeId {
    NodeId::from_u64(0x0a00_0000_0000 + n)
}

pub fn sta(n: u64) -> NodeId {
    NodeId::from_u64(0x0200_0000_0000 + n)
}

pub fn quality(priority1: u8, id: NodeId) -> ClockQuality {
    ClockQuality {
        priority1,
        clock_class: 6,
        accuracy: 32,
        variance: 100,
        priority2: 0,
        identity: id,
    }
}

/// Topology builder for tests; every station hears the APs listed and is
/// associated with the first one.
pub struct Net {
    pub topo: Topology,
    pub cfg: EngineConfig,
}

impl Net {
    pub fn new() -> Self {
        Net {
            topo: Topology::default(),
            cfg: EngineConfig::default(),
        }
    }

    pub fn with_config(cfg: EngineConfig) -> Self {
        Net {
            topo: Topology::default(),
            cfg,
        }
    }

    pub fn aps(mut self, ids: &[NodeId]) -> Self {
        for &id in ids {
            self.topo.aps.push(ApSpec::new(id));
        }
        self
    }

    fn station(mut self, id: NodeId, role: NodeRole, hears: &[NodeId], gc_error: Option<i64>) -> Self {
        let mut s = StaSpec::new(id, role);
        s.engine_config = self.cfg.clone();
        s.gc_error_ns = gc_error;
        self.topo.stas.push(s);
        for &a in hears {
            self.topo.hearability.insert((a, id));
        }
        self.topo.association.insert(id, hears[0]);
        self
    }

    pub fn gc(self, id: NodeId, priority1: u8, hears: &[NodeId]) -> Self {
        self.station(
            id,
            NodeRole::grandmaster_capable(quality(priority1, id)),
            hears,
            Some(0),
        )
    }

    pub fn boundary(self, id: NodeId, hears: &[NodeId]) -> Self {
        self.station(id, NodeRole::boundary(), hears, None)
    }

    pub fn slave(self, id: NodeId, hears: &[NodeId]) -> Self {
        self.station(id, NodeRole::slave_only(), hears, None)
    }

    pub fn ppm(mut self, id: NodeId, ppm: f64) -> Self {
        self.topo.stas.iter_mut().find(|s| s.id == id).unwrap().freq_error_ppm = ppm;
        self
    }

    pub fn config_of(mut self, id: NodeId, f: impl FnOnce(&mut EngineConfig)) -> Self {
        f(&mut self.topo.stas.iter_mut().find(|s| s.id == id).unwrap().engine_config);
        self
    }

    pub fn scenario(self, duration_s: i64, seed: u64) -> Scenario {
        Scenario::new(self.topo, Timestamp::from_secs(duration_s), seed)
    }
}

pub fn is_ffts(s: &StaSpec) -> bool {
    s.role.kind == NodeKind::Ffts
}

/// The sample network: five APs plus A7, six masters and four slave-only
/// stations. M1 has the best quality; M2..M6 can take over.
pub fn sample() -> Net {
    let (a1, a2, a3, a4, a5, a7) = (ap(1), ap(2), ap(3), ap(4), ap(5), ap(7));
    Net::new()
        .aps(&[a1, a2, a3, a4, a5, a7])
        .gc(m(1), 0, &[a1, a2, a3])
        .gc(m(2), 10, &[a4, a3, a5])
        .gc(m(3), 11, &[a5])
        .gc(m(4), 12, &[a4, a7])
        .gc(m(5), 13, &[a5, a7])
        .gc(m(6), 14, &[a7])
        .slave(s(1), &[a1])
        .slave(s(2), &[a3])
        .slave(s(3), &[a4])
        .slave(s(4), &[a7])
}

pub fn m(n: u64) -> NodeId {
    NodeId::from_u64(0x0200_0000_0000 + n)
}

pub fn s(n: u64) -> NodeId {
    NodeId::from_u64(0x0200_0000_0100 + n)
}
