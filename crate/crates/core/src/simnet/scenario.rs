//! Scenario files.
//!
//! A scenario is a TOML document. Durations are decimal seconds, identities
//! are 12-hex-digit strings (separators `:` or `-` allowed).
//!
//! ```toml
//! duration = 300.0
//! seed = 1
//!
//! [sim]                       # optional
//! snapshot_interval = 0.1
//! tick_interval = 0.01
//! jitter_sd_ns = 50.0
//! backbone_latency = 0.001
//!
//! [engine]                    # optional defaults for every station
//! t_fup = 2.0
//!
//! [loss]
//! wireless_loss_prob = 0.0
//! # beacon_loss_prob = 0.5    # per-class overrides
//! # fup_loss_prob = 0.0
//! # seed = 7                  # defaults to one derived from `seed`
//! # burst = { mean_burst_len = 5.0, burst_loss_prob = 0.9 }
//!
//! [[aps]]
//! id = "0a0000000001"
//! beacon_period = 0.1024      # optional
//! tsf_start = 0               # optional
//! beacon_phase = 0.0          # optional
//!
//! [[stas]]
//! id = "020000000001"
//! kind = "ffts"               # or "rfts"
//! gc_capable = true
//! quality = { priority1 = 0, clock_class = 6, accuracy = 32, variance = 100, priority2 = 0 }
//! gc_error_ns = 100
//! freq_error_ppm = 0.0
//! initial_offset = 0.0
//! engine = { t_fup = 2.0 }    # optional per-station overrides
//!
//! [[hearability]]
//! ap = "0a0000000001"
//! sta = "020000000001"
//! # propagation_delay = 0.0
//!
//! [association]
//! "020000000001" = "0a0000000001"
//!
//! [[mobility]]
//! time = 100.0
//! action = "down"             # add | remove | reassociate | down | up
//! sta = "020000000001"
//! # ap = "..."                # for add, remove, reassociate
//! # reassociate = "..."       # optional with remove
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::engine::{EngineConfig, NodeKind, NodeRole};
use crate::wire::{ClockQuality, NodeId, Timestamp, Tsf};

use super::loss::{BurstModel, LossModel};
use super::mobility::{MobilityAction, MobilityEvent, MobilityScript};
use super::topology::{ApSpec, StaSpec, Topology, DEFAULT_BEACON_PERIOD};
use super::{ConfigError, SimConfig};

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub loss: LossModel,
    pub mobility: MobilityScript,
    pub duration: Timestamp,
    pub seed: u64,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn new(topology: Topology, duration: Timestamp, seed: u64) -> Self {
        Scenario {
            topology,
            loss: LossModel {
                seed: derived_loss_seed(seed),
                ..Default::default()
            },
            mobility: MobilityScript::default(),
            duration,
            seed,
            sim: SimConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration < Timestamp::ZERO {
            return Err(ConfigError::invalid("duration", "must be non-negative"));
        }
        self.topology.validate()?;
        self.loss.validate()?;
        self.mobility.validate(&self.topology)?;
        self.sim.validate()
    }

    /// Replaces the seed, and with it the loss seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.loss.seed = derived_loss_seed(seed);
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        raw.into_scenario(text)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::invalid(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }
}

pub fn derived_loss_seed(seed: u64) -> u64 {
    seed ^ 0x6c6f_7373_0000_0000
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    ConfigError::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

fn at(text: &str, span: std::ops::Range<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    let (line, _) = line_col(text, span.start);
    ConfigError::invalid(format!("{key} (line {line})"), message)
}

fn node_id(text: &str, v: &Spanned<String>, key: &str) -> Result<NodeId, ConfigError> {
    v.get_ref().parse().map_err(|_| {
        at(
            text,
            v.span(),
            key,
            format!("not a 12-hex-digit identity: {:?}", v.get_ref()),
        )
    })
}

fn secs(key: &str, v: f64) -> Result<Timestamp, ConfigError> {
    if !v.is_finite() {
        return Err(ConfigError::invalid(key, "must be a finite number of seconds"));
    }
    Ok(Timestamp::from_secs_f64(v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    duration: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    engine: RawEngine,
    #[serde(default)]
    loss: RawLoss,
    #[serde(default)]
    aps: Vec<RawAp>,
    #[serde(default)]
    stas: Vec<RawSta>,
    #[serde(default)]
    hearability: Vec<RawHear>,
    #[serde(default)]
    association: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    mobility: Vec<RawMobility>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSim {
    snapshot_interval: Option<f64>,
    tick_interval: Option<f64>,
    jitter_sd_ns: Option<f64>,
    backbone_latency: Option<f64>,
    debug_disable_sq_gate: Option<bool>,
}

#[derive(Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    t_fup: Option<f64>,
    fup_jitter_frac: Option<f64>,
    ema_alpha: Option<f64>,
    beta: Option<f64>,
    t0: Option<f64>,
    hysteresis_alpha: Option<f64>,
    t_pcl: Option<f64>,
    e_f_local_ppm: Option<f64>,
    fup_records_max: Option<usize>,
    sync_list_capacity: Option<usize>,
    rate_correction: Option<bool>,
    min_rate_baseline: Option<f64>,
    holddown: Option<f64>,
    fresh_records_only: Option<bool>,
}

impl RawEngine {
    fn apply(&self, prefix: &str, cfg: &mut EngineConfig) -> Result<(), ConfigError> {
        let dur = |name: &str, v: Option<f64>, slot: &mut Timestamp| -> Result<(), ConfigError> {
            if let Some(v) = v {
                *slot = secs(&format!("{prefix}.{name}"), v)?;
            }
            Ok(())
        };
        dur("t_fup", self.t_fup, &mut cfg.t_fup)?;
        dur("t0", self.t0, &mut cfg.t0)?;
        dur("t_pcl", self.t_pcl, &mut cfg.t_pcl)?;
        dur("min_rate_baseline", self.min_rate_baseline, &mut cfg.min_rate_baseline)?;
        dur("holddown", self.holddown, &mut cfg.holddown)?;
        if let Some(v) = self.fup_jitter_frac {
            cfg.fup_jitter_frac = v;
        }
        if let Some(v) = self.ema_alpha {
            cfg.ema_alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.hysteresis_alpha {
            cfg.hysteresis_alpha = v;
        }
        if let Some(v) = self.e_f_local_ppm {
            cfg.e_f_local_ppm = v;
        }
        if let Some(v) = self.fup_records_max {
            cfg.fup_records_max = v;
        }
        if let Some(v) = self.sync_list_capacity {
            cfg.sync_list_capacity = v;
        }
        if let Some(v) = self.rate_correction {
            cfg.rate_correction = v;
        }
        if let Some(v) = self.fresh_records_only {
            cfg.fresh_records_only = v;
        }
        Ok(())
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    #[serde(default)]
    wireless_loss_prob: f64,
    beacon_loss_prob: Option<f64>,
    fup_loss_prob: Option<f64>,
    seed: Option<u64>,
    burst: Option<RawBurst>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBurst {
    mean_burst_len: f64,
    burst_loss_prob: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAp {
    id: Spanned<String>,
    beacon_period: Option<f64>,
    tsf_start: Option<u64>,
    beacon_phase: Option<f64>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Ffts,
    Rfts,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuality {
    priority1: u8,
    clock_class: u8,
    accuracy: u8,
    variance: u16,
    priority2: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSta {
    id: Spanned<String>,
    kind: RawKind,
    #[serde(default)]
    gc_capable: bool,
    quality: Option<RawQuality>,
    gc_error_ns: Option<i64>,
    #[serde(default)]
    freq_error_ppm: f64,
    #[serde(default)]
    initial_offset: f64,
    #[serde(default)]
    engine: RawEngine,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHear {
    ap: Spanned<String>,
    sta: Spanned<String>,
    propagation_delay: Option<f64>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawAction {
    Add,
    Remove,
    Reassociate,
    Down,
    Up,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMobility {
    time: f64,
    action: RawAction,
    sta: Spanned<String>,
    ap: Option<Spanned<String>>,
    reassociate: Option<Spanned<String>>,
}

impl RawScenario {
    fn into_scenario(self, text: &str) -> Result<Scenario, ConfigError> {
        let duration = secs("duration", self.duration)?;
        let mut sim = SimConfig::default();
        if let Some(v) = self.sim.snapshot_interval {
            sim.snapshot_interval = secs("sim.snapshot_interval", v)?;
        }
        if let Some(v) = self.sim.tick_interval {
            sim.tick_interval = secs("sim.tick_interval", v)?;
        }
        if let Some(v) = self.sim.jitter_sd_ns {
            sim.jitter_sd_ns = v;
        }
        if let Some(v) = self.sim.backbone_latency {
            sim.backbone_latency = secs("sim.backbone_latency", v)?;
        }
        if let Some(v) = self.sim.debug_disable_sq_gate {
            sim.debug_disable_sq_gate = v;
        }

        let mut base_engine = EngineConfig::default();
        self.engine.apply("engine", &mut base_engine)?;

        let loss = LossModel {
            wireless_loss_prob: self.loss.wireless_loss_prob,
            beacon_loss_prob: self.loss.beacon_loss_prob,
            fup_loss_prob: self.loss.fup_loss_prob,
            burst: self.loss.burst.map(|b| BurstModel {
                mean_burst_len: b.mean_burst_len,
                burst_loss_prob: b.burst_loss_prob,
            }),
            seed: self.loss.seed.unwrap_or_else(|| derived_loss_seed(self.seed)),
        };

        let mut topology = Topology::default();
        for (i, ap) in self.aps.iter().enumerate() {
            let key = format!("aps[{i}]");
            let mut spec = ApSpec::new(node_id(text, &ap.id, &format!("{key}.id"))?);
            spec.beacon_period = ap
                .beacon_period
                .map(|v| secs(&format!("{key}.beacon_period"), v))
                .transpose()?
                .unwrap_or(DEFAULT_BEACON_PERIOD);
            spec.tsf_start = Tsf(ap.tsf_start.unwrap_or(0));
            if let Some(v) = ap.beacon_phase {
                spec.beacon_phase = secs(&format!("{key}.beacon_phase"), v)?;
            }
            topology.aps.push(spec);
        }
        for (i, sta) in self.stas.iter().enumerate() {
            let key = format!("stas[{i}]");
            let id = node_id(text, &sta.id, &format!("{key}.id"))?;
            let kind = match sta.kind {
                RawKind::Ffts => NodeKind::Ffts,
                RawKind::Rfts => NodeKind::Rfts,
            };
            let q_local = match (&sta.quality, sta.gc_capable) {
                (Some(q), true) => ClockQuality {
                    priority1: q.priority1,
                    clock_class: q.clock_class,
                    accuracy: q.accuracy,
                    variance: q.variance,
                    priority2: q.priority2,
                    identity: id,
                },
                (None, true) => {
                    return Err(at(
                        text,
                        sta.id.span(),
                        &format!("{key}.quality"),
                        "grandmaster-capable stations need a quality",
                    ))
                }
                (Some(_), false) => {
                    return Err(at(
                        text,
                        sta.id.span(),
                        &format!("{key}.quality"),
                        "only grandmaster-capable stations carry a quality",
                    ))
                }
                (None, false) => ClockQuality::INFINITE,
            };
            let mut spec = StaSpec::new(
                id,
                NodeRole {
                    kind,
                    gc_capable: sta.gc_capable,
                    q_local,
                },
            );
            spec.freq_error_ppm = sta.freq_error_ppm;
            spec.gc_error_ns = sta.gc_error_ns;
            spec.initial_offset = secs(&format!("{key}.initial_offset"), sta.initial_offset)?;
            spec.engine_config = base_engine.clone();
            sta.engine.apply(&format!("{key}.engine"), &mut spec.engine_config)?;
            topology.stas.push(spec);
        }
        for (i, h) in self.hearability.iter().enumerate() {
            let key = format!("hearability[{i}]");
            let ap = node_id(text, &h.ap, &format!("{key}.ap"))?;
            let sta = node_id(text, &h.sta, &format!("{key}.sta"))?;
            if !topology.hearability.insert((ap, sta)) {
                return Err(at(text, h.ap.span(), &key, "duplicate pair"));
            }
            if let Some(d) = h.propagation_delay {
                topology
                    .propagation_delay
                    .insert((ap, sta), secs(&format!("{key}.propagation_delay"), d)?);
            }
        }
        for (sta, ap) in &self.association {
            let key = format!("association.{sta}");
            let sta_id: NodeId = sta
                .parse()
                .map_err(|_| at(text, ap.span(), &key, format!("not a 12-hex-digit identity: {sta:?}")))?;
            let ap_id = node_id(text, ap, &key)?;
            topology.association.insert(sta_id, ap_id);
        }
        let mut mobility = MobilityScript::default();
        for (i, m) in self.mobility.iter().enumerate() {
            let key = format!("mobility[{i}]");
            let sta = node_id(text, &m.sta, &format!("{key}.sta"))?;
            let ap =
                m.ap.as_ref()
                    .map(|a| node_id(text, a, &format!("{key}.ap")))
                    .transpose()?;
            let need_ap = || at(text, m.sta.span(), &format!("{key}.ap"), "required for this action");
            let action = match m.action {
                RawAction::Add => MobilityAction::Add {
                    ap: ap.ok_or_else(need_ap)?,
                    sta,
                },
                RawAction::Remove => MobilityAction::Remove {
                    ap: ap.ok_or_else(need_ap)?,
                    sta,
                    reassociate: m
                        .reassociate
                        .as_ref()
                        .map(|a| node_id(text, a, &format!("{key}.reassociate")))
                        .transpose()?,
                },
                RawAction::Reassociate => MobilityAction::Reassociate {
                    sta,
                    ap: ap.ok_or_else(need_ap)?,
                },
                RawAction::Down => MobilityAction::NodeDown(sta),
                RawAction::Up => MobilityAction::NodeUp(sta),
            };
            mobility.events.push(MobilityEvent {
                time: secs(&format!("{key}.time"), m.time)?,
                action,
            });
        }

        let scenario = Scenario {
            topology,
            loss,
            mobility,
            duration,
            seed: self.seed,
            sim,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
