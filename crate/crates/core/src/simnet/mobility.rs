use crate::wire::{NodeId, Timestamp};

use super::topology::Topology;
use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityAction {
    /// The STA starts hearing the AP.
    Add {
        ap: NodeId,
        sta: NodeId,
    },
    /// The STA stops hearing the AP; if it was associated there it must move
    /// to `reassociate`.
    Remove {
        ap: NodeId,
        sta: NodeId,
        reassociate: Option<NodeId>,
    },
    Reassociate {
        sta: NodeId,
        ap: NodeId,
    },
    /// The STA leaves the ESS (powered off or out of range).
    NodeDown(NodeId),
    /// The STA comes back with a fresh protocol state.
    NodeUp(NodeId),
}

impl MobilityAction {
    pub fn sta(&self) -> NodeId {
        match *self {
            MobilityAction::Add { sta, .. }
            | MobilityAction::Remove { sta, .. }
            | MobilityAction::Reassociate { sta, .. }
            | MobilityAction::NodeDown(sta)
            | MobilityAction::NodeUp(sta) => sta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MobilityEvent {
    pub time: Timestamp,
    pub action: MobilityAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MobilityScript {
    pub events: Vec<MobilityEvent>,
}

impl MobilityScript {
    /// Replays the script on a copy of `topology`, checking that times are
    /// ordered and every step keeps each STA able to hear its AP.
    pub fn validate(&self, topology: &Topology) -> Result<(), ConfigError> {
        let mut topo = topology.clone();
        let mut last = Timestamp::ZERO;
        for (i, ev) in self.events.iter().enumerate() {
            let key = format!("mobility[{i}]");
            if ev.time < last {
                return Err(ConfigError::invalid(
                    format!("{key}.time"),
                    "events must be in time order",
                ));
            }
            last = ev.time;
            apply(&mut topo, &ev.action).map_err(|m| ConfigError::invalid(key, m))?;
        }
        Ok(())
    }
}

/// Applies one hearability/association change. Up/down events leave the
/// topology unchanged.
pub fn apply(topo: &mut Topology, action: &MobilityAction) -> Result<(), String> {
    let sta = action.sta();
    if topo.sta(sta).is_none() {
        return Err(format!("unknown station {sta}"));
    }
    let known_ap = |topo: &Topology, ap: NodeId| {
        if topo.ap(ap).is_some() {
            Ok(())
        } else {
            Err(format!("unknown AP {ap}"))
        }
    };
    match *action {
        MobilityAction::Add { ap, sta } => {
            known_ap(topo, ap)?;
            topo.hearability.insert((ap, sta));
        }
        MobilityAction::Remove { ap, sta, reassociate } => {
            known_ap(topo, ap)?;
            topo.hearability.remove(&(ap, sta));
            topo.propagation_delay.remove(&(ap, sta));
            if let Some(new_ap) = reassociate {
                known_ap(topo, new_ap)?;
                topo.association.insert(sta, new_ap);
            }
            let current = topo.association[&sta];
            if !topo.hears(current, sta) {
                return Err(format!("{sta} would stay associated to {current} without hearing it"));
            }
        }
        MobilityAction::Reassociate { sta, ap } => {
            known_ap(topo, ap)?;
            if !topo.hears(ap, sta) {
                return Err(format!("{sta} cannot associate to {ap}, which it does not hear"));
            }
            topo.association.insert(sta, ap);
        }
        MobilityAction::NodeDown(_) | MobilityAction::NodeUp(_) => {}
    }
    Ok(())
}
