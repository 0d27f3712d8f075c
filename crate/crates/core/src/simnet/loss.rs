use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::wire::NodeId;

use super::ConfigError;

/// Two-state Gilbert channel: deliveries in the bad state are lost with
/// `burst_loss_prob`, in the good state never.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstModel {
    /// Mean number of consecutive deliveries spent in the bad state.
    pub mean_burst_len: f64,
    pub burst_loss_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub wireless_loss_prob: f64,
    /// Overrides `wireless_loss_prob` for beacon receptions.
    pub beacon_loss_prob: Option<f64>,
    /// Overrides `wireless_loss_prob` for both FUP legs.
    pub fup_loss_prob: Option<f64>,
    pub burst: Option<BurstModel>,
    pub seed: u64,
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel {
            wireless_loss_prob: 0.0,
            beacon_loss_prob: None,
            fup_loss_prob: None,
            burst: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageClass {
    Beacon,
    Fup,
}

fn check_prob(key: &str, p: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ConfigError::invalid(key, format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

impl LossModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_prob("loss.wireless_loss_prob", self.wireless_loss_prob)?;
        if let Some(p) = self.beacon_loss_prob {
            check_prob("loss.beacon_loss_prob", p)?;
        }
        if let Some(p) = self.fup_loss_prob {
            check_prob("loss.fup_loss_prob", p)?;
        }
        if let Some(b) = self.burst {
            check_prob("loss.burst.burst_loss_prob", b.burst_loss_prob)?;
            if !(b.mean_burst_len >= 1.0) {
                return Err(ConfigError::invalid("loss.burst.mean_burst_len", "must be at least 1"));
            }
            let p = self
                .wireless_loss_prob
                .max(self.beacon_loss_prob.unwrap_or(0.0))
                .max(self.fup_loss_prob.unwrap_or(0.0));
            if p > b.burst_loss_prob {
                return Err(ConfigError::invalid(
                    "loss.burst.burst_loss_prob",
                    "must be at least the average loss probability",
                ));
            }
        }
        Ok(())
    }

    pub fn prob(&self, class: MessageClass) -> f64 {
        match class {
            MessageClass::Beacon => self.beacon_loss_prob,
            MessageClass::Fup => self.fup_loss_prob,
        }
        .unwrap_or(self.wireless_loss_prob)
    }

    pub fn start(&self) -> LossState {
        LossState {
            model: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            bad: BTreeMap::new(),
        }
    }
}

/// Running loss process: one RNG stream, per-(receiver, class) burst state.
#[derive(Debug, Clone)]
pub struct LossState {
    model: LossModel,
    rng: ChaCha8Rng,
    bad: BTreeMap<(NodeId, MessageClass), bool>,
}

impl LossState {
    pub fn model(&self) -> &LossModel {
        &self.model
    }

    /// Decides the fate of one wireless delivery to or from `node`.
    pub fn drops(&mut self, node: NodeId, class: MessageClass) -> bool {
        let p = self.model.prob(class);
        match self.model.burst {
            None => p > 0.0 && self.rng.gen::<f64>() < p,
            Some(b) => {
                // Stationary bad-state probability pi = p / burst_loss_prob
                // with leave rate 1/mean_len fixes the enter rate.
                let pi = if b.burst_loss_prob > 0.0 {
                    p / b.burst_loss_prob
                } else {
                    0.0
                };
                let leave = 1.0 / b.mean_burst_len;
                let enter = if pi >= 1.0 {
                    1.0
                } else {
                    (pi * leave / (1.0 - pi)).min(1.0)
                };
                let rng = &mut self.rng;
                let state = self.bad.entry((node, class)).or_insert_with(|| rng.gen::<f64>() < pi);
                let lost = *state && self.rng.gen::<f64>() < b.burst_loss_prob;
                let u = self.rng.gen::<f64>();
                *state = if *state { u >= leave } else { u < enter };
                lost
            }
        }
    }
}
