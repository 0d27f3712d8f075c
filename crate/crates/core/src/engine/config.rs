use crate::wire::Timestamp;

use super::EngineError;

/// Per-node protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// FUP period T_F.
    pub t_fup: Timestamp,
    /// Uniform send-time jitter as a fraction of `t_fup` (0.05 = ±5%).
    pub fup_jitter_frac: f64,
    /// EMA smoothing factor for the mean SYNOP intertime.
    pub ema_alpha: f64,
    /// Multiplicative inertia applied on the second pairing from a master.
    pub beta: f64,
    /// Additive inertia applied on the second pairing from a master.
    pub t0: Timestamp,
    /// A same-quality competitor replaces the parent only below this fraction
    /// of the parent's error.
    pub hysteresis_alpha: f64,
    /// Parent clock lifetime: entries without a paired FUP for this long are
    /// dropped.
    pub t_pcl: Timestamp,
    /// Residual oscillator tolerance assumed for the local clock, ppm.
    pub e_f_local_ppm: f64,
    pub fup_records_max: usize,
    pub sync_list_capacity: usize,
    /// Error advertised while acting as grandmaster.
    pub gc_error: Timestamp,
    pub rate_correction: bool,
    /// Rate corrections need at least this much local time between samples.
    pub min_rate_baseline: Timestamp,
    /// After the reference quality worsens, FUPs claiming the lost quality
    /// (or better) are refused for this long. Zero disables.
    pub holddown: Timestamp,
    /// Only put beacons logged since the previous FUP into a FUP.
    pub fresh_records_only: bool,
    /// Test-only: accept every paired FUP regardless of source quality.
    pub disable_sq_gate: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            t_fup: Timestamp::from_secs(2),
            fup_jitter_frac: 0.05,
            ema_alpha: 0.125,
            beta: 2.0,
            t0: Timestamp::from_secs(1),
            hysteresis_alpha: 0.875,
            t_pcl: Timestamp::from_secs(60),
            e_f_local_ppm: 10.0,
            fup_records_max: 8,
            sync_list_capacity: 64,
            gc_error: Timestamp::from_nanos(100),
            rate_correction: true,
            min_rate_baseline: Timestamp::from_millis(500),
            holddown: Timestamp::from_secs(70),
            fresh_records_only: false,
            disable_sq_gate: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |what: &str| Err(EngineError::Config(what.to_string()));
        if self.t_fup <= Timestamp::ZERO {
            return bad("t_fup must be positive");
        }
        if !(0.0..0.5).contains(&self.fup_jitter_frac) {
            return bad("fup_jitter_frac must be in [0, 0.5)");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha < 1.0) {
            return bad("ema_alpha must be in (0, 1)");
        }
        if !(self.hysteresis_alpha > 0.0 && self.hysteresis_alpha < 1.0) {
            return bad("hysteresis_alpha must be in (0, 1)");
        }
        if !(self.beta >= 1.0) {
            return bad("beta must be >= 1");
        }
        if self.t0 < Timestamp::ZERO {
            return bad("t0 must be >= 0");
        }
        if self.t_pcl <= Timestamp::ZERO {
            return bad("t_pcl must be positive");
        }
        if !self.e_f_local_ppm.is_finite() {
            return bad("e_f_local_ppm must be finite");
        }
        if self.fup_records_max == 0 || self.fup_records_max > crate::wire::FUP_MAX_RECORDS {
            return bad("fup_records_max must be in 1..=255");
        }
        if self.sync_list_capacity == 0 {
            return bad("sync_list_capacity must be positive");
        }
        if self.gc_error < Timestamp::ZERO {
            return bad("gc_error must be >= 0");
        }
        if self.holddown < Timestamp::ZERO {
            return bad("holddown must be >= 0");
        }
        Ok(())
    }

    /// FUPs must be sent strictly less often than beacons.
    pub fn validate_beacon_period(&self, max_beacon_period: Timestamp) -> Result<(), EngineError> {
        if self.t_fup <= max_beacon_period {
            return Err(EngineError::Config(format!(
                "t_fup {} must be strictly longer than the beacon period {}",
                self.t_fup, max_beacon_period
            )));
        }
        Ok(())
    }
}
