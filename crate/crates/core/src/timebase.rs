//! Simulated oscillators and the offset/rate clock discipline.

use thiserror::Error;

use crate::wire::Timestamp;

/// Bound on |rate_correction - 1|.
pub const RATE_CLAMP: f64 = 1e-3;
pub const DEFAULT_MAX_FREQ_ERROR_PPM: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("true time went backwards: {requested} < {last}")]
    NonMonotone { requested: Timestamp, last: Timestamp },
    #[error("frequency error {0} ppm exceeds bound {1} ppm")]
    FreqErrorOutOfRange(f64, f64),
    #[error("rate correction interval must be positive, got {0}")]
    NonPositiveInterval(Timestamp),
}

/// Local oscillator with a constant frequency error plus the corrections
/// applied by the discipline.
///
/// The local reading is piecewise linear in true time. Each rate change
/// re-anchors the line at the current instant so readings stay continuous;
/// offset corrections step the anchor.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    freq_error_ppm: f64,
    rate_correction: f64,
    offset_correction: Timestamp,
    anchor_true: Timestamp,
    anchor_local: Timestamp,
    last_true_time: Timestamp,
}

impl VirtualClock {
    pub fn new(freq_error_ppm: f64) -> Result<Self, ClockError> {
        Self::with_bound(freq_error_ppm, DEFAULT_MAX_FREQ_ERROR_PPM)
    }

    pub fn with_bound(freq_error_ppm: f64, max_ppm: f64) -> Result<Self, ClockError> {
        if !freq_error_ppm.is_finite() || freq_error_ppm.abs() > max_ppm {
            return Err(ClockError::FreqErrorOutOfRange(freq_error_ppm, max_ppm));
        }
        Ok(VirtualClock {
            freq_error_ppm,
            rate_correction: 1.0,
            offset_correction: Timestamp::ZERO,
            anchor_true: Timestamp::ZERO,
            anchor_local: Timestamp::ZERO,
            last_true_time: Timestamp::ZERO,
        })
    }

    /// Starts the clock `offset` away from true time at epoch.
    pub fn with_initial_offset(mut self, offset: Timestamp) -> Self {
        self.anchor_local += offset;
        self
    }

    pub fn freq_error_ppm(&self) -> f64 {
        self.freq_error_ppm
    }

    pub fn rate_correction(&self) -> f64 {
        self.rate_correction
    }

    pub fn offset_correction(&self) -> Timestamp {
        self.offset_correction
    }

    pub fn last_true_time(&self) -> Timestamp {
        self.last_true_time
    }

    fn speed(&self) -> f64 {
        (1.0 + self.freq_error_ppm * 1e-6) * self.rate_correction
    }

    /// Local reading at `true_time` without touching bookkeeping.
    pub fn local_at(&self, true_time: Timestamp) -> Timestamp {
        let elapsed = (true_time - self.anchor_true).as_nanos() as f64;
        self.anchor_local + Timestamp((elapsed * self.speed()).round() as i64)
    }

    pub fn read(&mut self, true_time: Timestamp) -> Result<Timestamp, ClockError> {
        if true_time < self.last_true_time {
            return Err(ClockError::NonMonotone {
                requested: true_time,
                last: self.last_true_time,
            });
        }
        self.last_true_time = true_time;
        Ok(self.local_at(true_time))
    }

    /// Steps the clock back by `o` (the caller's measured local-minus-remote offset).
    pub fn apply_offset(&mut self, o: Timestamp) {
        self.anchor_local -= o;
        self.offset_correction -= o;
    }

    /// Multiplies the rate correction by `r` from `true_time` onwards, clamped
    /// to `1 ± RATE_CLAMP`. Returns the effective factor applied.
    pub fn apply_rate(&mut self, r: f64, true_time: Timestamp) -> Result<f64, ClockError> {
        let now_local = self.read(true_time)?;
        let before = self.rate_correction;
        self.rate_correction = (before * r).clamp(1.0 - RATE_CLAMP, 1.0 + RATE_CLAMP);
        self.anchor_true = true_time;
        self.anchor_local = now_local;
        Ok(self.rate_correction / before)
    }

    /// Sets the rate correction directly (used by tests and scenario setup).
    pub fn set_rate_correction(&mut self, rc: f64, true_time: Timestamp) -> Result<(), ClockError> {
        let now_local = self.read(true_time)?;
        self.rate_correction = rc;
        self.anchor_true = true_time;
        self.anchor_local = now_local;
        Ok(())
    }
}

/// A paired timestamp couple: local arrival and the parent's arrival of the
/// same beacon, in the parent's time base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncSample {
    pub local_t: Timestamp,
    pub remote_t: Timestamp,
}

impl SyncSample {
    pub fn shifted(self, local_delta: Timestamp) -> Self {
        SyncSample {
            local_t: self.local_t + local_delta,
            remote_t: self.remote_t,
        }
    }
}

/// Offset of the local clock relative to the parent. Subtract it from the
/// local time base to align.
pub fn cda_offset(sample: &SyncSample) -> Timestamp {
    sample.local_t - sample.remote_t
}

/// Ratio of remote to local elapsed time between two samples.
pub fn cda_rate(s1: &SyncSample, s2: &SyncSample) -> Result<f64, ClockError> {
    let dl = s2.local_t - s1.local_t;
    if dl <= Timestamp::ZERO {
        return Err(ClockError::NonPositiveInterval(dl));
    }
    let dr = s2.remote_t - s1.remote_t;
    Ok(dr.as_nanos() as f64 / dl.as_nanos() as f64)
}

/// Rate factor from two samples, or `None` when their local baseline is
/// shorter than `min_baseline` (short baselines amplify timestamp jitter).
pub fn rate_if_baseline(s1: &SyncSample, s2: &SyncSample, min_baseline: Timestamp) -> Result<Option<f64>, ClockError> {
    if s2.local_t - s1.local_t < min_baseline {
        if s2.local_t <= s1.local_t {
            return Err(ClockError::NonPositiveInterval(s2.local_t - s1.local_t));
        }
        return Ok(None);
    }
    cda_rate(s1, s2).map(Some)
}
