//! Parent-table entries, link-error estimation and beacon pairing.

use std::collections::HashMap;

use crate::wire::{BeaconRecord, ClockQuality, NodeId, Timestamp, Tsf, ERROR_UNKNOWN};

use super::{EngineConfig, EngineError};

/// Estimated synchronization error in ns; `Infinite` sorts after every finite
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkError {
    Finite(i64),
    Infinite,
}

impl LinkError {
    pub fn from_wire(e: i64) -> Self {
        if e == ERROR_UNKNOWN {
            LinkError::Infinite
        } else {
            LinkError::Finite(e)
        }
    }

    pub fn to_wire(self) -> i64 {
        match self {
            LinkError::Finite(e) => e.min(ERROR_UNKNOWN - 1),
            LinkError::Infinite => ERROR_UNKNOWN,
        }
    }

    /// `self < factor * other`, with infinities compared as such.
    pub fn below_fraction_of(self, factor: f64, other: LinkError) -> bool {
        match (self, other) {
            (LinkError::Infinite, _) => false,
            (LinkError::Finite(_), LinkError::Infinite) => true,
            (LinkError::Finite(a), LinkError::Finite(b)) => (a as f64) < factor * b as f64,
        }
    }
}

/// One tuple of the parent table: what we know about the TS link from `master`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockQualityEntry {
    pub master: NodeId,
    /// Remote error as carried by the master's last paired FUP.
    pub e: LinkError,
    /// Local arrival time of the last paired FUP.
    pub tau: Timestamp,
    /// Mean SYNOP intertime; `None` until the second pairing.
    pub mean_intertime: Option<Timestamp>,
    /// Source quality of the last paired FUP.
    pub q: ClockQuality,
}

impl ClockQualityEntry {
    pub fn new(master: NodeId, e: LinkError, tau: Timestamp, q: ClockQuality) -> Self {
        ClockQualityEntry {
            master,
            e,
            tau,
            mean_intertime: None,
            q,
        }
    }
}

fn div_round(num: i128, den: i128) -> i128 {
    let half = den / 2;
    if num >= 0 {
        (num + half) / den
    } else {
        (num - half) / den
    }
}

/// Mean synchronization error of the link: remote error plus half the drift
/// accumulated over one mean intertime.
pub fn estimate_link_error(entry: &ClockQualityEntry, e_f_local_ppm: f64) -> LinkError {
    let (LinkError::Finite(e), Some(t_bar)) = (entry.e, entry.mean_intertime) else {
        return LinkError::Infinite;
    };
    let ppb = (e_f_local_ppm.abs() * 1000.0).round() as i128;
    let drift = div_round(ppb * t_bar.as_nanos() as i128, 2_000_000_000);
    let total = e as i128 + drift;
    if total >= ERROR_UNKNOWN as i128 {
        LinkError::Infinite
    } else {
        LinkError::Finite(total as i64)
    }
}

/// Folds a new paired-FUP arrival into the entry's mean intertime.
///
/// The first interval seeds the mean with inertia (`beta * dt + t0`); later
/// ones are smoothed with `ema_alpha`.
pub fn update_mean_intertime(
    entry: &mut ClockQualityEntry,
    tau_new: Timestamp,
    cfg: &EngineConfig,
) -> Result<(), EngineError> {
    if tau_new <= entry.tau {
        return Err(EngineError::TimeNotIncreasing {
            previous: entry.tau,
            next: tau_new,
        });
    }
    let dt = (tau_new - entry.tau).as_nanos() as f64;
    let next = match entry.mean_intertime {
        None => cfg.beta * dt + cfg.t0.as_nanos() as f64,
        Some(prev) => cfg.ema_alpha * dt + (1.0 - cfg.ema_alpha) * prev.as_nanos() as f64,
    };
    entry.mean_intertime = Some(Timestamp(next.round() as i64));
    entry.tau = tau_new;
    Ok(())
}

/// A remote record and the local record of the same beacon instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub remote: BeaconRecord,
    pub local: BeaconRecord,
}

pub(crate) fn match_order_key(m: &Match) -> (Timestamp, NodeId, Tsf, Timestamp) {
    (m.local.t, m.local.ap, m.local.tsf, m.remote.t)
}

/// All (remote, local) record pairs sharing AP identity and TSF, ascending by
/// local arrival time.
pub fn pair<'a>(remote: &[BeaconRecord], local: impl IntoIterator<Item = &'a BeaconRecord>) -> Vec<Match> {
    let mut index: HashMap<(NodeId, Tsf), Vec<BeaconRecord>> = HashMap::new();
    for l in local {
        index.entry((l.ap, l.tsf)).or_default().push(*l);
    }
    let mut out = Vec::new();
    for r in remote {
        if let Some(ls) = index.get(&(r.ap, r.tsf)) {
            out.extend(ls.iter().map(|l| Match { remote: *r, local: *l }));
        }
    }
    out.sort_by_key(match_order_key);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const US: i64 = 1_000;
    const S: i64 = 1_000_000_000;

    fn entry(e: i64, t_bar: Option<i64>) -> ClockQualityEntry {
        ClockQualityEntry {
            master: NodeId::from_u64(1),
            e: LinkError::Finite(e),
            tau: Timestamp(0),
            mean_intertime: t_bar.map(Timestamp),
            q: ClockQuality::INFINITE,
        }
    }

    #[test]
    fn link_error_examples() {
        assert_eq!(
            estimate_link_error(&entry(0, Some(2 * S)), 10.0),
            LinkError::Finite(10 * US)
        );
        assert_eq!(estimate_link_error(&entry(0, None), 10.0), LinkError::Infinite);
        assert_eq!(
            estimate_link_error(&entry(5 * US, Some(4 * S)), 20.0),
            LinkError::Finite(45 * US)
        );
        let mut unknown = entry(0, Some(S));
        unknown.e = LinkError::Infinite;
        assert_eq!(estimate_link_error(&unknown, 1.0), LinkError::Infinite);
    }

    #[test]
    fn intertime_examples() {
        let cfg = EngineConfig::default();
        let mut e = entry(0, None);
        update_mean_intertime(&mut e, Timestamp(2 * S), &cfg).unwrap();
        assert_eq!(e.mean_intertime, Some(Timestamp(5 * S)));
        assert_eq!(e.tau, Timestamp(2 * S));

        let mut e = entry(0, Some(2 * S));
        update_mean_intertime(&mut e, Timestamp(2 * S), &cfg).unwrap();
        assert_eq!(e.mean_intertime, Some(Timestamp(2 * S)));

        let mut e = entry(0, Some(2 * S));
        update_mean_intertime(&mut e, Timestamp(4 * S), &cfg).unwrap();
        assert_eq!(e.mean_intertime, Some(Timestamp(2_250_000_000)));
    }

    #[test]
    fn intertime_requires_increasing_tau() {
        let cfg = EngineConfig::default();
        let mut e = entry(0, Some(2 * S));
        e.tau = Timestamp(10);
        assert!(update_mean_intertime(&mut e, Timestamp(10), &cfg).is_err());
        assert!(update_mean_intertime(&mut e, Timestamp(9), &cfg).is_err());
    }

    /// For a constant inter-arrival T the residual |mean - T| shrinks by
    /// (1 - alpha) per update.
    #[test]
    fn ema_contracts_geometrically() {
        let cfg = EngineConfig::default();
        let mut e = entry(0, Some(10 * S));
        let period = 2 * S;
        let gap0 = (10 * S - period) as f64;
        for n in 1..=40 {
            let tau = e.tau + Timestamp(period);
            update_mean_intertime(&mut e, tau, &cfg).unwrap();
            let residual = (e.mean_intertime.unwrap().as_nanos() - period) as f64;
            let expected = gap0 * (1.0 - cfg.ema_alpha).powi(n);
            assert!((residual - expected).abs() <= n as f64, "n={n}");
        }
    }

    #[test]
    fn hysteresis_comparison() {
        let p = LinkError::Finite(10 * US);
        assert!(!LinkError::Finite(9 * US).below_fraction_of(0.875, p));
        assert!(LinkError::Finite(8 * US).below_fraction_of(0.875, p));
        assert!(LinkError::Finite(8 * US).below_fraction_of(0.875, LinkError::Infinite));
        assert!(!LinkError::Infinite.below_fraction_of(0.875, LinkError::Infinite));
    }

    fn rec(ap: u64, tsf: u64, t: i64) -> BeaconRecord {
        BeaconRecord {
            ap: NodeId::from_u64(ap),
            tsf: Tsf(tsf),
            t: Timestamp(t),
        }
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair(&[rec(1, 100, 7)], &[rec(1, 100, 9)]).len(), 1);
        assert!(pair(&[rec(1, 100, 7)], &[rec(2, 100, 9)]).is_empty());
        assert!(pair(&[rec(1, 100, 7)], &[rec(1, 101, 9)]).is_empty());
    }

    fn brute_force(remote: &[BeaconRecord], local: &[BeaconRecord]) -> Vec<Match> {
        let mut out = Vec::new();
        for r in remote {
            for l in local {
                if r.ap == l.ap && r.tsf == l.tsf {
                    out.push(Match { remote: *r, local: *l });
                }
            }
        }
        out.sort_by_key(match_order_key);
        out
    }

    fn arb_records() -> impl Strategy<Value = Vec<BeaconRecord>> {
        prop::collection::vec((0u64..4, 0u64..12, -1000i64..1000), 0..=32)
            .prop_map(|v| v.into_iter().map(|(a, t, ts)| rec(a, t, ts)).collect())
    }

    proptest! {
        #[test]
        fn pairing_matches_brute_force(remote in arb_records(), local in arb_records()) {
            prop_assert_eq!(pair(&remote, &local), brute_force(&remote, &local));
        }
    }
}
