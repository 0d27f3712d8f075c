//! Protocol identities, clock-quality descriptors and the FUP codec.
//!
//! FUP layout (big-endian):
//!
//! ```text
//! magic "DO" (2) | version (1) | sender (6) | seq (4) | e (8, signed ns)
//! | sq: priority1 (1) clock_class (1) accuracy (1) variance (2) priority2 (1) identity (6)
//! | record_count (1) | record_count x { ap (6) | tsf (8) | t (8, signed ns) }
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use thiserror::Error;

pub const FUP_MAGIC: [u8; 2] = *b"DO";
pub const FUP_VERSION: u8 = 0x01;
pub const FUP_HEADER_LEN: usize = 2 + 1 + 6 + 4 + 8 + CLOCK_QUALITY_LEN + 1;
pub const FUP_RECORD_LEN: usize = 6 + 8 + 8;
pub const FUP_MAX_RECORDS: usize = u8::MAX as usize;
const CLOCK_QUALITY_LEN: usize = 1 + 1 + 1 + 2 + 1 + 6;

/// 6-byte node identifier with MAC-address semantics.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub [u8; 6]);

impl NodeId {
    pub const BROADCAST: NodeId = NodeId([0xff; 6]);

    /// Builds an id whose low 48 bits are `v`.
    pub fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        NodeId([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({self})")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid node id {0:?}: expected 12 hex digits")]
pub struct ParseNodeIdError(pub String);

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cleaned: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        if cleaned.len() != 12 || !cleaned.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(ParseNodeIdError(s.to_string()));
        }
        let mut out = [0u8; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&cleaned[2 * i..2 * i + 2], 16).map_err(|_| ParseNodeIdError(s.to_string()))?;
        }
        Ok(NodeId(out))
    }
}

/// 64-bit TSF counter value, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tsf(pub u64);

/// Signed time quantity with nanosecond resolution. Used for both instants and
/// durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);
    pub const MAX: Timestamp = Timestamp(i64::MAX);

    pub const fn from_nanos(ns: i64) -> Self {
        Timestamp(ns)
    }

    pub const fn from_micros(us: i64) -> Self {
        Timestamp(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        Timestamp(s * 1_000_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e9).round() as i64)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn abs(self) -> Self {
        Timestamp(self.0.saturating_abs())
    }
}

impl Add for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.0))
    }
}

impl Sub for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_sub(rhs.0))
    }
}

impl AddAssign for Timestamp {
    fn add_assign(&mut self, rhs: Timestamp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Timestamp {
    fn sub_assign(&mut self, rhs: Timestamp) {
        *self = *self - rhs;
    }
}

impl Neg for Timestamp {
    type Output = Timestamp;
    fn neg(self) -> Timestamp {
        Timestamp(-self.0)
    }
}

impl Mul<i64> for Timestamp {
    type Output = Timestamp;
    fn mul(self, rhs: i64) -> Timestamp {
        Timestamp(self.0.saturating_mul(rhs))
    }
}

impl Div<i64> for Timestamp {
    type Output = Timestamp;
    fn div(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 / rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// One logged beacon: originating AP, its TSF and the local arrival timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BeaconRecord {
    pub ap: NodeId,
    pub tsf: Tsf,
    pub t: Timestamp,
}

/// A beacon as emitted by an AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Beacon {
    pub ap: NodeId,
    pub tsf: Tsf,
}

/// Announce-style clock descriptor. Lower compares as better; the derived
/// ordering is lexicographic in field order with `identity` as the final
/// tiebreaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockQuality {
    pub priority1: u8,
    pub clock_class: u8,
    pub accuracy: u8,
    pub variance: u16,
    pub priority2: u8,
    pub identity: NodeId,
}

impl ClockQuality {
    /// Worse than every finite descriptor. Used as Q_L of pure slave clocks.
    pub const INFINITE: ClockQuality = ClockQuality {
        priority1: u8::MAX,
        clock_class: u8::MAX,
        accuracy: u8::MAX,
        variance: u16::MAX,
        priority2: u8::MAX,
        identity: NodeId([0xff; 6]),
    };

    pub fn is_infinite(&self) -> bool {
        *self == Self::INFINITE
    }

    pub fn is_better_than(&self, other: &ClockQuality) -> bool {
        compare_clock_quality(self, other) == QualityOrdering::Better
    }
}

impl fmt::Display for ClockQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            return f.write_str("inf");
        }
        write!(
            f,
            "{}/{}/{}/{}/{}/{}",
            self.priority1, self.clock_class, self.accuracy, self.variance, self.priority2, self.identity
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityOrdering {
    Better,
    Equal,
    Worse,
}

pub fn compare_clock_quality(a: &ClockQuality, b: &ClockQuality) -> QualityOrdering {
    match a.cmp(b) {
        Ordering::Less => QualityOrdering::Better,
        Ordering::Equal => QualityOrdering::Equal,
        Ordering::Greater => QualityOrdering::Worse,
    }
}

/// Follow_Up broadcast. `e` is the sender's own error estimate in ns;
/// `i64::MAX` stands for "unknown".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FupMessage {
    pub sender: NodeId,
    pub seq: u32,
    pub records: Vec<BeaconRecord>,
    pub e: i64,
    pub sq: ClockQuality,
}

pub const ERROR_UNKNOWN: i64 = i64::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("FUP must carry at least one beacon record")]
    EmptyRecords,
    #[error("FUP carries {0} records, codec limit is {FUP_MAX_RECORDS}")]
    TooManyRecords(usize),
    #[error("records not sorted by ascending t at index {0}")]
    UnsortedRecords(usize),
    #[error("truncated buffer while reading {field}: need {need} bytes, have {have}")]
    Truncated {
        field: &'static str,
        need: usize,
        have: usize,
    },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
}

fn check_records(records: &[BeaconRecord]) -> Result<(), WireError> {
    if records.is_empty() {
        return Err(WireError::EmptyRecords);
    }
    if records.len() > FUP_MAX_RECORDS {
        return Err(WireError::TooManyRecords(records.len()));
    }
    if let Some(i) = records.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(WireError::UnsortedRecords(i + 1));
    }
    Ok(())
}

pub fn fup_encoded_len(record_count: usize) -> usize {
    FUP_HEADER_LEN + record_count * FUP_RECORD_LEN
}

pub fn encode_fup(msg: &FupMessage) -> Result<Vec<u8>, WireError> {
    check_records(&msg.records)?;
    let mut out = Vec::with_capacity(fup_encoded_len(msg.records.len()));
    out.extend_from_slice(&FUP_MAGIC);
    out.push(FUP_VERSION);
    out.extend_from_slice(&msg.sender.0);
    out.extend_from_slice(&msg.seq.to_be_bytes());
    out.extend_from_slice(&msg.e.to_be_bytes());
    out.push(msg.sq.priority1);
    out.push(msg.sq.clock_class);
    out.push(msg.sq.accuracy);
    out.extend_from_slice(&msg.sq.variance.to_be_bytes());
    out.push(msg.sq.priority2);
    out.extend_from_slice(&msg.sq.identity.0);
    out.push(msg.records.len() as u8);
    for r in &msg.records {
        out.extend_from_slice(&r.ap.0);
        out.extend_from_slice(&r.tsf.0.to_be_bytes());
        out.extend_from_slice(&r.t.0.to_be_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], WireError> {
        let have = self.buf.len() - self.pos;
        if have < N {
            return Err(WireError::Truncated { field, need: N, have });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, WireError> {
        Ok(self.take::<1>(field)?[0])
    }
}

pub fn decode_fup(bytes: &[u8]) -> Result<FupMessage, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take::<2>("magic")?;
    if magic != FUP_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let version = r.u8("version")?;
    if version != FUP_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let sender = NodeId(r.take::<6>("sender")?);
    let seq = u32::from_be_bytes(r.take::<4>("seq")?);
    let e = i64::from_be_bytes(r.take::<8>("e")?);
    let sq = ClockQuality {
        priority1: r.u8("sq.priority1")?,
        clock_class: r.u8("sq.clock_class")?,
        accuracy: r.u8("sq.accuracy")?,
        variance: u16::from_be_bytes(r.take::<2>("sq.variance")?),
        priority2: r.u8("sq.priority2")?,
        identity: NodeId(r.take::<6>("sq.identity")?),
    };
    let count = r.u8("record_count")? as usize;
    let have = bytes.len() - r.pos;
    if have < count * FUP_RECORD_LEN {
        return Err(WireError::Truncated {
            field: "records",
            need: count * FUP_RECORD_LEN,
            have,
        });
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        records.push(BeaconRecord {
            ap: NodeId(r.take::<6>("record.ap")?),
            tsf: Tsf(u64::from_be_bytes(r.take::<8>("record.tsf")?)),
            t: Timestamp(i64::from_be_bytes(r.take::<8>("record.t")?)),
        });
    }
    if r.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - r.pos));
    }
    check_records(&records)?;
    Ok(FupMessage {
        sender,
        seq,
        records,
        e,
        sq,
    })
}
