//! Shared domain types: addresses, packets, per-device traces and time windows.
//!
//! Timestamps are integer microseconds relative to the capture epoch. Traces
//! are immutable once built; every constructor validates ordering and
//! ownership so downstream detectors can rely on them.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MICROS_PER_SEC: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("packets are not sorted by timestamp (index {0})")]
    Unsorted(usize),
    #[error("packet {index} belongs to {found}, trace is for {expected}")]
    ForeignPacket {
        index: usize,
        expected: MacAddr,
        found: MacAddr,
    },
    #[error("packet at {0} lies outside the trace span")]
    OutsideSpan(Timestamp),
    #[error("span end precedes start")]
    InvertedSpan,
    #[error("cannot merge traces of different devices ({0} vs {1})")]
    DeviceMismatch(MacAddr, MacAddr),
}

/// Microseconds since the capture epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp(secs_to_micros(secs))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn add_micros(self, us: u64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }

    pub fn add_secs(self, secs: f64) -> Self {
        self.add_micros(secs_to_micros(secs))
    }

    pub fn sub_micros(self, us: u64) -> Self {
        Timestamp(self.0.saturating_sub(us))
    }

    /// Micros elapsed from `earlier` to `self`, zero if `earlier` is later.
    pub fn micros_since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

pub fn secs_to_micros(secs: f64) -> u64 {
    if secs.is_nan() || secs <= 0.0 {
        0
    } else {
        (secs * MICROS_PER_SEC as f64).round() as u64
    }
}

/// Serializes a [`Timestamp`] as floating-point seconds.
pub mod serde_secs {
    use super::Timestamp;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(t.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let secs = f64::deserialize(d)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom(
                "timestamp must be a finite, non-negative number",
            ));
        }
        Ok(Timestamp::from_secs_f64(secs))
    }
}

/// Closed interval `[start, end]` on the capture timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Span {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, ModelError> {
        if end < start {
            return Err(ModelError::InvertedSpan);
        }
        Ok(Span { start, end })
    }

    pub fn from_secs(start: f64, end: f64) -> Result<Self, ModelError> {
        Span::new(Timestamp::from_secs_f64(start), Timestamp::from_secs_f64(end))
    }

    pub fn len_micros(&self) -> u64 {
        self.end.micros_since(self.start)
    }

    pub fn len_secs(&self) -> f64 {
        self.len_micros() as f64 / MICROS_PER_SEC as f64
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    /// True when the two intervals share at least one instant of positive
    /// length, or when a zero-length interval lies inside the other.
    pub fn overlaps(&self, other: &Span) -> bool {
        if self.start == self.end || other.start == other.end {
            return self.start <= other.end && other.start <= self.end;
        }
        self.start < other.end && other.start < self.end
    }

    pub fn hull(&self, other: &Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

/// 6-byte hardware address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidParameter(format!("malformed MAC address {s:?}"));
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(bad)?;
            if part.len() != 2 {
                return Err(bad());
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Identity of a monitored device.
///
/// Equality, ordering and hashing use the hardware address only; the network
/// address is kept for reporting. Serializes as the MAC string.
#[derive(Clone, Copy, Debug)]
pub struct DeviceAddress {
    pub hardware_id: MacAddr,
    pub network_id: Option<IpAddr>,
}

impl DeviceAddress {
    pub fn new(hardware_id: MacAddr, network_id: Option<IpAddr>) -> Self {
        DeviceAddress {
            hardware_id,
            network_id,
        }
    }
}

impl From<MacAddr> for DeviceAddress {
    fn from(mac: MacAddr) -> Self {
        DeviceAddress::new(mac, None)
    }
}

impl PartialEq for DeviceAddress {
    fn eq(&self, other: &Self) -> bool {
        self.hardware_id == other.hardware_id
    }
}

impl Eq for DeviceAddress {}

impl Hash for DeviceAddress {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.hardware_id.hash(state)
    }
}

impl PartialOrd for DeviceAddress {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DeviceAddress {
    fn cmp(&self, other: &Self) -> Ordering {
        self.hardware_id.cmp(&other.hardware_id)
    }
}

impl fmt::Display for DeviceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.hardware_id, f)
    }
}

impl FromStr for DeviceAddress {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(DeviceAddress::from(s.parse::<MacAddr>()?))
    }
}

impl Serialize for DeviceAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.hardware_id.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DeviceAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(DeviceAddress::from(MacAddr::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// The device is the LAN-side source.
    #[serde(rename = "out")]
    Outbound,
    #[serde(rename = "in")]
    Inbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionFilter {
    #[default]
    Outbound,
    Inbound,
    Both,
}

impl DirectionFilter {
    pub fn accepts(self, dir: Direction) -> bool {
        match self {
            DirectionFilter::Both => true,
            DirectionFilter::Outbound => dir == Direction::Outbound,
            DirectionFilter::Inbound => dir == Direction::Inbound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp: Timestamp,
    /// Transport payload length in bytes (not the frame length).
    pub payload_size: u32,
    pub device: DeviceAddress,
    pub direction: Direction,
}

/// Time-ordered packets of one device over a capture interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTrace {
    device: DeviceAddress,
    packets: Vec<PacketRecord>,
    span: Span,
}

impl DeviceTrace {
    pub fn new(device: DeviceAddress, packets: Vec<PacketRecord>, span: Span) -> Result<Self, ModelError> {
        for (i, p) in packets.iter().enumerate() {
            if p.device != device {
                return Err(ModelError::ForeignPacket {
                    index: i,
                    expected: device.hardware_id,
                    found: p.device.hardware_id,
                });
            }
            if i > 0 && packets[i - 1].timestamp > p.timestamp {
                return Err(ModelError::Unsorted(i));
            }
            if !span.contains(p.timestamp) {
                return Err(ModelError::OutsideSpan(p.timestamp));
            }
        }
        Ok(DeviceTrace { device, packets, span })
    }

    /// Stable-sorts the packets by timestamp before validating.
    pub fn from_unsorted(
        device: DeviceAddress,
        mut packets: Vec<PacketRecord>,
        span: Span,
    ) -> Result<Self, ModelError> {
        packets.sort_by_key(|p| p.timestamp);
        DeviceTrace::new(device, packets, span)
    }

    pub fn empty(device: DeviceAddress, span: Span) -> Self {
        DeviceTrace {
            device,
            packets: Vec::new(),
            span,
        }
    }

    pub fn device(&self) -> &DeviceAddress {
        &self.device
    }

    pub fn packets(&self) -> &[PacketRecord] {
        &self.packets
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// No packets and a zero-length span: carries no observation at all.
    pub fn is_void(&self) -> bool {
        self.packets.is_empty() && self.span.start == self.span.end
    }

    /// Packets with `start <= t < end`.
    pub fn packets_in(&self, start: Timestamp, end: Timestamp) -> &[PacketRecord] {
        let lo = self.packets.partition_point(|p| p.timestamp < start);
        let hi = self.packets.partition_point(|p| p.timestamp < end);
        &self.packets[lo..hi.max(lo)]
    }

    pub fn into_parts(self) -> (DeviceAddress, Vec<PacketRecord>, Span) {
        (self.device, self.packets, self.span)
    }

    /// Same packets over a wider span.
    pub fn with_span(self, span: Span) -> Result<Self, ModelError> {
        DeviceTrace::new(self.device, self.packets, span)
    }
}

/// One fixed-size slice of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub index: usize,
    pub start: Timestamp,
    pub duration_us: u64,
    pub byte_total: u64,
    /// Bits per second.
    pub rate: f64,
}

impl TimeWindow {
    pub fn end(&self) -> Timestamp {
        self.start.add_micros(self.duration_us)
    }

    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end(),
        }
    }
}

/// Tiles the trace span with half-open windows of `window_secs` seconds and
/// sums the payload bytes of direction-matching packets in each.
///
/// A packet exactly on `span.end` that would open a new window is folded
/// into the last one, so every packet of the span is counted once.
pub fn split_windows(
    trace: &DeviceTrace,
    window_secs: f64,
    filter: DirectionFilter,
) -> Result<Vec<TimeWindow>, ModelError> {
    if !(window_secs.is_finite() && window_secs > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "window size must be positive, got {window_secs}"
        )));
    }
    let width = secs_to_micros(window_secs);
    if width == 0 {
        return Err(ModelError::InvalidParameter(format!(
            "window size {window_secs}s is below one microsecond"
        )));
    }
    let span = trace.span();
    let total = span.len_micros();
    if total == 0 {
        return Ok(Vec::new());
    }
    let count = total.div_ceil(width) as usize;
    let mut bytes = vec![0u64; count];
    for p in trace.packets() {
        if !filter.accepts(p.direction) {
            continue;
        }
        let offset = p.timestamp.micros_since(span.start);
        let idx = ((offset / width) as usize).min(count - 1);
        bytes[idx] += u64::from(p.payload_size);
    }
    let secs = width as f64 / MICROS_PER_SEC as f64;
    Ok(bytes
        .into_iter()
        .enumerate()
        .map(|(index, byte_total)| TimeWindow {
            index,
            start: span.start.add_micros(width * index as u64),
            duration_us: width,
            byte_total,
            rate: byte_total as f64 * 8.0 / secs,
        })
        .collect())
}

/// Ground-truth interval during which a device streamed audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioLabel {
    pub device: DeviceAddress,
    #[serde(with = "serde_secs")]
    pub start: Timestamp,
    #[serde(with = "serde_secs")]
    pub end: Timestamp,
    #[serde(default)]
    pub cause: String,
}

impl AudioLabel {
    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }
}

/// Traces plus the audio intervals that are known to be in them.
#[derive(Debug, Clone, Default)]
pub struct LabeledTraceSet {
    pub traces: std::collections::BTreeMap<DeviceAddress, DeviceTrace>,
    pub labels: Vec<AudioLabel>,
}

impl LabeledTraceSet {
    pub fn labels_for<'a>(&'a self, device: &'a DeviceAddress) -> impl Iterator<Item = &'a AudioLabel> + 'a {
        self.labels.iter().filter(move |l| &l.device == device)
    }

    pub fn packet_count(&self) -> usize {
        self.traces.values().map(DeviceTrace::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> DeviceAddress {
        DeviceAddress::from(MacAddr([2, 0, 0, 0, 0, 1]))
    }

    fn pkt(t_us: u64, size: u32, direction: Direction) -> PacketRecord {
        PacketRecord {
            timestamp: Timestamp::from_micros(t_us),
            payload_size: size,
            device: dev(),
            direction,
        }
    }

    #[test]
    fn mac_round_trips_lowercase() {
        let mac: MacAddr = "AA:bb:0C:dd:ee:0F".parse().unwrap();
        assert_eq!(mac.to_string(), "aa:bb:0c:dd:ee:0f");
        assert!("aa:bb:cc".parse::<MacAddr>().is_err());
        assert!("aa:bb:cc:dd:ee:ff:00".parse::<MacAddr>().is_err());
    }

    #[test]
    fn device_equality_ignores_network_id() {
        let a = DeviceAddress::new(MacAddr([1; 6]), Some("10.0.0.1".parse().unwrap()));
        let b = DeviceAddress::new(MacAddr([1; 6]), None);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_trace_gives_all_zero_windows() {
        let trace = DeviceTrace::empty(dev(), Span::from_secs(0.0, 10.0).unwrap());
        let w = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        assert_eq!(w.len(), 10);
        assert!(w.iter().all(|w| w.rate == 0.0 && w.byte_total == 0));
    }

    #[test]
    fn single_packet_lands_in_its_window() {
        let trace = DeviceTrace::new(
            dev(),
            vec![pkt(2_500_000, 1000, Direction::Outbound)],
            Span::from_secs(0.0, 4.0).unwrap(),
        )
        .unwrap();
        let w = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[2].byte_total, 1000);
        assert_eq!(w[2].rate, 8000.0);
        assert!(w.iter().filter(|w| w.index != 2).all(|w| w.byte_total == 0));
    }

    #[test]
    fn uniform_stream_rate_matches_summation() {
        // 125 packets/s of 23 bytes over 10 s.
        let packets: Vec<_> = (0..1250u64).map(|i| pkt(i * 8_000, 23, Direction::Outbound)).collect();
        let trace = DeviceTrace::new(dev(), packets.clone(), Span::from_secs(0.0, 10.0).unwrap()).unwrap();
        let w = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        for win in &w {
            let oracle: u64 = packets
                .iter()
                .filter(|p| p.timestamp >= win.start && p.timestamp < win.end())
                .map(|p| u64::from(p.payload_size))
                .sum();
            assert_eq!(win.byte_total, oracle);
            assert_eq!(win.rate, 23_000.0);
        }
    }

    #[test]
    fn boundary_packet_goes_to_later_window() {
        let trace = DeviceTrace::new(
            dev(),
            vec![pkt(1_000_000, 10, Direction::Outbound)],
            Span::from_secs(0.0, 3.0).unwrap(),
        )
        .unwrap();
        let w = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        assert_eq!(w[0].byte_total, 0);
        assert_eq!(w[1].byte_total, 10);
    }

    #[test]
    fn packet_on_span_end_is_kept() {
        let trace = DeviceTrace::new(
            dev(),
            vec![pkt(3_000_000, 10, Direction::Outbound)],
            Span::from_secs(0.0, 3.0).unwrap(),
        )
        .unwrap();
        let w = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[2].byte_total, 10);
    }

    #[test]
    fn direction_filter_applies() {
        let trace = DeviceTrace::new(
            dev(),
            vec![pkt(0, 10, Direction::Outbound), pkt(10, 20, Direction::Inbound)],
            Span::from_secs(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let out = split_windows(&trace, 1.0, DirectionFilter::Outbound).unwrap();
        let both = split_windows(&trace, 1.0, DirectionFilter::Both).unwrap();
        assert_eq!(out[0].byte_total, 10);
        assert_eq!(both[0].byte_total, 30);
    }

    #[test]
    fn parameter_and_degenerate_cases() {
        let trace = DeviceTrace::empty(dev(), Span::from_secs(5.0, 5.0).unwrap());
        assert!(split_windows(&trace, 1.0, DirectionFilter::Outbound)
            .unwrap()
            .is_empty());
        assert!(matches!(
            split_windows(&trace, -1.0, DirectionFilter::Outbound),
            Err(ModelError::InvalidParameter(_))
        ));
        assert!(split_windows(&trace, 0.0, DirectionFilter::Outbound).is_err());
    }

    #[test]
    fn trace_validation() {
        let span = Span::from_secs(0.0, 1.0).unwrap();
        assert_eq!(
            DeviceTrace::new(
                dev(),
                vec![pkt(10, 1, Direction::Outbound), pkt(5, 1, Direction::Outbound)],
                span
            ),
            Err(ModelError::Unsorted(1))
        );
        assert!(matches!(
            DeviceTrace::new(dev(), vec![pkt(2_000_000, 1, Direction::Outbound)], span),
            Err(ModelError::OutsideSpan(_))
        ));
        let mut foreign = pkt(1, 1, Direction::Outbound);
        foreign.device = DeviceAddress::from(MacAddr([9; 6]));
        assert!(matches!(
            DeviceTrace::new(dev(), vec![foreign], span),
            Err(ModelError::ForeignPacket { .. })
        ));
    }

    #[test]
    fn span_overlap_is_half_open_for_positive_lengths() {
        let a = Span::from_secs(0.0, 1.0).unwrap();
        let b = Span::from_secs(1.0, 2.0).unwrap();
        let c = Span::from_secs(0.5, 0.5).unwrap();
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&c));
    }
}
