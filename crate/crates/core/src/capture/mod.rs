//! Packet ingestion: pcap files or a live adapter, grouped into per-device
//! traces with direction inferred from the LAN address prefixes.

pub mod frame;
pub mod live;
pub mod pcap;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DeviceAddress, DeviceTrace, Direction, MacAddr, ModelError, PacketRecord, Span, Timestamp};
use frame::{parse_ethernet, FrameSummary};
use live::{FramePoll, FrameSource, PcapFileSource};
use pcap::{PcapError, RawFrame};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("pcap format error: {0}")]
    Format(#[from] PcapError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("traces file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Address prefixes that make up the LAN side of the capture point.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalNetwork(Vec<IpNet>);

impl LocalNetwork {
    pub fn new(prefixes: Vec<IpNet>) -> Self {
        LocalNetwork(prefixes)
    }

    /// Comma-separated CIDR list, e.g. `192.168.0.0/16,fd00::/8`.
    pub fn parse(list: &str) -> Result<Self, CaptureError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<IpNet>()
                    .map_err(|e| CaptureError::InvalidParameter(format!("bad prefix {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(LocalNetwork)
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        self.0.iter().any(|net| net.contains(ip))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub enum SourceKind {
    PcapFile(PathBuf),
    LiveAdapter(Box<dyn FrameSource>),
}

pub struct CaptureSource {
    pub kind: SourceKind,
    pub local_network: LocalNetwork,
}

impl CaptureSource {
    pub fn pcap_file(path: impl Into<PathBuf>, local_network: LocalNetwork) -> Self {
        CaptureSource {
            kind: SourceKind::PcapFile(path.into()),
            local_network,
        }
    }

    pub fn live(adapter: Box<dyn FrameSource>, local_network: LocalNetwork) -> Self {
        CaptureSource {
            kind: SourceKind::LiveAdapter(adapter),
            local_network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub device_count: usize,
    /// Every record read, attributed or not.
    pub packet_count: u64,
    /// Records that could not be attributed: non-IP, malformed, traffic
    /// with no LAN endpoint, or a trailing truncated record.
    pub dropped: u64,
    pub span: Option<Span>,
}

/// Accumulates frames into per-device packet lists.
pub struct TraceAssembler {
    local: LocalNetwork,
    packets: BTreeMap<MacAddr, (Option<IpAddr>, Vec<PacketRecord>)>,
    records: u64,
    dropped: u64,
    first: Option<Timestamp>,
    last: Option<Timestamp>,
}

impl TraceAssembler {
    pub fn new(local: LocalNetwork) -> Result<Self, CaptureError> {
        if local.is_empty() {
            return Err(CaptureError::InvalidParameter(
                "direction inference needs at least one local network prefix".into(),
            ));
        }
        Ok(TraceAssembler {
            local,
            packets: BTreeMap::new(),
            records: 0,
            dropped: 0,
            first: None,
            last: None,
        })
    }

    /// Maps a frame to its LAN-side device and direction.
    pub fn classify(&self, summary: &FrameSummary) -> Option<(DeviceAddress, Direction)> {
        if self.local.contains(&summary.src_ip) {
            Some((
                DeviceAddress::new(summary.src_mac, Some(summary.src_ip)),
                Direction::Outbound,
            ))
        } else if self.local.contains(&summary.dst_ip) {
            Some((
                DeviceAddress::new(summary.dst_mac, Some(summary.dst_ip)),
                Direction::Inbound,
            ))
        } else {
            None
        }
    }

    pub fn push(&mut self, frame: &RawFrame) {
        self.records += 1;
        let attributed = parse_ethernet(&frame.data)
            .ok()
            .and_then(|s| self.classify(&s).map(|(dev, dir)| (dev, dir, s.payload_len)));
        let Some((device, direction, payload_size)) = attributed else {
            self.dropped += 1;
            return;
        };
        let entry = self
            .packets
            .entry(device.hardware_id)
            .or_insert_with(|| (device.network_id, Vec::new()));
        let device = DeviceAddress::new(device.hardware_id, entry.0);
        entry.1.push(PacketRecord {
            timestamp: frame.timestamp,
            payload_size,
            device,
            direction,
        });
        self.first = Some(self.first.map_or(frame.timestamp, |t| t.min(frame.timestamp)));
        self.last = Some(self.last.map_or(frame.timestamp, |t| t.max(frame.timestamp)));
    }

    /// Counts a record that could not be read at all.
    pub fn note_unreadable(&mut self) {
        self.records += 1;
        self.dropped += 1;
    }

    /// Builds the traces. Every trace spans the whole capture unless a wider
    /// span is given.
    pub fn finish(
        self,
        span: Option<Span>,
    ) -> Result<(BTreeMap<DeviceAddress, DeviceTrace>, IngestReport), CaptureError> {
        let observed = match (self.first, self.last) {
            (Some(a), Some(b)) => Some(Span { start: a, end: b }),
            _ => None,
        };
        let span = match (span, observed) {
            (Some(s), Some(o)) => Some(s.hull(&o)),
            (s, o) => s.or(o),
        };
        let mut traces = BTreeMap::new();
        for (mac, (ip, packets)) in self.packets {
            let device = DeviceAddress::new(mac, ip);
            let span = span.expect("span exists whenever packets do");
            traces.insert(device, DeviceTrace::from_unsorted(device, packets, span)?);
        }
        let report = IngestReport {
            device_count: traces.len(),
            packet_count: self.records,
            dropped: self.dropped,
            span,
        };
        Ok((traces, report))
    }
}

/// Reads every frame from the source and groups the IP frames by LAN-side
/// device. A truncated trailing record ends ingestion early and is counted
/// as dropped.
pub fn ingest(source: CaptureSource) -> Result<(BTreeMap<DeviceAddress, DeviceTrace>, IngestReport), CaptureError> {
    let mut asm = TraceAssembler::new(source.local_network)?;
    let mut adapter: Box<dyn FrameSource> = match source.kind {
        SourceKind::PcapFile(path) => Box::new(PcapFileSource::open(path)?),
        SourceKind::LiveAdapter(a) => a,
    };
    loop {
        match adapter.poll_frame() {
            Ok(FramePoll::Frame(f)) => asm.push(&f),
            Ok(FramePoll::Pending) => std::thread::sleep(std::time::Duration::from_millis(10)),
            Ok(FramePoll::Closed) => break,
            Err(PcapError::Truncated(_)) | Err(PcapError::OversizedRecord(_)) => {
                asm.note_unreadable();
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    asm.finish(None)
}

/// Timestamp-sorted union of two traces of the same device.
///
/// A trace with no packets and a zero-length span is the identity.
pub fn merge_traces(a: &DeviceTrace, b: &DeviceTrace) -> Result<DeviceTrace, ModelError> {
    if a.device() != b.device() {
        return Err(ModelError::DeviceMismatch(
            a.device().hardware_id,
            b.device().hardware_id,
        ));
    }
    if b.is_void() {
        return Ok(a.clone());
    }
    if a.is_void() {
        return Ok(b.clone());
    }
    let (pa, pb) = (a.packets(), b.packets());
    let mut merged = Vec::with_capacity(pa.len() + pb.len());
    let (mut i, mut j) = (0, 0);
    while i < pa.len() && j < pb.len() {
        if pb[j].timestamp < pa[i].timestamp {
            merged.push(pb[j]);
            j += 1;
        } else {
            merged.push(pa[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&pa[i..]);
    merged.extend_from_slice(&pb[j..]);
    let device = if a.device().network_id.is_some() {
        *a.device()
    } else {
        *b.device()
    };
    for p in &mut merged {
        p.device = device;
    }
    DeviceTrace::new(device, merged, a.span().hull(&b.span()))
}

/// On-disk form of one trace in `traces.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub device: MacAddr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<IpAddr>,
    pub span: SpanRecord,
    pub packets: Vec<PacketEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start_us: u64,
    pub end_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketEntry {
    pub t_us: u64,
    pub size: u32,
    pub dir: Direction,
}

impl From<&DeviceTrace> for TraceRecord {
    fn from(trace: &DeviceTrace) -> Self {
        let span = trace.span();
        TraceRecord {
            device: trace.device().hardware_id,
            ip: trace.device().network_id,
            span: SpanRecord {
                start_us: span.start.as_micros(),
                end_us: span.end.as_micros(),
            },
            packets: trace
                .packets()
                .iter()
                .map(|p| PacketEntry {
                    t_us: p.timestamp.as_micros(),
                    size: p.payload_size,
                    dir: p.direction,
                })
                .collect(),
        }
    }
}

impl TryFrom<TraceRecord> for DeviceTrace {
    type Error = ModelError;

    fn try_from(rec: TraceRecord) -> Result<Self, Self::Error> {
        let device = DeviceAddress::new(rec.device, rec.ip);
        let span = Span::new(
            Timestamp::from_micros(rec.span.start_us),
            Timestamp::from_micros(rec.span.end_us),
        )?;
        let packets = rec
            .packets
            .into_iter()
            .map(|p| PacketRecord {
                timestamp: Timestamp::from_micros(p.t_us),
                payload_size: p.size,
                device,
                direction: p.dir,
            })
            .collect();
        DeviceTrace::new(device, packets, span)
    }
}

pub fn write_traces_json<'a>(
    path: &Path,
    traces: impl IntoIterator<Item = &'a DeviceTrace>,
) -> Result<(), CaptureError> {
    let records: Vec<TraceRecord> = traces.into_iter().map(TraceRecord::from).collect();
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &records)?;
    Ok(())
}

pub fn read_traces_json(path: &Path) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, CaptureError> {
    let records: Vec<TraceRecord> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    traces_from_records(records)
}

pub fn traces_from_records(records: Vec<TraceRecord>) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, CaptureError> {
    let mut out = BTreeMap::new();
    for rec in records {
        let trace = DeviceTrace::try_from(rec)?;
        out.insert(*trace.device(), trace);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::frame::build_udp_headers;
    use crate::capture::pcap::PcapWriter;

    fn dev(n: u8) -> DeviceAddress {
        DeviceAddress::from(MacAddr([2, 0, 0, 0, 0, n]))
    }

    fn trace(n: u8, times: &[u64], span: (u64, u64)) -> DeviceTrace {
        let packets = times
            .iter()
            .map(|&t| PacketRecord {
                timestamp: Timestamp::from_micros(t),
                payload_size: t as u32 % 1000,
                device: dev(n),
                direction: Direction::Outbound,
            })
            .collect();
        DeviceTrace::new(
            dev(n),
            packets,
            Span::new(Timestamp::from_micros(span.0), Timestamp::from_micros(span.1)).unwrap(),
        )
        .unwrap()
    }

    fn lan() -> LocalNetwork {
        LocalNetwork::parse("192.168.0.0/16").unwrap()
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let x = trace(1, &[1, 5, 9], (0, 10));
        let void = DeviceTrace::empty(dev(1), Span::new(Timestamp::ZERO, Timestamp::ZERO).unwrap());
        assert_eq!(merge_traces(&x, &void).unwrap(), x);
        assert_eq!(merge_traces(&void, &x).unwrap(), x);

        let y = trace(1, &[2, 5, 7, 20], (2, 30));
        let xy = merge_traces(&x, &y).unwrap();
        let yx = merge_traces(&y, &x).unwrap();
        let mut a: Vec<_> = xy.packets().iter().map(|p| (p.timestamp, p.payload_size)).collect();
        let mut b: Vec<_> = yx.packets().iter().map(|p| (p.timestamp, p.payload_size)).collect();
        assert!(a.windows(2).all(|w| w[0].0 <= w[1].0));
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(
            xy.span(),
            Span::new(Timestamp::ZERO, Timestamp::from_micros(30)).unwrap()
        );
    }

    #[test]
    fn merge_rejects_other_device() {
        let x = trace(1, &[1], (0, 2));
        let y = trace(2, &[1], (0, 2));
        assert!(matches!(merge_traces(&x, &y), Err(ModelError::DeviceMismatch(..))));
    }

    #[test]
    fn empty_pcap_gives_empty_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pcap");
        PcapWriter::new(File::create(&path).unwrap(), 96)
            .unwrap()
            .into_inner()
            .unwrap();
        let (traces, report) = ingest(CaptureSource::pcap_file(&path, lan())).unwrap();
        assert!(traces.is_empty());
        assert_eq!(report.packet_count, 0);
        assert_eq!(report.dropped, 0);
        assert_eq!(report.span, None);
    }

    #[test]
    fn arp_frame_is_dropped_and_directions_inferred() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.pcap");
        let mut w = PcapWriter::new(File::create(&path).unwrap(), 96).unwrap();
        let lan_mac = MacAddr([2, 0, 0, 0, 0, 7]);
        let gw = MacAddr([2, 0, 0, 0, 0, 0xfe]);
        let lan_ip: IpAddr = "192.168.1.7".parse().unwrap();
        let cloud: IpAddr = "52.0.0.1".parse().unwrap();
        let out = build_udp_headers(lan_mac, gw, lan_ip, cloud, 300).unwrap();
        let inb = build_udp_headers(gw, lan_mac, cloud, lan_ip, 40).unwrap();
        let mut arp = vec![0xff; 6];
        arp.extend_from_slice(&lan_mac.0);
        arp.extend_from_slice(&[0x08, 0x06]);
        arp.extend_from_slice(&[0; 28]);
        w.write_frame(Timestamp::from_micros(100), &out, out.len() as u32 + 300)
            .unwrap();
        w.write_frame(Timestamp::from_micros(150), &arp, arp.len() as u32)
            .unwrap();
        w.write_frame(Timestamp::from_micros(200), &inb, inb.len() as u32 + 40)
            .unwrap();
        w.into_inner().unwrap();

        let (traces, report) = ingest(CaptureSource::pcap_file(&path, lan())).unwrap();
        assert_eq!(report.dropped, 1);
        assert_eq!(report.packet_count, 3);
        assert_eq!(traces.len(), 1);
        let t = &traces[&DeviceAddress::from(lan_mac)];
        assert_eq!(t.device().network_id, Some(lan_ip));
        let got: Vec<_> = t.packets().iter().map(|p| (p.payload_size, p.direction)).collect();
        assert_eq!(got, vec![(300, Direction::Outbound), (40, Direction::Inbound)]);
    }

    #[test]
    fn truncated_tail_keeps_partial_result() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.pcap");
        let mut w = PcapWriter::new(Vec::new(), 96).unwrap();
        let f = build_udp_headers(
            MacAddr([2, 0, 0, 0, 0, 1]),
            MacAddr([2, 0, 0, 0, 0, 2]),
            "192.168.0.1".parse().unwrap(),
            "8.8.8.8".parse().unwrap(),
            10,
        )
        .unwrap();
        w.write_frame(Timestamp::from_micros(1), &f, 52).unwrap();
        w.write_frame(Timestamp::from_micros(2), &f, 52).unwrap();
        let mut bytes = w.into_inner().unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, bytes).unwrap();
        let (traces, report) = ingest(CaptureSource::pcap_file(&path, lan())).unwrap();
        assert_eq!(traces.values().map(DeviceTrace::len).sum::<usize>(), 1);
        assert_eq!(report.dropped, 1);
        assert_eq!(report.packet_count, 2);
    }

    #[test]
    fn malformed_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.pcap");
        std::fs::write(&path, b"definitely not a pcap file....").unwrap();
        assert!(matches!(
            ingest(CaptureSource::pcap_file(&path, lan())),
            Err(CaptureError::Format(PcapError::BadMagic(_)))
        ));
    }

    #[test]
    fn empty_local_network_is_rejected() {
        assert!(TraceAssembler::new(LocalNetwork::default()).is_err());
    }

    #[test]
    fn traces_json_keeps_field_order() {
        let t = trace(3, &[5], (0, 10));
        let json = serde_json::to_string(&TraceRecord::from(&t)).unwrap();
        assert_eq!(
            json,
            r#"{"device":"02:00:00:00:00:03","span":{"start_us":0,"end_us":10},"packets":[{"t_us":5,"size":5,"dir":"out"}]}"#
        );
        let back = DeviceTrace::try_from(serde_json::from_str::<TraceRecord>(&json).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
