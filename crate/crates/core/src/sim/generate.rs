//! Trace generation and pcap export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{fnv1a, DeviceModel, IdleBurst, MAX_PACKET, MIN_PACKET};
use super::scenario::Scenario;
use super::SimError;
use crate::capture::frame::build_udp_headers;
use crate::capture::pcap::PcapWriter;
use crate::model::{
    secs_to_micros, AudioLabel, DeviceAddress, DeviceTrace, Direction, LabeledTraceSet, PacketRecord, Span, Timestamp,
};

/// Snap length of exported captures: enough for Ethernet + IPv4/IPv6 + UDP.
pub const EXPORT_SNAPLEN: u32 = 96;

const STREAM_EVENTS: u64 = 1;
const STREAM_AUDIO: u64 = 2;
const STREAM_BURSTS: u64 = 16;

fn device_rng(seed: u64, device: &DeviceModel, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(device.name.as_bytes()));
    rng.set_stream(stream);
    rng
}

struct Emitter {
    device: DeviceAddress,
    end_us: u64,
    packets: Vec<PacketRecord>,
}

impl Emitter {
    fn push(&mut self, t: f64, size: u32, direction: Direction) {
        if t < 0.0 {
            return;
        }
        let us = secs_to_micros(t);
        if us > self.end_us {
            return;
        }
        self.packets.push(PacketRecord {
            timestamp: Timestamp::from_micros(us),
            payload_size: size,
            device: self.device,
            direction,
        });
    }
}

fn idle_burst_traffic(out: &mut Emitter, burst: &IdleBurst, duration: f64, rng: &mut ChaCha8Rng) {
    let mut t = rng.random_range(0.0..burst.period);
    while t <= duration {
        let target = burst.bytes.sample(rng).max(1.0);
        let mut sent = 0.0;
        let mut sizes = Vec::new();
        while sent < target {
            let s = burst.packet_size.sample_size(rng, MIN_PACKET, MAX_PACKET);
            sent += f64::from(s);
            sizes.push(s);
        }
        let mut times: Vec<f64> = sizes.iter().map(|_| t + rng.random::<f64>() * burst.duration).collect();
        times.sort_by(f64::total_cmp);
        for (&ts, &size) in times.iter().zip(&sizes) {
            out.push(ts, size, Direction::Outbound);
            if rng.random::<f64>() < burst.inbound_ratio {
                let reply = burst.packet_size.sample_size(rng, MIN_PACKET, MAX_PACKET);
                out.push(ts + rng.random_range(0.01..0.08), reply, Direction::Inbound);
            }
        }
        let jitter = if burst.jitter > 0.0 {
            rng.random_range(-burst.jitter..burst.jitter)
        } else {
            0.0
        };
        t += burst.period * (1.0 + jitter);
    }
}

/// Background packets due while the device streams audio are held back
/// and sent right after the stream, compressed to a tenth of the delay.
fn defer_past_streams(t: Timestamp, streams: &[(f64, f64)]) -> Timestamp {
    let secs = t.as_secs_f64();
    let i = streams.partition_point(|s| s.0 <= secs);
    match i.checked_sub(1).map(|i| streams[i]) {
        Some((start, end)) if secs < end => Timestamp::from_secs_f64(end + (secs - start) * 0.1),
        _ => t,
    }
}

/// Generates every device's traffic and the audio labels.
///
/// Each device draws from its own random streams, keyed by the scenario
/// seed and the model name, so adding a device does not change the traffic
/// of the others.
pub fn simulate(scenario: &Scenario) -> Result<LabeledTraceSet, SimError> {
    scenario.validate()?;
    let span = Span::new(Timestamp::ZERO, Timestamp::from_secs_f64(scenario.duration))?;
    let mut set = LabeledTraceSet::default();
    for model in &scenario.devices {
        let device = DeviceAddress::new(model.mac(), Some(model.ip()));
        let mut out = Emitter {
            device,
            end_us: span.end.as_micros(),
            packets: Vec::new(),
        };
        let mut decide = device_rng(scenario.seed, model, STREAM_EVENTS);
        let mut audio_rng = device_rng(scenario.seed, model, STREAM_AUDIO);
        let mut streaming: Vec<(f64, f64)> = Vec::new();
        for event in &scenario.events {
            let p = model.activation_probability(event.kind.trigger());
            // One draw per event keeps the decision stream aligned.
            let u: f64 = decide.random();
            let Some(stream) = model.audio_stream.filter(|_| u < p) else {
                continue;
            };
            let start = event.time + stream.pre_roll;
            let end = (start + event.utterance + stream.trailer).min(scenario.duration);
            if start >= end {
                continue;
            }
            let mut t = start;
            while t < end {
                let size = stream.packet_size.sample_size(&mut audio_rng, 100, MAX_PACKET);
                out.push(t, size, Direction::Outbound);
                t += f64::from(size) * 8.0 / stream.bitrate;
            }
            streaming.push((start, end));
            set.labels.push(AudioLabel {
                device,
                start: Timestamp::from_secs_f64(start),
                end: Timestamp::from_secs_f64(end),
                cause: event.kind.trigger().to_string(),
            });
        }
        streaming.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut background = Emitter {
            device,
            end_us: span.end.as_micros(),
            packets: Vec::new(),
        };
        for (i, burst) in model.idle_bursts.iter().enumerate() {
            let mut rng = device_rng(scenario.seed, model, STREAM_BURSTS + i as u64);
            idle_burst_traffic(&mut background, burst, scenario.duration, &mut rng);
        }
        for mut p in background.packets {
            p.timestamp = defer_past_streams(p.timestamp, &streaming);
            if p.timestamp <= span.end {
                out.packets.push(p);
            }
        }
        let trace = DeviceTrace::from_unsorted(device, out.packets, span)?;
        set.traces.insert(device, trace);
    }
    set.labels.sort_by_key(|a| (a.start, a.device));
    Ok(set)
}

/// Writes all packets of the set as a classic pcap with synthetic
/// Ethernet/IP/UDP headers. Only headers are stored; the IP length fields
/// carry the payload size.
pub fn write_pcap(set: &LabeledTraceSet, path: &Path) -> Result<u64, SimError> {
    let file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    let written = write_pcap_to(set, file)?;
    Ok(written)
}

pub fn write_pcap_to<W: Write>(set: &LabeledTraceSet, out: W) -> Result<u64, SimError> {
    const GATEWAY: crate::model::MacAddr = crate::model::MacAddr([0x02, 0xfe, 0, 0, 0, 1]);
    let mut writer = PcapWriter::new(out, EXPORT_SNAPLEN)?;
    let remotes: BTreeMap<DeviceAddress, std::net::IpAddr> = set
        .traces
        .keys()
        .map(|d| {
            let h = fnv1a(&d.hardware_id.0).to_be_bytes();
            (
                *d,
                std::net::IpAddr::V4(std::net::Ipv4Addr::new(52, h[0], h[1], 1 + h[2] % 250)),
            )
        })
        .collect();
    let mut all: Vec<&PacketRecord> = set.traces.values().flat_map(|t| t.packets()).collect();
    all.sort_by_key(|p| p.timestamp);
    let mut count = 0;
    for p in all {
        let local = p
            .device
            .network_id
            .ok_or_else(|| SimError::InvalidScenario(format!("device {} has no IP address", p.device)))?;
        let remote = remotes[&p.device];
        let mac = p.device.hardware_id;
        let frame = match p.direction {
            Direction::Outbound => build_udp_headers(mac, GATEWAY, local, remote, p.payload_size),
            Direction::Inbound => build_udp_headers(GATEWAY, mac, remote, local, p.payload_size),
        }
        .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        writer.write_frame(p.timestamp, &frame, frame.len() as u32 + p.payload_size)?;
        count += 1;
    }
    writer.into_inner()?.flush()?;
    Ok(count)
}
