//! Minimal Ethernet / IPv4 / IPv6 header decoding and synthesis.
//!
//! Only the fields needed for attribution are read. Payload size comes from
//! the IP length fields, so headers-only captures still yield the on-wire
//! transport payload length.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use thiserror::Error;

use crate::model::MacAddr;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const PROTO_TCP: u8 = 6;
const PROTO_UDP: u8 = 17;

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const IPV4_HEADER_LEN: usize = 20;
pub const IPV6_HEADER_LEN: usize = 40;
pub const UDP_HEADER_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame carries ethertype {0:#06x}, not IP")]
    NotIp(u16),
    #[error("frame too short for its headers")]
    Malformed,
    #[error("payload of {0} bytes does not fit an IP datagram")]
    PayloadTooLarge(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSummary {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    /// Transport payload length as declared by the headers.
    pub payload_len: u32,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn mac_at(b: &[u8], at: usize) -> MacAddr {
    let mut m = [0u8; 6];
    m.copy_from_slice(&b[at..at + 6]);
    MacAddr(m)
}

/// Header length of the transport protocol, read from the capture when the
/// protocol carries it. Missing TCP options fall back to the 20-byte minimum.
fn transport_header_len(proto: u8, l4: &[u8]) -> u32 {
    match proto {
        PROTO_UDP => UDP_HEADER_LEN as u32,
        PROTO_TCP => match l4.get(12) {
            Some(b) => u32::from(b >> 4) * 4,
            None => 20,
        },
        _ => 0,
    }
}

pub fn parse_ethernet(data: &[u8]) -> Result<FrameSummary, FrameError> {
    if data.len() < ETHERNET_HEADER_LEN {
        return Err(FrameError::Malformed);
    }
    let dst_mac = mac_at(data, 0);
    let src_mac = mac_at(data, 6);
    let mut ethertype = be16(data, 12);
    let mut l3 = ETHERNET_HEADER_LEN;
    if ethertype == ETHERTYPE_VLAN {
        if data.len() < l3 + 4 {
            return Err(FrameError::Malformed);
        }
        ethertype = be16(data, l3 + 2);
        l3 += 4;
    }
    let ip = &data[l3..];
    match ethertype {
        ETHERTYPE_IPV4 => {
            if ip.len() < IPV4_HEADER_LEN || ip[0] >> 4 != 4 {
                return Err(FrameError::Malformed);
            }
            let ihl = usize::from(ip[0] & 0x0f) * 4;
            if ihl < IPV4_HEADER_LEN {
                return Err(FrameError::Malformed);
            }
            let total = u32::from(be16(ip, 2));
            let proto = ip[9];
            let src_ip = IpAddr::V4(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
            let dst_ip = IpAddr::V4(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));
            let l4 = ip.get(ihl..).unwrap_or(&[]);
            let payload_len = total
                .saturating_sub(ihl as u32)
                .saturating_sub(transport_header_len(proto, l4));
            Ok(FrameSummary {
                src_mac,
                dst_mac,
                src_ip,
                dst_ip,
                payload_len,
            })
        }
        ETHERTYPE_IPV6 => {
            if ip.len() < IPV6_HEADER_LEN || ip[0] >> 4 != 6 {
                return Err(FrameError::Malformed);
            }
            let payload = u32::from(be16(ip, 4));
            let proto = ip[6];
            let mut src = [0u8; 16];
            let mut dst = [0u8; 16];
            src.copy_from_slice(&ip[8..24]);
            dst.copy_from_slice(&ip[24..40]);
            let payload_len = payload.saturating_sub(transport_header_len(proto, &ip[IPV6_HEADER_LEN..]));
            Ok(FrameSummary {
                src_mac,
                dst_mac,
                src_ip: IpAddr::V6(Ipv6Addr::from(src)),
                dst_ip: IpAddr::V6(Ipv6Addr::from(dst)),
                payload_len,
            })
        }
        other => Err(FrameError::NotIp(other)),
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Builds the Ethernet + IP + UDP headers of a datagram carrying
/// `payload_len` bytes. The payload itself is not materialized; the returned
/// bytes are what a headers-only capture would store.
pub fn build_udp_headers(
    src_mac: MacAddr,
    dst_mac: MacAddr,
    src_ip: IpAddr,
    dst_ip: IpAddr,
    payload_len: u32,
) -> Result<Vec<u8>, FrameError> {
    let mut f = Vec::with_capacity(ETHERNET_HEADER_LEN + IPV6_HEADER_LEN + UDP_HEADER_LEN);
    f.extend_from_slice(&dst_mac.0);
    f.extend_from_slice(&src_mac.0);
    let udp_len = payload_len + UDP_HEADER_LEN as u32;
    match (src_ip, dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let total = udp_len + IPV4_HEADER_LEN as u32;
            let total = u16::try_from(total).map_err(|_| FrameError::PayloadTooLarge(payload_len))?;
            f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
            let mut ip = [0u8; IPV4_HEADER_LEN];
            ip[0] = 0x45;
            ip[2..4].copy_from_slice(&total.to_be_bytes());
            ip[6] = 0x40; // DF
            ip[8] = 64;
            ip[9] = PROTO_UDP;
            ip[12..16].copy_from_slice(&s.octets());
            ip[16..20].copy_from_slice(&d.octets());
            let csum = ipv4_checksum(&ip);
            ip[10..12].copy_from_slice(&csum.to_be_bytes());
            f.extend_from_slice(&ip);
        }
        (s, d) => {
            let to_v6 = |a: IpAddr| match a {
                IpAddr::V4(v4) => v4.to_ipv6_mapped(),
                IpAddr::V6(v6) => v6,
            };
            let len = u16::try_from(udp_len).map_err(|_| FrameError::PayloadTooLarge(payload_len))?;
            f.extend_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
            let mut ip = [0u8; IPV6_HEADER_LEN];
            ip[0] = 0x60;
            ip[4..6].copy_from_slice(&len.to_be_bytes());
            ip[6] = PROTO_UDP;
            ip[7] = 64;
            ip[8..24].copy_from_slice(&to_v6(s).octets());
            ip[24..40].copy_from_slice(&to_v6(d).octets());
            f.extend_from_slice(&ip);
        }
    }
    let udp_len = udp_len as u16;
    f.extend_from_slice(&49152u16.to_be_bytes());
    f.extend_from_slice(&443u16.to_be_bytes());
    f.extend_from_slice(&udp_len.to_be_bytes());
    f.extend_from_slice(&[0, 0]);
    Ok(f)
}
