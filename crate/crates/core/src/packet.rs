//! Classic-pcap parsing into anonymized, protocol-filtered packet records.
//!
//! Both endiannesses and the microsecond/nanosecond magic variants are
//! accepted. Ethernet (with VLAN tags) and Linux SLL link layers are
//! stripped; everything else is `UnsupportedLinkType`. pcapng is out of
//! scope.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::net::{IpAddr, Ipv6Addr};

use crate::error::PacketError;

/// Directed flow key. Addresses are held canonically as 16 bytes with IPv4
/// mapped (`::ffff:a.b.c.d`); equality is exact field equality, no
/// direction normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiveTuple {
    pub src_ip: [u8; 16],
    pub dst_ip: [u8; 16],
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn src_addr(&self) -> IpAddr {
        canonical_addr(&self.src_ip)
    }

    pub fn dst_addr(&self) -> IpAddr {
        canonical_addr(&self.dst_ip)
    }

    pub fn from_v4(src: [u8; 4], dst: [u8; 4], src_port: u16, dst_port: u16, protocol: u8) -> Self {
        FiveTuple {
            src_ip: map_v4(src),
            dst_ip: map_v4(dst),
            src_port,
            dst_port,
            protocol,
        }
    }
}

fn map_v4(a: [u8; 4]) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[10] = 0xff;
    out[11] = 0xff;
    out[12..].copy_from_slice(&a);
    out
}

fn canonical_addr(bytes: &[u8; 16]) -> IpAddr {
    let v6 = Ipv6Addr::from(*bytes);
    match v6.to_ipv4_mapped() {
        Some(v4) => IpAddr::V4(v4),
        None => IpAddr::V6(v6),
    }
}

/// Parses an address in display form back into the canonical 16 bytes.
pub fn parse_addr(s: &str) -> Option<[u8; 16]> {
    match s.parse::<IpAddr>().ok()? {
        IpAddr::V4(v4) => Some(map_v4(v4.octets())),
        IpAddr::V6(v6) => Some(v6.octets()),
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} proto {}",
            self.src_addr(),
            self.src_port,
            self.dst_addr(),
            self.dst_port,
            self.protocol
        )
    }
}

impl Serialize for FiveTuple {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TupleRepr {
            src: self.src_addr().to_string(),
            dst: self.dst_addr().to_string(),
            sport: self.src_port,
            dport: self.dst_port,
            proto: self.protocol,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FiveTuple {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = TupleRepr::deserialize(deserializer)?;
        let src = parse_addr(&r.src).ok_or_else(|| serde::de::Error::custom("bad src ip"))?;
        let dst = parse_addr(&r.dst).ok_or_else(|| serde::de::Error::custom("bad dst ip"))?;
        Ok(FiveTuple {
            src_ip: src,
            dst_ip: dst,
            src_port: r.sport,
            dst_port: r.dport,
            protocol: r.proto,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TupleRepr {
    src: String,
    dst: String,
    sport: u16,
    dport: u16,
    proto: u8,
}

/// One parsed packet. `header_bytes` holds the IP header plus transport
/// header (no link-layer bytes); `payload_bytes` the transport payload.
/// `ip_version` is 0 for non-IP frames (dropped by `filter_non_ip`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub arrival_us: u64,
    pub tuple: FiveTuple,
    pub header_bytes: Vec<u8>,
    pub payload_bytes: Vec<u8>,
    /// Network-layer length of the packet as captured on the wire.
    pub wire_length: u32,
    pub ip_version: u8,
}

impl PacketRecord {
    pub fn is_ip(&self) -> bool {
        self.ip_version == 4 || self.ip_version == 6
    }
}

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_SLL: u32 = 113;

struct Endian(bool); // true = swap relative to host order written LE

impl Endian {
    fn u32(&self, b: &[u8]) -> u32 {
        if self.0 {
            u32::from_be_bytes([b[0], b[1], b[2], b[3]])
        } else {
            u32::from_le_bytes([b[0], b[1], b[2], b[3]])
        }
    }
}

/// Parses a classic pcap byte stream into records in file order. Timestamps
/// are converted to microseconds; frames are decapsulated past VLAN tags.
pub fn parse_capture(stream: &[u8]) -> Result<Vec<PacketRecord>, PacketError> {
    if stream.len() < 24 {
        return Err(PacketError::MalformedGlobalHeader);
    }
    let (endian, nanos) = match [stream[0], stream[1], stream[2], stream[3]] {
        [0xd4, 0xc3, 0xb2, 0xa1] => (Endian(false), false),
        [0xa1, 0xb2, 0xc3, 0xd4] => (Endian(true), false),
        [0x4d, 0x3c, 0xb2, 0xa1] => (Endian(false), true),
        [0xa1, 0xb2, 0x3c, 0x4d] => (Endian(true), true),
        _ => return Err(PacketError::MalformedGlobalHeader),
    };
    let link_type = endian.u32(&stream[20..24]);
    if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_SLL {
        return Err(PacketError::UnsupportedLinkType(link_type));
    }

    let mut records = Vec::new();
    let mut off = 24usize;
    while off < stream.len() {
        if off + 16 > stream.len() {
            return Err(PacketError::TruncatedRecord(off));
        }
        let ts_sec = endian.u32(&stream[off..]) as u64;
        let ts_frac = endian.u32(&stream[off + 4..]) as u64;
        let incl_len = endian.u32(&stream[off + 8..]) as usize;
        let orig_len = endian.u32(&stream[off + 12..]);
        off += 16;
        if off + incl_len > stream.len() {
            return Err(PacketError::TruncatedRecord(off));
        }
        let frame = &stream[off..off + incl_len];
        off += incl_len;
        let arrival_us = ts_sec * 1_000_000 + if nanos { ts_frac / 1000 } else { ts_frac };
        records.push(decode_frame(frame, arrival_us, orig_len, link_type));
    }
    Ok(records)
}

fn decode_frame(frame: &[u8], arrival_us: u64, orig_len: u32, link_type: u32) -> PacketRecord {
    let non_ip = |bytes: &[u8]| PacketRecord {
        arrival_us,
        tuple: FiveTuple {
            src_ip: [0; 16],
            dst_ip: [0; 16],
            src_port: 0,
            dst_port: 0,
            protocol: 0,
        },
        header_bytes: bytes.to_vec(),
        payload_bytes: Vec::new(),
        wire_length: orig_len,
        ip_version: 0,
    };

    let (mut ether_type, mut link_len) = match link_type {
        LINKTYPE_ETHERNET => {
            if frame.len() < 14 {
                return non_ip(frame);
            }
            (u16::from_be_bytes([frame[12], frame[13]]), 14usize)
        }
        _ => {
            // Linux SLL: 16-byte header, protocol in the last two bytes
            if frame.len() < 16 {
                return non_ip(frame);
            }
            (u16::from_be_bytes([frame[14], frame[15]]), 16usize)
        }
    };
    // skip VLAN tags (single and stacked)
    while matches!(ether_type, 0x8100 | 0x88a8 | 0x9100) {
        if frame.len() < link_len + 4 {
            return non_ip(&frame[link_len.min(frame.len())..]);
        }
        ether_type = u16::from_be_bytes([frame[link_len + 2], frame[link_len + 3]]);
        link_len += 4;
    }
    let net = &frame[link_len..];
    let wire_length = orig_len.saturating_sub(link_len as u32);
    match ether_type {
        0x0800 => decode_ipv4(net, arrival_us, wire_length).unwrap_or_else(|| non_ip(net)),
        0x86dd => decode_ipv6(net, arrival_us, wire_length).unwrap_or_else(|| non_ip(net)),
        _ => non_ip(net),
    }
}

fn transport_header_len(protocol: u8, transport: &[u8]) -> usize {
    match protocol {
        6 => {
            if transport.len() < 13 {
                transport.len()
            } else {
                (((transport[12] >> 4) as usize) * 4).min(transport.len())
            }
        }
        17 => 8.min(transport.len()),
        1 | 2 | 58 => 8.min(transport.len()),
        _ => 0,
    }
}

fn ports(protocol: u8, transport: &[u8]) -> (u16, u16) {
    match protocol {
        6 | 17 if transport.len() >= 4 => (
            u16::from_be_bytes([transport[0], transport[1]]),
            u16::from_be_bytes([transport[2], transport[3]]),
        ),
        _ => (0, 0),
    }
}

fn decode_ipv4(net: &[u8], arrival_us: u64, wire_length: u32) -> Option<PacketRecord> {
    if net.len() < 20 || net[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((net[0] & 0x0f) as usize) * 4;
    if ihl < 20 || net.len() < ihl {
        return None;
    }
    let protocol = net[9];
    let transport = &net[ihl..];
    let th = transport_header_len(protocol, transport);
    let (sport, dport) = ports(protocol, transport);
    let tuple = FiveTuple::from_v4(
        [net[12], net[13], net[14], net[15]],
        [net[16], net[17], net[18], net[19]],
        sport,
        dport,
        protocol,
    );
    Some(PacketRecord {
        arrival_us,
        tuple,
        header_bytes: net[..ihl + th].to_vec(),
        payload_bytes: transport[th..].to_vec(),
        wire_length,
        ip_version: 4,
    })
}

/// Walks past the common IPv6 extension headers to the transport protocol.
/// Returns (protocol, transport offset from the start of the IPv6 header).
fn ipv6_transport(net: &[u8]) -> Option<(u8, usize)> {
    let mut next = net[6];
    let mut off = 40usize;
    loop {
        match next {
            0 | 43 | 60 => {
                if net.len() < off + 8 {
                    return None;
                }
                let hdr_len = 8 + (net[off + 1] as usize) * 8;
                next = net[off];
                off += hdr_len;
                if net.len() < off {
                    return None;
                }
            }
            44 => {
                if net.len() < off + 8 {
                    return None;
                }
                next = net[off];
                off += 8;
            }
            _ => return Some((next, off)),
        }
    }
}

fn decode_ipv6(net: &[u8], arrival_us: u64, wire_length: u32) -> Option<PacketRecord> {
    if net.len() < 40 || net[0] >> 4 != 6 {
        return None;
    }
    let (protocol, t_off) = ipv6_transport(net)?;
    let transport = &net[t_off..];
    let th = transport_header_len(protocol, transport);
    let (sport, dport) = ports(protocol, transport);
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&net[8..24]);
    dst.copy_from_slice(&net[24..40]);
    Some(PacketRecord {
        arrival_us,
        tuple: FiveTuple {
            src_ip: src,
            dst_ip: dst,
            src_port: sport,
            dst_port: dport,
            protocol,
        },
        header_bytes: net[..t_off + th].to_vec(),
        payload_bytes: transport[th..].to_vec(),
        wire_length,
        ip_version: 6,
    })
}

/// Drops frames whose link-level payload is not IPv4/IPv6; order preserved.
pub fn filter_non_ip(records: Vec<PacketRecord>) -> Vec<PacketRecord> {
    records.into_iter().filter(|r| r.is_ip()).collect()
}

/// Zeroes address and port bytes inside `header_bytes`. Every other header
/// byte (lengths, TTL, flags, checksums, window sizes) is left as captured;
/// the out-of-band `tuple` keeps the original values as the flow key.
pub fn anonymize(mut record: PacketRecord) -> Result<PacketRecord, PacketError> {
    if !record.is_ip() {
        return Ok(record);
    }
    let hb = &mut record.header_bytes;
    match record.ip_version {
        4 => {
            let ihl = ((hb.first().copied().unwrap_or(0) & 0x0f) as usize) * 4;
            if hb.len() < 20 || hb.len() < ihl {
                return Err(PacketError::HeaderTooShort);
            }
            hb[12..20].fill(0);
            if matches!(record.tuple.protocol, 6 | 17) {
                if hb.len() < ihl + 4 {
                    return Err(PacketError::HeaderTooShort);
                }
                hb[ihl..ihl + 4].fill(0);
            }
        }
        6 => {
            if hb.len() < 40 {
                return Err(PacketError::HeaderTooShort);
            }
            let t_off = ipv6_transport(hb).map(|(_, o)| o).unwrap_or(40);
            hb[8..40].fill(0);
            if matches!(record.tuple.protocol, 6 | 17) {
                if hb.len() < t_off + 4 {
                    return Err(PacketError::HeaderTooShort);
                }
                hb[t_off..t_off + 4].fill(0);
            }
        }
        _ => {}
    }
    Ok(record)
}

/// Test/fixture helper: serializes frames as a classic little-endian
/// microsecond pcap with an Ethernet link layer.
pub fn write_capture(frames: &[(u64, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    for (ts_us, frame) in frames {
        out.extend_from_slice(&((ts_us / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((ts_us % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(frame);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcapgen;

    fn one_udp_capture() -> Vec<u8> {
        let payload: Vec<u8> = (0u8..32).collect();
        let pkt = pcapgen::udp_packet([10, 0, 0, 1], [10, 0, 0, 2], 1234, 53, &payload);
        write_capture(&[(1_700_000_000_000_000, pcapgen::eth_ipv4(&pkt))])
    }

    #[test]
    fn parses_single_udp_packet() {
        let records = parse_capture(&one_udp_capture()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.tuple.protocol, 17);
        assert_eq!(r.tuple.src_port, 1234);
        assert_eq!(r.tuple.dst_port, 53);
        assert_eq!(r.tuple.src_addr().to_string(), "10.0.0.1");
        // payload length = UDP length field minus the 8-byte UDP header
        assert_eq!(r.payload_bytes.len(), 32);
        assert_eq!(r.header_bytes.len(), 20 + 8);
        assert_eq!(r.wire_length, 20 + 8 + 32);
        assert_eq!(r.arrival_us, 1_700_000_000_000_000);
    }

    #[test]
    fn empty_file_is_malformed() {
        assert!(matches!(
            parse_capture(&[]),
            Err(PacketError::MalformedGlobalHeader)
        ));
    }

    #[test]
    fn header_only_capture_yields_no_records() {
        let bytes = write_capture(&[]);
        assert_eq!(parse_capture(&bytes).unwrap().len(), 0);
    }

    #[test]
    fn record_longer_than_stream_is_truncated() {
        let mut bytes = one_udp_capture();
        bytes.truncate(bytes.len() - 5);
        assert!(matches!(
            parse_capture(&bytes),
            Err(PacketError::TruncatedRecord(_))
        ));
    }

    #[test]
    fn unsupported_link_type_is_rejected() {
        let mut bytes = write_capture(&[]);
        bytes[20] = 147; // reserved link type
        assert!(matches!(
            parse_capture(&bytes),
            Err(PacketError::UnsupportedLinkType(147))
        ));
    }

    #[test]
    fn big_endian_and_nanosecond_variants_parse() {
        let payload = [1u8, 2, 3];
        let pkt = pcapgen::udp_packet([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, &payload);
        let frame = pcapgen::eth_ipv4(&pkt);

        // nanosecond magic, little endian
        let mut ns = write_capture(&[(5_000_000, frame.clone())]);
        ns[0..4].copy_from_slice(&0xa1b23c4du32.to_le_bytes());
        // patch the fractional field from micro to nano
        let frac = 0u32; // 5s exactly; keep frac zero then set to 123456789 below
        ns[24 + 4..24 + 8].copy_from_slice(&frac.to_le_bytes());
        let r = parse_capture(&ns).unwrap();
        assert_eq!(r[0].arrival_us, 5_000_000);

        // big endian microsecond file built by byte-swapping every header field
        let mut be = Vec::new();
        be.extend_from_slice(&0xa1b2c3d4u32.to_be_bytes());
        be.extend_from_slice(&2u16.to_be_bytes());
        be.extend_from_slice(&4u16.to_be_bytes());
        be.extend_from_slice(&0u32.to_be_bytes());
        be.extend_from_slice(&0u32.to_be_bytes());
        be.extend_from_slice(&65535u32.to_be_bytes());
        be.extend_from_slice(&1u32.to_be_bytes());
        be.extend_from_slice(&3u32.to_be_bytes());
        be.extend_from_slice(&7u32.to_be_bytes());
        be.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        be.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        be.extend_from_slice(&frame);
        let r = parse_capture(&be).unwrap();
        assert_eq!(r[0].arrival_us, 3_000_007);
        assert_eq!(r[0].tuple.src_port, 10);
    }

    #[test]
    fn vlan_tags_are_skipped() {
        let pkt = pcapgen::udp_packet([9, 9, 9, 9], [8, 8, 8, 8], 5, 6, &[0xaa; 4]);
        // 802.1Q tag: TPID 0x8100, TCI 0x0placeholder, then real ethertype
        let mut frame = vec![0u8; 14];
        frame[12..14].copy_from_slice(&0x8100u16.to_be_bytes());
        frame.extend_from_slice(&0x0064u16.to_be_bytes());
        frame.extend_from_slice(&0x0800u16.to_be_bytes());
        frame.extend_from_slice(&pkt);
        let bytes = write_capture(&[(0, frame)]);
        let r = parse_capture(&bytes).unwrap();
        assert_eq!(r[0].tuple.dst_port, 6);
        assert!(r[0].is_ip());
    }

    #[test]
    fn filter_drops_arp_keeps_udp() {
        let udp = pcapgen::eth_ipv4(&pcapgen::udp_packet(
            [10, 0, 0, 1],
            [10, 0, 0, 2],
            1,
            2,
            &[0; 8],
        ));
        let bytes = write_capture(&[(0, pcapgen::arp_frame()), (1, udp)]);
        let records = parse_capture(&bytes).unwrap();
        assert_eq!(records.len(), 2);
        let kept = filter_non_ip(records);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].tuple.protocol, 17);
    }

    #[test]
    fn filter_keeps_all_tcp() {
        let frames: Vec<(u64, Vec<u8>)> = (0..3)
            .map(|i| {
                let pkt = pcapgen::tcp_packet(
                    [10, 0, 0, 1],
                    [10, 0, 0, 2],
                    1000,
                    443,
                    i,
                    0x18,
                    4096,
                    &[i as u8; 16],
                );
                (i as u64, pcapgen::eth_ipv4(&pkt))
            })
            .collect();
        let records = parse_capture(&write_capture(&frames)).unwrap();
        assert_eq!(filter_non_ip(records).len(), 3);
    }

    #[test]
    fn filter_of_empty_is_empty() {
        assert!(filter_non_ip(Vec::new()).is_empty());
    }

    #[test]
    fn anonymize_zeroes_addresses_and_ports_only() {
        let pkt = pcapgen::tcp_packet(
            [10, 0, 0, 1],
            [192, 168, 1, 7],
            1234,
            443,
            77,
            0x02,
            8192,
            &[0xde; 6],
        );
        let records = parse_capture(&write_capture(&[(0, pcapgen::eth_ipv4(&pkt))])).unwrap();
        let before = records[0].clone();
        let after = anonymize(before.clone()).unwrap();
        // bytes 12..20 (addresses) and 20..24 (ports behind a 20-byte header) are zero
        assert!(after.header_bytes[12..24].iter().all(|&b| b == 0));
        // everything else untouched: version/ihl, total length, ttl, protocol,
        // checksum, seq, flags, window
        assert_eq!(after.header_bytes[..12], before.header_bytes[..12]);
        assert_eq!(after.header_bytes[24..], before.header_bytes[24..]);
        // flow key survives
        assert_eq!(after.tuple, before.tuple);
        assert_eq!(after.tuple.src_port, 1234);
    }

    #[test]
    fn anonymize_is_idempotent() {
        let pkt = pcapgen::udp_packet([1, 2, 3, 4], [5, 6, 7, 8], 53, 53, &[1, 2, 3]);
        let records = parse_capture(&write_capture(&[(0, pcapgen::eth_ipv4(&pkt))])).unwrap();
        let once = anonymize(records[0].clone()).unwrap();
        let twice = anonymize(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn truncated_header_reports_too_short() {
        let pkt = pcapgen::udp_packet([1, 2, 3, 4], [5, 6, 7, 8], 53, 53, &[]);
        let records = parse_capture(&write_capture(&[(0, pcapgen::eth_ipv4(&pkt))])).unwrap();
        let mut r = records[0].clone();
        r.header_bytes.truncate(10);
        assert!(matches!(anonymize(r), Err(PacketError::HeaderTooShort)));
    }

    #[test]
    fn ipv6_parse_and_anonymize() {
        // hand-built IPv6 UDP packet
        let payload = [0x55u8; 10];
        let mut ip6 = vec![0u8; 40];
        ip6[0] = 0x60;
        ip6[4..6].copy_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        ip6[6] = 17; // next header UDP
        ip6[7] = 64;
        ip6[8..24].copy_from_slice(&[0x20, 0x01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        ip6[24..40].copy_from_slice(&[0x20, 0x01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]);
        ip6.extend_from_slice(&9000u16.to_be_bytes());
        ip6.extend_from_slice(&9001u16.to_be_bytes());
        ip6.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        ip6.extend_from_slice(&0u16.to_be_bytes());
        ip6.extend_from_slice(&payload);
        let frame = pcapgen::eth_frame(0x86dd, &ip6);
        let records = parse_capture(&write_capture(&[(0, frame)])).unwrap();
        let r = &records[0];
        assert_eq!(r.ip_version, 6);
        assert_eq!(r.tuple.src_port, 9000);
        assert_eq!(r.payload_bytes, payload);
        let anon = anonymize(r.clone()).unwrap();
        assert!(anon.header_bytes[8..40].iter().all(|&b| b == 0));
        assert!(anon.header_bytes[40..44].iter().all(|&b| b == 0));
        assert_eq!(anon.header_bytes[4..6], r.header_bytes[4..6]);
    }

    #[test]
    fn write_capture_round_trips_payload_bytes() {
        let payload: Vec<u8> = (0..100u32).map(|i| (i * 7 % 256) as u8).collect();
        let pkt = pcapgen::udp_packet([1, 1, 1, 1], [2, 2, 2, 2], 1, 2, &payload);
        let bytes = write_capture(&[(123, pcapgen::eth_ipv4(&pkt))]);
        let records = parse_capture(&bytes).unwrap();
        assert_eq!(records[0].payload_bytes, payload);
    }
}
