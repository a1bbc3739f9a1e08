//! Classic libpcap container (not pcapng).
//!
//! Both byte orders and the microsecond/nanosecond magic variants are read.
//! The writer always emits little-endian microsecond files.

use std::io::{self, Read, Write};

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use thiserror::Error;

use crate::model::Timestamp;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a classic pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("pcap global header is truncated")]
    ShortHeader,
    #[error("unsupported link type {0}, only Ethernet (1) is handled")]
    UnsupportedLinkType(u32),
    #[error("truncated record after {0} complete records")]
    Truncated(u64),
    #[error("record declares {0} captured bytes, above the snap length")]
    OversizedRecord(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampPrecision {
    Micros,
    Nanos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub endianness: Endianness,
    pub precision: TimestampPrecision,
    pub version: (u16, u16),
    pub snaplen: u32,
    pub linktype: u32,
}

impl PcapHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self, PcapError> {
        if bytes.len() < GLOBAL_HEADER_LEN {
            return Err(PcapError::ShortHeader);
        }
        let le = LittleEndian::read_u32(&bytes[0..4]);
        let be = BigEndian::read_u32(&bytes[0..4]);
        let (endianness, precision) = match (le, be) {
            (MAGIC_MICROS, _) => (Endianness::Little, TimestampPrecision::Micros),
            (MAGIC_NANOS, _) => (Endianness::Little, TimestampPrecision::Nanos),
            (_, MAGIC_MICROS) => (Endianness::Big, TimestampPrecision::Micros),
            (_, MAGIC_NANOS) => (Endianness::Big, TimestampPrecision::Nanos),
            _ => return Err(PcapError::BadMagic(le)),
        };
        let u16_at = |o: usize| match endianness {
            Endianness::Little => LittleEndian::read_u16(&bytes[o..o + 2]),
            Endianness::Big => BigEndian::read_u16(&bytes[o..o + 2]),
        };
        let u32_at = |o: usize| match endianness {
            Endianness::Little => LittleEndian::read_u32(&bytes[o..o + 4]),
            Endianness::Big => BigEndian::read_u32(&bytes[o..o + 4]),
        };
        let linktype = u32_at(20);
        if linktype != LINKTYPE_ETHERNET {
            return Err(PcapError::UnsupportedLinkType(linktype));
        }
        Ok(PcapHeader {
            endianness,
            precision,
            version: (u16_at(4), u16_at(6)),
            snaplen: u32_at(16),
            linktype,
        })
    }

    fn read_u32(&self, bytes: &[u8]) -> u32 {
        match self.endianness {
            Endianness::Little => LittleEndian::read_u32(bytes),
            Endianness::Big => BigEndian::read_u32(bytes),
        }
    }
}

/// One captured link-layer frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub timestamp: Timestamp,
    /// Length of the frame on the wire.
    pub orig_len: u32,
    /// Captured bytes; may be shorter than `orig_len`.
    pub data: Vec<u8>,
}

// Larger than any sane snap length; guards against garbage length fields.
const MAX_RECORD: u32 = 256 * 1024;

/// Incremental reader over any byte stream.
///
/// Bytes are buffered internally so a reader over a growing file can retry
/// after a partial record without losing data (see [`PcapReader::poll_frame`]).
pub struct PcapReader<R> {
    inner: R,
    header: PcapHeader,
    buf: Vec<u8>,
    pos: usize,
    records: u64,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut head = [0u8; GLOBAL_HEADER_LEN];
        let mut filled = 0;
        while filled < GLOBAL_HEADER_LEN {
            let n = inner.read(&mut head[filled..])?;
            if n == 0 {
                return Err(PcapError::ShortHeader);
            }
            filled += n;
        }
        let header = PcapHeader::parse(&head)?;
        Ok(PcapReader {
            inner,
            header,
            buf: Vec::with_capacity(64 * 1024),
            pos: 0,
            records: 0,
        })
    }

    pub fn header(&self) -> &PcapHeader {
        &self.header
    }

    pub fn records_read(&self) -> u64 {
        self.records
    }

    /// Next frame, `Ok(None)` at a clean end of file. Leftover bytes that do
    /// not form a complete record are reported as [`PcapError::Truncated`].
    pub fn next_frame(&mut self) -> Result<Option<RawFrame>, PcapError> {
        match self.poll_frame()? {
            Some(frame) => Ok(Some(frame)),
            None if self.pos < self.buf.len() => Err(PcapError::Truncated(self.records)),
            None => Ok(None),
        }
    }

    /// Like [`next_frame`](Self::next_frame) but treats a partial record as
    /// "not yet written": returns `Ok(None)` and keeps the bytes buffered.
    pub fn poll_frame(&mut self) -> Result<Option<RawFrame>, PcapError> {
        loop {
            if let Some(frame) = self.try_parse()? {
                self.records += 1;
                return Ok(Some(frame));
            }
            if self.fill()? == 0 {
                return Ok(None);
            }
        }
    }

    fn available(&self) -> &[u8] {
        &self.buf[self.pos..]
    }

    fn try_parse(&mut self) -> Result<Option<RawFrame>, PcapError> {
        let avail = self.available();
        if avail.len() < RECORD_HEADER_LEN {
            return Ok(None);
        }
        let h = &self.header;
        let ts_sec = h.read_u32(&avail[0..4]);
        let ts_frac = h.read_u32(&avail[4..8]);
        let incl_len = h.read_u32(&avail[8..12]);
        let orig_len = h.read_u32(&avail[12..16]);
        if incl_len > MAX_RECORD.max(h.snaplen) {
            return Err(PcapError::OversizedRecord(incl_len));
        }
        let total = RECORD_HEADER_LEN + incl_len as usize;
        if avail.len() < total {
            return Ok(None);
        }
        let frac_us = match h.precision {
            TimestampPrecision::Micros => u64::from(ts_frac),
            TimestampPrecision::Nanos => u64::from(ts_frac) / 1000,
        };
        let timestamp = Timestamp::from_micros(u64::from(ts_sec) * 1_000_000 + frac_us);
        let data = avail[RECORD_HEADER_LEN..total].to_vec();
        self.pos += total;
        Ok(Some(RawFrame {
            timestamp,
            orig_len,
            data,
        }))
    }

    fn fill(&mut self) -> io::Result<usize> {
        if self.pos > 0 && self.pos * 2 >= self.buf.len() {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match self.inner.read(&mut chunk) {
                Ok(n) => {
                    self.buf.extend_from_slice(&chunk[..n]);
                    return Ok(n);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

/// Writes little-endian, microsecond-resolution classic pcap.
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, snaplen: u32) -> io::Result<Self> {
        inner.write_u32::<LittleEndian>(MAGIC_MICROS)?;
        inner.write_u16::<LittleEndian>(2)?;
        inner.write_u16::<LittleEndian>(4)?;
        inner.write_i32::<LittleEndian>(0)?;
        inner.write_u32::<LittleEndian>(0)?;
        inner.write_u32::<LittleEndian>(snaplen)?;
        inner.write_u32::<LittleEndian>(LINKTYPE_ETHERNET)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_frame(&mut self, timestamp: Timestamp, captured: &[u8], orig_len: u32) -> io::Result<()> {
        let us = timestamp.as_micros();
        let secs = u32::try_from(us / 1_000_000)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp beyond 32-bit seconds"))?;
        self.inner.write_u32::<LittleEndian>(secs)?;
        self.inner.write_u32::<LittleEndian>((us % 1_000_000) as u32)?;
        self.inner.write_u32::<LittleEndian>(captured.len() as u32)?;
        self.inner.write_u32::<LittleEndian>(orig_len)?;
        self.inner.write_all(captured)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
