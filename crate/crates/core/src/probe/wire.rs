//! Bit-exact wire formats: the padded probe packet carried by each chirp
//! train, and the arrival summary the receiver reports back. All fields are
//! big-endian.

use crate::error::{PabError, Result};

/// Meaningful header bytes before zero padding: magic(4) + chirp_id(4) +
/// packet_index(2) + total_k(2) + send_ts_ns(8).
pub const HEADER_BYTES: usize = 20;
/// First bytes of every probe packet.
pub const PROBE_MAGIC: [u8; 4] = *b"PABT";
/// First bytes of every arrival summary.
pub const SUMMARY_MAGIC: [u8; 4] = *b"PABR";

/// One probe datagram's header. Serialized packets are padded with zeros to
/// the configured packet size so the train's nominal rate matches the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbePacket {
    pub chirp_id: u32,
    pub packet_index: u16,
    pub total_k: u16,
    /// Sender monotonic clock, nanoseconds from an arbitrary per-run base.
    pub send_ts_ns: u64,
}

impl ProbePacket {
    /// Serializes to exactly `packet_bytes` bytes.
    pub fn serialize(&self, packet_bytes: usize) -> Result<Vec<u8>> {
        if self.packet_index >= self.total_k {
            return Err(PabError::Measurement(format!(
                "packet index {} out of range for a {}-packet train",
                self.packet_index, self.total_k
            )));
        }
        if packet_bytes < HEADER_BYTES {
            return Err(PabError::Measurement(format!(
                "packet size {packet_bytes} cannot fit the {HEADER_BYTES}-byte header"
            )));
        }
        let mut buf = vec![0u8; packet_bytes];
        buf[0..4].copy_from_slice(&PROBE_MAGIC);
        buf[4..8].copy_from_slice(&self.chirp_id.to_be_bytes());
        buf[8..10].copy_from_slice(&self.packet_index.to_be_bytes());
        buf[10..12].copy_from_slice(&self.total_k.to_be_bytes());
        buf[12..20].copy_from_slice(&self.send_ts_ns.to_be_bytes());
        Ok(buf)
    }

    /// Parses a received datagram; padding beyond the header is ignored.
    pub fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_BYTES {
            return Err(PabError::Measurement(format!(
                "datagram of {} bytes is shorter than the header",
                buf.len()
            )));
        }
        if buf[0..4] != PROBE_MAGIC {
            return Err(PabError::Measurement("bad probe magic".into()));
        }
        let pkt = Self {
            chirp_id: u32::from_be_bytes(buf[4..8].try_into().unwrap()),
            packet_index: u16::from_be_bytes(buf[8..10].try_into().unwrap()),
            total_k: u16::from_be_bytes(buf[10..12].try_into().unwrap()),
            send_ts_ns: u64::from_be_bytes(buf[12..20].try_into().unwrap()),
        };
        if pkt.packet_index >= pkt.total_k {
            return Err(PabError::Measurement(format!(
                "packet index {} out of range for a {}-packet train",
                pkt.packet_index, pkt.total_k
            )));
        }
        Ok(pkt)
    }
}

/// Receiver-to-sender report: which indices of a chirp arrived and when, on
/// the receiver's monotonic clock. Layout: magic(4) + chirp_id(4) +
/// total_k(2) + presence bitmap (ceil(k/8), LSB-first within each byte) +
/// one u64 timestamp per present index, in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalSummary {
    pub chirp_id: u32,
    pub total_k: u16,
    /// Indexed by packet index; `None` marks a loss.
    pub recv_ts_ns: Vec<Option<u64>>,
}

impl ArrivalSummary {
    pub fn serialize(&self) -> Result<Vec<u8>> {
        let k = self.total_k as usize;
        if self.recv_ts_ns.len() != k {
            return Err(PabError::Measurement(format!(
                "summary holds {} slots for a {}-packet train",
                self.recv_ts_ns.len(),
                k
            )));
        }
        let bitmap_len = k.div_ceil(8);
        let mut buf = Vec::with_capacity(10 + bitmap_len + 8 * k);
        buf.extend_from_slice(&SUMMARY_MAGIC);
        buf.extend_from_slice(&self.chirp_id.to_be_bytes());
        buf.extend_from_slice(&self.total_k.to_be_bytes());
        let mut bitmap = vec![0u8; bitmap_len];
        for (i, ts) in self.recv_ts_ns.iter().enumerate() {
            if ts.is_some() {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        buf.extend_from_slice(&bitmap);
        for ts in self.recv_ts_ns.iter().flatten() {
            buf.extend_from_slice(&ts.to_be_bytes());
        }
        Ok(buf)
    }

    pub fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < 10 || buf[0..4] != SUMMARY_MAGIC {
            return Err(PabError::Measurement("bad summary datagram".into()));
        }
        let chirp_id = u32::from_be_bytes(buf[4..8].try_into().unwrap());
        let total_k = u16::from_be_bytes(buf[8..10].try_into().unwrap());
        let k = total_k as usize;
        let bitmap_len = k.div_ceil(8);
        if buf.len() < 10 + bitmap_len {
            return Err(PabError::Measurement("truncated summary bitmap".into()));
        }
        let bitmap = &buf[10..10 + bitmap_len];
        let present: Vec<bool> = (0..k).map(|i| bitmap[i / 8] & (1 << (i % 8)) != 0).collect();
        let n_present = present.iter().filter(|p| **p).count();
        let ts_bytes = &buf[10 + bitmap_len..];
        if ts_bytes.len() != 8 * n_present {
            return Err(PabError::Measurement(format!(
                "summary carries {} timestamp bytes for {} present packets",
                ts_bytes.len(),
                n_present
            )));
        }
        let mut recv_ts_ns = Vec::with_capacity(k);
        let mut cursor = 0usize;
        for here in present {
            if here {
                let ts = u64::from_be_bytes(ts_bytes[cursor..cursor + 8].try_into().unwrap());
                recv_ts_ns.push(Some(ts));
                cursor += 8;
            } else {
                recv_ts_ns.push(None);
            }
        }
        Ok(Self {
            chirp_id,
            total_k,
            recv_ts_ns,
        })
    }
}
