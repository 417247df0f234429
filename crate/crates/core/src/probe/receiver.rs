//! Arrival collection: datagrams are timestamped at the moment of socket
//! read, grouped by (chirp id, source), and turned into receipts when a
//! train completes or goes silent; each receipt is also summarized back to
//! its sender in a single datagram.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::probe::wire::{ArrivalSummary, ProbePacket};

#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    /// Minimum per-chirp silence before an incomplete train is closed out.
    pub silence_floor: Duration,
    /// Silence expiry as a multiple of the train's observed send-time span
    /// (the span converges to the chirp duration as packets arrive).
    pub silence_factor: f64,
    /// Socket read timeout per poll; bounds expiry-sweep latency.
    pub poll_timeout: Duration,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            silence_floor: Duration::from_millis(100),
            silence_factor: 2.0,
            poll_timeout: Duration::from_millis(10),
        }
    }
}

/// Everything observed about one chirp train at the receiver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChirpReceipt {
    pub chirp_id: u32,
    pub total_k: u16,
    pub source: String,
    /// Receiver-clock arrival times by packet index; `None` marks a loss.
    pub recv_ts_ns: Vec<Option<u64>>,
    /// Sender-clock emission times echoed from the packets.
    pub send_ts_ns: Vec<Option<u64>>,
    pub losses: usize,
    /// False when the receipt was closed out by the silence timeout.
    pub complete: bool,
}

struct Pending {
    total_k: u16,
    datagram_len: usize,
    recv_ns: Vec<Option<u64>>,
    send_ns: Vec<Option<u64>>,
    received: usize,
    last_arrival: Instant,
    send_span_ns: u64,
    send_min_ns: u64,
    send_max_ns: u64,
}

pub struct Receiver {
    socket: UdpSocket,
    cfg: ReceiverConfig,
    base: Instant,
    pending: HashMap<(u32, SocketAddr), Pending>,
    /// Datagrams dropped for bad magic, length, or inconsistent headers.
    pub malformed: u64,
}

impl Receiver {
    pub fn bind(addr: impl ToSocketAddrs, cfg: ReceiverConfig) -> Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(cfg.poll_timeout))?;
        Ok(Self {
            socket,
            cfg,
            base: Instant::now(),
            pending: HashMap::new(),
            malformed: 0,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    /// One poll cycle: drain waiting datagrams (timestamping each at the
    /// moment of read), then sweep silence expiries. Completed or expired
    /// receipts are summarized back to their senders and returned.
    pub fn poll(&mut self) -> Result<Vec<ChirpReceipt>> {
        let mut out = Vec::new();
        let mut buf = [0u8; 65536];
        let mut draining = false;
        loop {
            match self.socket.recv_from(&mut buf) {
                Ok((n, src)) => {
                    let ts = self.base.elapsed().as_nanos() as u64;
                    self.ingest(&buf[..n], ts, src, &mut out);
                    if !draining {
                        // After the first read, drain without blocking again.
                        self.socket.set_nonblocking(true)?;
                        draining = true;
                    }
                }
                Err(e)
                    if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut =>
                {
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.socket.set_nonblocking(false)?;
        self.socket.set_read_timeout(Some(self.cfg.poll_timeout))?;
        self.sweep(&mut out);
        Ok(out)
    }

    /// Polls until `stop` is raised, invoking `on_receipt` per receipt.
    pub fn run_until(
        &mut self,
        stop: &AtomicBool,
        mut on_receipt: impl FnMut(&ChirpReceipt),
    ) -> Result<()> {
        while !stop.load(Ordering::Relaxed) {
            for r in self.poll()? {
                on_receipt(&r);
            }
        }
        Ok(())
    }

    fn ingest(&mut self, buf: &[u8], ts: u64, src: SocketAddr, out: &mut Vec<ChirpReceipt>) {
        let pkt = match ProbePacket::parse(buf) {
            Ok(p) => p,
            Err(_) => {
                self.malformed += 1;
                return;
            }
        };
        let key = (pkt.chirp_id, src);
        let entry = self.pending.entry(key).or_insert_with(|| Pending {
            total_k: pkt.total_k,
            datagram_len: buf.len(),
            recv_ns: vec![None; pkt.total_k as usize],
            send_ns: vec![None; pkt.total_k as usize],
            received: 0,
            last_arrival: Instant::now(),
            send_span_ns: 0,
            send_min_ns: u64::MAX,
            send_max_ns: 0,
        });
        if pkt.total_k != entry.total_k || buf.len() != entry.datagram_len {
            self.malformed += 1;
            return;
        }
        let idx = pkt.packet_index as usize;
        if entry.recv_ns[idx].is_none() {
            entry.recv_ns[idx] = Some(ts);
            entry.send_ns[idx] = Some(pkt.send_ts_ns);
            entry.received += 1;
        }
        entry.last_arrival = Instant::now();
        entry.send_min_ns = entry.send_min_ns.min(pkt.send_ts_ns);
        entry.send_max_ns = entry.send_max_ns.max(pkt.send_ts_ns);
        entry.send_span_ns = entry.send_max_ns - entry.send_min_ns;
        if entry.received == entry.total_k as usize {
            let done = self.pending.remove(&key).expect("entry just touched");
            out.push(self.finish(key, done, true));
        }
    }

    fn sweep(&mut self, out: &mut Vec<ChirpReceipt>) {
        let expired: Vec<(u32, SocketAddr)> = self
            .pending
            .iter()
            .filter(|(_, p)| {
                let span = Duration::from_nanos(
                    (p.send_span_ns as f64 * self.cfg.silence_factor) as u64,
                );
                p.last_arrival.elapsed() > span.max(self.cfg.silence_floor)
            })
            .map(|(k, _)| *k)
            .collect();
        for key in expired {
            let p = self.pending.remove(&key).expect("listed as pending");
            out.push(self.finish(key, p, false));
        }
    }

    /// Builds the receipt and reports the arrivals back to the sender; a
    /// failed report send is not fatal (the sender has its own timeout).
    fn finish(&self, key: (u32, SocketAddr), p: Pending, complete: bool) -> ChirpReceipt {
        let summary = ArrivalSummary {
            chirp_id: key.0,
            total_k: p.total_k,
            recv_ts_ns: p.recv_ns.clone(),
        };
        if let Ok(wire) = summary.serialize() {
            let _ = self.socket.send_to(&wire, key.1);
        }
        let losses = p.recv_ns.iter().filter(|t| t.is_none()).count();
        ChirpReceipt {
            chirp_id: key.0,
            total_k: p.total_k,
            source: key.1.to_string(),
            recv_ts_ns: p.recv_ns,
            send_ts_ns: p.send_ns,
            losses,
            complete,
        }
    }
}
