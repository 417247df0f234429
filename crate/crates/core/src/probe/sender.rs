//! Chirp emission: one UDP datagram per packet, paced to the solved gap
//! schedule with a hybrid strategy — sleep until shortly before each
//! deadline, then spin for the final approach.

use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use crate::chirp::ChirpSpec;
use crate::error::{PabError, Result};
use crate::probe::wire::ProbePacket;

/// Shortest target gap the pacer will attempt; below this the clock and
/// syscall overhead dominate and the schedule is unachievable.
pub const MIN_GAP_S: f64 = 1e-6;

/// Sleep until this close to a deadline, then busy-wait the remainder.
pub const SPIN_WINDOW: Duration = Duration::from_micros(200);

/// Inside the spin window the loop still yields the core until this close
/// to the deadline, so a same-core receiver is not starved; only the final
/// approach busy-waits.
pub const YIELD_FLOOR: Duration = Duration::from_micros(30);

/// What actually happened on the wire for one emitted chirp.
#[derive(Debug, Clone)]
pub struct SendLog {
    pub chirp_id: u32,
    /// Actual send instants, seconds from the first packet's send.
    pub send_times: Vec<f64>,
    /// Actual minus target gap, one entry per inter-packet gap.
    pub gap_errors: Vec<f64>,
}

/// Emits one chirp train to `dest`, pacing each gap from the previous
/// packet's actual send time. Rejects schedules with gaps below the
/// achievable resolution before sending anything.
pub fn send_chirp(
    socket: &UdpSocket,
    dest: SocketAddr,
    spec: &ChirpSpec,
    chirp_id: u32,
    packet_bytes: usize,
) -> Result<SendLog> {
    send_chirp_with_stall(socket, dest, spec, chirp_id, packet_bytes, None)
}

/// `send_chirp` with an injected extra delay before packet `stall.0` — a
/// fault-injection hook for exercising the late-packet discard rule.
pub fn send_chirp_with_stall(
    socket: &UdpSocket,
    dest: SocketAddr,
    spec: &ChirpSpec,
    chirp_id: u32,
    packet_bytes: usize,
    stall: Option<(usize, Duration)>,
) -> Result<SendLog> {
    let gaps = spec.spacings();
    if let Some(short) = gaps.iter().find(|g| **g < MIN_GAP_S) {
        return Err(PabError::Measurement(format!(
            "pacing infeasible: target gap {:.1} ns is below the {:.1} us resolution floor",
            short * 1e9,
            MIN_GAP_S * 1e6
        )));
    }
    // Serialization sanity up front so no partial train hits the wire.
    ProbePacket {
        chirp_id,
        packet_index: 0,
        total_k: spec.k as u16,
        send_ts_ns: 0,
    }
    .serialize(packet_bytes)?;

    let base = Instant::now();
    let mut send_times = Vec::with_capacity(spec.k);
    let mut deadline = 0.0f64;
    for i in 0..spec.k {
        if let Some((at, extra)) = stall {
            if i == at {
                std::thread::sleep(extra);
            }
        }
        if i > 0 {
            let target = Duration::from_secs_f64(deadline);
            loop {
                let elapsed = base.elapsed();
                if elapsed >= target {
                    break;
                }
                let remain = target - elapsed;
                if remain > SPIN_WINDOW {
                    std::thread::sleep(remain - SPIN_WINDOW);
                } else if remain > YIELD_FLOOR {
                    // Let a runnable receiver thread on the same core take
                    // its read timestamps while we wait out the gap.
                    std::thread::yield_now();
                } else {
                    std::hint::spin_loop();
                }
            }
        }
        let now = base.elapsed();
        let pkt = ProbePacket {
            chirp_id,
            packet_index: i as u16,
            total_k: spec.k as u16,
            send_ts_ns: now.as_nanos() as u64,
        }
        .serialize(packet_bytes)?;
        socket.send_to(&pkt, dest)?;
        send_times.push(now.as_secs_f64());
        if i + 1 < spec.k {
            deadline = send_times[i] + gaps[i];
        }
    }
    let gap_errors = (0..spec.k - 1)
        .map(|i| (send_times[i + 1] - send_times[i]) - gaps[i])
        .collect();
    Ok(SendLog {
        chirp_id,
        send_times,
        gap_errors,
    })
}
