//! Live chirp measurement over UDP: a pacing sender, a timestamping
//! receiver that reports arrivals back in one summary datagram, and the
//! round-trip `measure_path` that turns a wire exchange into a measurement.
//!
//! Both ends use their own monotonic clocks; nothing is ever compared across
//! clocks, since outcomes depend only on same-clock gap sums.

mod receiver;
mod sender;
mod wire;

pub use receiver::{ChirpReceipt, Receiver, ReceiverConfig};
pub use sender::{send_chirp, send_chirp_with_stall, SendLog, MIN_GAP_S, SPIN_WINDOW};
pub use wire::{ArrivalSummary, ProbePacket, HEADER_BYTES, PROBE_MAGIC, SUMMARY_MAGIC};

use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use rand::Rng;

use crate::chirp::{interpret, ChirpObservation, ChirpSpec};
use crate::error::{PabError, Result};
use crate::topology::PathId;

/// How long the sender waits for the receiver's arrival summary.
pub fn summary_timeout(spec: &ChirpSpec) -> Duration {
    Duration::from_secs_f64(2.0 * spec.duration()) + Duration::from_secs(1)
}

/// One full measurement: emit the chirp, wait for the receiver's arrival
/// summary, and interpret sender gaps + receiver gaps into windowed
/// outcomes. Fails when the summary never comes or when losses leave no
/// room for even one measurement window.
pub fn measure_path(
    socket: &UdpSocket,
    dest: SocketAddr,
    spec: &ChirpSpec,
    packet_bytes: usize,
    epsilon_mbps: f64,
    path: PathId,
) -> Result<ChirpObservation> {
    let chirp_id: u32 = rand::thread_rng().gen();
    let log = sender::send_chirp(socket, dest, spec, chirp_id, packet_bytes)?;
    let summary = wait_for_summary(socket, chirp_id, summary_timeout(spec))?;
    if summary.total_k as usize != spec.k {
        return Err(PabError::Measurement(format!(
            "summary reports a {}-packet train, expected {}",
            summary.total_k, spec.k
        )));
    }
    let losses = summary.recv_ts_ns.iter().filter(|t| t.is_none()).count();
    if losses > spec.k - spec.k_min {
        return Err(PabError::Measurement(format!(
            "{losses} of {} packets lost, beyond the {} the window layout tolerates",
            spec.k,
            spec.k - spec.k_min
        )));
    }
    let recv_times: Vec<Option<f64>> = summary
        .recv_ts_ns
        .iter()
        .map(|t| t.map(|ns| ns as f64 * 1e-9))
        .collect();
    interpret(&log.send_times, &recv_times, spec, path, epsilon_mbps)
}

/// Reads datagrams off the sender's socket until the matching summary
/// arrives; unrelated datagrams are ignored.
fn wait_for_summary(
    socket: &UdpSocket,
    chirp_id: u32,
    timeout: Duration,
) -> Result<ArrivalSummary> {
    let start = Instant::now();
    let mut buf = [0u8; 65536];
    loop {
        let left = timeout
            .checked_sub(start.elapsed())
            .ok_or_else(|| PabError::Measurement("timed out waiting for arrival summary".into()))?;
        socket.set_read_timeout(Some(left))?;
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => {
                if let Ok(s) = ArrivalSummary::parse(&buf[..n]) {
                    if s.chirp_id == chirp_id {
                        return Ok(s);
                    }
                }
            }
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                return Err(PabError::Measurement(
                    "timed out waiting for arrival summary".into(),
                ));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::solve_chirp;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;

    fn spawn_receiver() -> (SocketAddr, Arc<AtomicBool>, std::thread::JoinHandle<Receiver>) {
        let cfg = ReceiverConfig {
            silence_floor: Duration::from_millis(60),
            silence_factor: 2.0,
            poll_timeout: Duration::from_millis(5),
        };
        let mut rx = Receiver::bind("127.0.0.1:0", cfg).unwrap();
        let addr = rx.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            rx.run_until(&flag, |_| {}).unwrap();
            rx
        });
        (addr, stop, handle)
    }

    #[test]
    fn loopback_measurement_succeeds_with_all_windows_passing() {
        let (dest, stop, handle) = spawn_receiver();
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        let spec = solve_chirp(10.0, 60.0, 30, 8, 8000.0).unwrap();
        let obs = measure_path(&tx, dest, &spec, 1000, 5.0, PathId(0)).unwrap();
        stop.store(true, Ordering::Relaxed);
        handle.join().unwrap();
        assert!(!obs.is_empty());
        // Loopback delivers far faster than any probe rate here, so every
        // surviving window must be a success.
        assert!(
            obs.outcomes.iter().all(|z| *z),
            "unexpected failures: {:?}",
            obs.outcomes
        );
    }

    #[test]
    fn missing_receiver_times_out() {
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        let hole = UdpSocket::bind("127.0.0.1:0").unwrap();
        let dest = hole.local_addr().unwrap();
        drop(hole);
        let spec = solve_chirp(20.0, 80.0, 10, 3, 512.0).unwrap();
        let err = measure_path(&tx, dest, &spec, 64, 5.0, PathId(0)).unwrap_err();
        assert!(err.to_string().contains("timed out"), "{err}");
    }

    #[test]
    fn sender_stall_triggers_the_discard_rule() {
        let (dest, stop, handle) = spawn_receiver();
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        let spec = solve_chirp(10.0, 100.0, 30, 8, 512.0).unwrap();
        let chirp_id = 424242;
        let log = send_chirp_with_stall(
            &tx,
            dest,
            &spec,
            chirp_id,
            64,
            Some((15, Duration::from_millis(50))),
        )
        .unwrap();
        let summary = wait_for_summary(&tx, chirp_id, summary_timeout(&spec)).unwrap();
        stop.store(true, Ordering::Relaxed);
        handle.join().unwrap();
        let recv_times: Vec<Option<f64>> = summary
            .recv_ts_ns
            .iter()
            .map(|t| t.map(|ns| ns as f64 * 1e-9))
            .collect();
        let obs = interpret(&log.send_times, &recv_times, &spec, PathId(0), 5.0).unwrap();
        // Windows overlapping the stalled packet are discarded: with the
        // stall before packet 15 and 8-gap windows, window starts 8..=15
        // would touch it, so strictly fewer windows than the full layout.
        let full = spec.n_rates();
        assert!(
            obs.len() <= full - 8,
            "expected at least 8 discarded windows, got {} of {}",
            obs.len(),
            full
        );
    }
}
