//! Chirp trains: geometrically decreasing packet spacings that probe a range
//! of rates with a single train of packets.
//!
//! A chirp of `K` packets has `K - 1` inter-packet gaps `tau(i) = T * theta^(K-(i+1))`,
//! so the gaps shrink toward the end of the train and the instantaneous rate
//! grows. A sliding window of `K_min` gaps is read as one constant-rate probe
//! at the window's average rate, giving `K' = K - K_min` probed rates per
//! train. Rates are in Mbps, packet sizes in bits, times in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};
use crate::topology::PathId;

/// Relative slack on the planned gap before a packet counts as stalled.
pub const DISCARD_REL_SLACK: f64 = 0.25;
/// Absolute slack in seconds added on top of the relative slack.
pub const DISCARD_ABS_SLACK_S: f64 = 200e-6;

/// Wire parameters of one chirp train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    /// Total number of packets in the train.
    pub k: usize,
    /// Sliding window size in gaps.
    pub k_min: usize,
    /// Packet size in bits.
    pub packet_bits: f64,
    /// Minimum spacing `T` in seconds (the last gap of the train).
    pub t_min: f64,
    /// Spacing factor, `>= 1`.
    pub theta: f64,
}

impl ChirpSpec {
    pub fn new(k: usize, k_min: usize, packet_bits: f64, t_min: f64, theta: f64) -> Result<Self> {
        if k_min < 1 || k <= k_min {
            return Err(PabError::Chirp(format!(
                "need K > K_min >= 1, got K={k}, K_min={k_min}"
            )));
        }
        if !(t_min > 0.0) || !(theta >= 1.0) || !(packet_bits > 0.0) {
            return Err(PabError::Chirp(
                "need T > 0, theta >= 1 and positive packet size".into(),
            ));
        }
        Ok(Self {
            k,
            k_min,
            packet_bits,
            t_min,
            theta,
        })
    }

    /// Number of rates probed by one train, `K' = K - K_min`.
    pub fn n_rates(&self) -> usize {
        self.k - self.k_min
    }

    /// The gap vector `tau(1..K-1)`, `tau(i) = T * theta^(K-(i+1))`.
    /// Non-increasing, and strictly decreasing when `theta > 1`.
    pub fn spacings(&self) -> Vec<f64> {
        (1..self.k)
            .map(|i| self.t_min * self.theta.powi((self.k - (i + 1)) as i32))
            .collect()
    }

    /// Average input rate of every sliding window, in Mbps.
    pub fn window_rates(&self) -> Vec<f64> {
        window_rates(&self.spacings(), self.k_min, self.packet_bits)
    }

    /// Total planned duration of the train in seconds.
    pub fn duration(&self) -> f64 {
        self.spacings().iter().sum()
    }
}

/// Solves for `(T, theta)` so the first window's average rate is `r_min` and
/// the last window's is `r_max` (both Mbps).
///
/// Closed form: `theta = (r_max/r_min)^(1/(K'-1))` and
/// `T = (K_min*P/r_max) * (theta-1)/(theta^K_min - 1)`, evaluated through
/// `expm1` so nearly-equal rate endpoints stay accurate, with the exact
/// `theta -> 1` limit `T = P/r` when the endpoints coincide.
pub fn solve_chirp(
    r_min_mbps: f64,
    r_max_mbps: f64,
    k: usize,
    k_min: usize,
    packet_bits: f64,
) -> Result<ChirpSpec> {
    if !(r_min_mbps > 0.0) || r_max_mbps < r_min_mbps {
        return Err(PabError::Chirp(format!(
            "invalid rate range [{r_min_mbps}, {r_max_mbps}]"
        )));
    }
    if k_min < 1 || k <= k_min {
        return Err(PabError::Chirp(format!(
            "need K > K_min >= 1, got K={k}, K_min={k_min}"
        )));
    }
    if r_min_mbps < r_max_mbps && k < k_min + 2 {
        return Err(PabError::Chirp(format!(
            "K={k} too small to probe distinct endpoints with K_min={k_min}"
        )));
    }
    let r_max_bps = r_max_mbps * 1e6;
    if r_min_mbps == r_max_mbps {
        let t = packet_bits / r_max_bps;
        return ChirpSpec::new(k, k_min, packet_bits, t, 1.0);
    }
    let n_rates = k - k_min;
    let a = (r_max_mbps / r_min_mbps).ln() / (n_rates - 1) as f64;
    let theta = a.exp();
    let t = (k_min as f64 * packet_bits / r_max_bps) * a.exp_m1() / (k_min as f64 * a).exp_m1();
    ChirpSpec::new(k, k_min, packet_bits, t, theta)
}

/// Average input rate (Mbps) of each sliding window of `k_min` gaps:
/// `r(k) = K_min * P / sum(tau(k..k+K_min-1))`.
pub fn window_rates(spacings: &[f64], k_min: usize, packet_bits: f64) -> Vec<f64> {
    assert!(
        spacings.len() >= k_min,
        "need at least K_min gaps, got {}",
        spacings.len()
    );
    let n = spacings.len() - k_min + 1;
    let bits = k_min as f64 * packet_bits;
    (0..n)
        .map(|k| {
            let sum: f64 = spacings[k..k + k_min].iter().sum();
            bits / sum / 1e6
        })
        .collect()
}

/// Per-window outcome of one chirp measurement on a path.
///
/// The three vectors are aligned and hold only the windows that survived the
/// loss/discard rules, so their common length is at most `K'`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChirpObservation {
    pub path: PathId,
    /// Input rates `r_p(k)` in Mbps.
    pub rates: Vec<f64>,
    /// Output rates `r'_p(k)` in Mbps.
    pub out_rates: Vec<f64>,
    /// `z(k) = 1(r'_p(k) >= r_p(k) - eps)`.
    pub outcomes: Vec<bool>,
    pub time_index: u64,
}

impl ChirpObservation {
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Iterator over `(rate, outcome)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.rates.iter().copied().zip(self.outcomes.iter().copied())
    }
}

/// Interprets sender and receiver timestamps into per-window rates and
/// binary outcomes.
///
/// A packet is discarded when the actual send gap from its predecessor
/// exceeded the planned `tau(i)` beyond the pacing slack (an unusual delay at
/// the sender). Windows touching a lost or discarded packet are omitted;
/// output rates come from receiver inter-arrival gaps only. Input rates are
/// the planned window rates of the spec.
///
/// `send_times` must hold all `K` departure timestamps; `recv_times` holds
/// one arrival timestamp per packet index, `None` for lost packets. Both are
/// in seconds on each host's own clock.
pub fn interpret(
    send_times: &[f64],
    recv_times: &[Option<f64>],
    spec: &ChirpSpec,
    path: PathId,
    epsilon_mbps: f64,
) -> Result<ChirpObservation> {
    let k = spec.k;
    if send_times.len() != k || recv_times.len() != k {
        return Err(PabError::Chirp(format!(
            "expected {k} timestamps, got {} send / {} recv",
            send_times.len(),
            recv_times.len()
        )));
    }
    let tau = spec.spacings();
    // Packet j+1 is discarded when the sender stalled beyond the planned gap.
    let mut discarded = vec![false; k];
    for j in 0..k - 1 {
        let actual = send_times[j + 1] - send_times[j];
        let threshold = tau[j] * (1.0 + DISCARD_REL_SLACK) + DISCARD_ABS_SLACK_S;
        if actual > threshold {
            discarded[j + 1] = true;
        }
    }
    let alive: Vec<bool> = (0..k)
        .map(|j| recv_times[j].is_some() && !discarded[j])
        .collect();
    let surviving = alive.iter().filter(|a| **a).count();

    let k_min = spec.k_min;
    let planned = window_rates(&tau, k_min, spec.packet_bits);
    let mut rates = Vec::new();
    let mut out_rates = Vec::new();
    let mut outcomes = Vec::new();
    // Window k (0-based) covers packets k..=k+K_min and gaps k..k+K_min-1.
    for w in 0..spec.n_rates() {
        if !(w..=w + k_min).all(|j| alive[j]) {
            continue;
        }
        let recv_sum: f64 = (w..w + k_min)
            .map(|j| recv_times[j + 1].unwrap() - recv_times[j].unwrap())
            .sum();
        if recv_sum <= 0.0 {
            continue; // reordered beyond repair
        }
        let r = planned[w];
        let r_out = k_min as f64 * spec.packet_bits / recv_sum / 1e6;
        rates.push(r);
        out_rates.push(r_out);
        outcomes.push(r_out >= r - epsilon_mbps);
    }
    if rates.is_empty() {
        return Err(PabError::EmptyObservation {
            surviving,
            total: k,
        });
    }
    Ok(ChirpObservation {
        path,
        rates,
        out_rates,
        outcomes,
        time_index: 0,
    })
}
