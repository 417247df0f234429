//! Flat run configuration: a JSON file with 1:1 CLI-overridable keys,
//! cross-field validation that names the offending field, and an
//! effective-config snapshot so any run can be reproduced bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::FilterConfig;
use crate::error::{PabError, Result};
use crate::estimator::{EstimatorKind, SelectionMode};
use crate::factor_graph::BpSchedule;
use crate::grid::RateGrid;
use crate::likelihood::LikelihoodModel;
use crate::tracker::TrackerParams;

/// Every tunable of the engine in one flat struct. Missing keys take the
/// defaults below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; topology, truth, filter, and sampling streams all
    /// derive from it deterministically.
    pub seed: u64,
    /// End nodes of the generated topology (paths = all ordered pairs).
    pub end_nodes: usize,
    /// Measurements per replica.
    pub steps: usize,
    /// Independent simulation replicas.
    pub replicas: usize,
    /// Measurements per slice between belief updates.
    pub lambda: usize,
    /// Confidence-interval probability mass.
    pub eta: f64,
    /// Target success probability behind the feasibility notion.
    pub gamma: f64,
    /// Reference success level subtracted in the overestimation cost; kept
    /// separate from `gamma` so the two metrics can diverge.
    pub gamma_cp: f64,
    /// Rate tolerance in Mbps for a successful transmission.
    pub epsilon: f64,
    /// Outcome-model steepness (negative).
    pub alpha: f64,
    /// Mixture components per link.
    pub n_v: usize,
    /// Resample a link when its effective component count drops below this.
    pub n_eff_threshold: f64,
    /// Between-slice diffusion std-dev in Mbps.
    pub sigma_h: f64,
    /// Mixture-component std-dev in Mbps.
    pub sigma_mu: f64,
    /// Lowest rate on the grid, Mbps.
    pub b_min: u32,
    /// Highest rate on the grid, Mbps.
    pub b_max: u32,
    /// Packets per chirp train.
    pub chirp_k: usize,
    /// Measurement window size in gaps.
    pub chirp_k_min: usize,
    /// Probe packet size in bytes.
    pub packet_bytes: usize,
    /// Per-step truth increments and their probabilities.
    pub delta_values: Vec<i64>,
    pub delta_probs: Vec<f64>,
    /// Estimation strategies to run.
    pub estimators: Vec<EstimatorKind>,
    /// Point-estimate selection rules to score.
    pub modes: Vec<SelectionMode>,
    /// Message-passing convergence tolerance.
    pub bp_tol: f64,
    pub bp_max_iters: usize,
    pub bp_damping: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            end_nodes: 9,
            steps: 1000,
            replicas: 30,
            lambda: 10,
            eta: 0.95,
            gamma: 0.8,
            gamma_cp: 0.8,
            epsilon: 5.0,
            alpha: -0.27,
            n_v: 100,
            n_eff_threshold: 10.0,
            sigma_h: 4.0,
            sigma_mu: 1.0,
            b_min: 1,
            b_max: 100,
            chirp_k: 75,
            chirp_k_min: 15,
            packet_bytes: 1000,
            delta_values: vec![-2, -1, 0, 1, 2],
            delta_probs: vec![0.0625, 0.25, 0.375, 0.25, 0.0625],
            estimators: EstimatorKind::ALL.to_vec(),
            modes: SelectionMode::ALL.to_vec(),
            bp_tol: 1e-6,
            bp_max_iters: 50,
            bp_damping: 0.0,
        }
    }
}

fn bad(field: &str, why: String) -> PabError {
    PabError::Config(format!("{field}: {why}"))
}

impl RunConfig {
    /// Parses a JSON config; missing keys take defaults, unknown keys fail.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Pretty JSON of every effective value, suitable for re-running.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.end_nodes < 2 {
            return Err(bad("end_nodes", format!("need at least 2, got {}", self.end_nodes)));
        }
        if self.steps < 1 {
            return Err(bad("steps", "need at least 1".into()));
        }
        if self.replicas < 1 {
            return Err(bad("replicas", "need at least 1".into()));
        }
        if self.lambda < 1 {
            return Err(bad("lambda", "need at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(bad("eta", format!("must lie in (0,1), got {}", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma", format!("must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.gamma_cp > 0.0 && self.gamma_cp < 1.0) {
            return Err(bad(
                "gamma_cp",
                format!("must lie in (0,1), got {}", self.gamma_cp),
            ));
        }
        if !(self.epsilon >= 0.0) {
            return Err(bad("epsilon", format!("must be nonnegative, got {}", self.epsilon)));
        }
        if !(self.alpha < 0.0) {
            return Err(bad("alpha", format!("must be negative, got {}", self.alpha)));
        }
        if self.n_v < 1 {
            return Err(bad("n_v", "need at least 1 component".into()));
        }
        if !(self.n_eff_threshold >= 1.0) || self.n_eff_threshold > self.n_v as f64 {
            return Err(bad(
                "n_eff_threshold",
                format!(
                    "must lie in [1, n_v={}], got {}",
                    self.n_v, self.n_eff_threshold
                ),
            ));
        }
        if !(self.sigma_h >= 0.0) {
            return Err(bad("sigma_h", format!("must be nonnegative, got {}", self.sigma_h)));
        }
        if !(self.sigma_mu > 0.0) {
            return Err(bad("sigma_mu", format!("must be positive, got {}", self.sigma_mu)));
        }
        if self.b_min < 1 || self.b_max <= self.b_min {
            return Err(bad(
                "b_min/b_max",
                format!("need 1 <= b_min < b_max, got [{}, {}]", self.b_min, self.b_max),
            ));
        }
        if self.chirp_k_min < 1 || self.chirp_k <= self.chirp_k_min {
            return Err(bad(
                "chirp_k/chirp_k_min",
                format!(
                    "need chirp_k > chirp_k_min >= 1, got ({}, {})",
                    self.chirp_k, self.chirp_k_min
                ),
            ));
        }
        if self.packet_bytes < crate::probe::HEADER_BYTES {
            return Err(bad(
                "packet_bytes",
                format!(
                    "must fit the {}-byte probe header, got {}",
                    crate::probe::HEADER_BYTES,
                    self.packet_bytes
                ),
            ));
        }
        if self.delta_values.is_empty() || self.delta_values.len() != self.delta_probs.len() {
            return Err(bad(
                "delta_values/delta_probs",
                format!(
                    "need matching nonempty lists, got {} values and {} probabilities",
                    self.delta_values.len(),
                    self.delta_probs.len()
                ),
            ));
        }
        if self.delta_probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(bad("delta_probs", "probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = self.delta_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad("delta_probs", format!("must sum to 1, got {total}")));
        }
        if self.estimators.is_empty() {
            return Err(bad("estimators", "need at least one strategy".into()));
        }
        if self.modes.is_empty() {
            return Err(bad("modes", "need at least one selection rule".into()));
        }
        if !(self.bp_tol >= 0.0) {
            return Err(bad("bp_tol", format!("must be nonnegative, got {}", self.bp_tol)));
        }
        if self.bp_max_iters < 1 {
            return Err(bad("bp_max_iters", "need at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.bp_damping) {
            return Err(bad("bp_damping", format!("must lie in [0,1), got {}", self.bp_damping)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RateGrid> {
        RateGrid::new(self.b_min, self.b_max)
    }

    pub fn model(&self) -> Result<LikelihoodModel> {
        LikelihoodModel::new(self.alpha, self.epsilon)
    }

    pub fn schedule(&self) -> BpSchedule {
        BpSchedule {
            tol: self.bp_tol,
            max_iters: self.bp_max_iters,
            damping: self.bp_damping,
        }
    }

    pub fn packet_bits(&self) -> f64 {
        self.packet_bytes as f64 * 8.0
    }

    pub fn filter_config(&self, seed: u64) -> Result<FilterConfig> {
        Ok(FilterConfig {
            n_v: self.n_v,
            sigma_h: self.sigma_h,
            n_eff_threshold: self.n_eff_threshold,
            sigma_mu: self.sigma_mu,
            grid: self.grid()?,
            seed,
        })
    }

    pub fn tracker_params(&self, filter_seed: u64, sampler_seed: u64) -> Result<TrackerParams> {
        Ok(TrackerParams {
            filter: self.filter_config(filter_seed)?,
            model: self.model()?,
            schedule: self.schedule(),
            lambda: self.lambda,
            eta: self.eta,
            chirp_k: self.chirp_k,
            chirp_k_min: self.chirp_k_min,
            packet_bits: self.packet_bits(),
            sampler_seed,
        })
    }
}
