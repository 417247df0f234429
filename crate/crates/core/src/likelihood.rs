//! Sigmoid outcome model: maps binary chirp outcomes to likelihood curves
//! over the discrete rate grid, and fits the sigmoid slope from logged
//! samples.
//!
//! A probe at rate `r` on a path with available bandwidth `y` succeeds
//! (`z = 1`) with probability `sigma(alpha * (r - y))` where `alpha < 0`:
//! probing above the available bandwidth makes success unlikely. Products
//! over a chirp's windows are evaluated in log domain and rescaled so the
//! curve's maximum is 1; the scale is irrelevant to any posterior.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};
use crate::grid::RateGrid;
use crate::chirp::ChirpObservation;
use crate::topology::PathId;

/// Smallest value a likelihood curve may hold after rescaling; keeps every
/// posterior strictly positive.
pub const MIN_LIKELIHOOD: f64 = 1e-300;

/// Standard logistic function.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(sigmoid(x))`, stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x) with softplus(t) = max(t, 0) + ln(1 + e^{-|t|}).
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Sigmoid outcome model with slope `alpha` (1/Mbps) and tolerance
/// `epsilon` (Mbps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub alpha: f64,
    pub epsilon: f64,
}

impl LikelihoodModel {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha < 0.0) {
            return Err(PabError::Likelihood(format!(
                "slope must be negative, got {alpha}"
            )));
        }
        if !(epsilon >= 0.0) {
            return Err(PabError::Likelihood(format!(
                "tolerance must be non-negative, got {epsilon}"
            )));
        }
        Ok(Self { alpha, epsilon })
    }

    /// Probability of outcome `z` for a probe at `r_mbps` on a path whose
    /// available bandwidth is `y_mbps`.
    pub fn point_likelihood(&self, r_mbps: f64, y_mbps: f64, z: bool) -> f64 {
        let p = sigmoid(self.alpha * (r_mbps - y_mbps));
        if z {
            p
        } else {
            1.0 - p
        }
    }

    /// `ln` of [`Self::point_likelihood`], stable for extreme rate gaps.
    pub fn log_point_likelihood(&self, r_mbps: f64, y_mbps: f64, z: bool) -> f64 {
        let x = self.alpha * (r_mbps - y_mbps);
        if z {
            log_sigmoid(x)
        } else {
            // 1 - sigma(x) = sigma(-x).
            log_sigmoid(-x)
        }
    }
}

/// Accumulated evidence about one path: `Pr(observations | y_p = r)` per
/// grid rate, rescaled to max 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLikelihood {
    pub path: PathId,
    pub grid: RateGrid,
    pub values: Vec<f64>,
}

impl PathLikelihood {
    /// The multiplicative identity: no evidence yet.
    pub fn ones(path: PathId, grid: RateGrid) -> Self {
        Self {
            path,
            grid,
            values: vec![1.0; grid.len()],
        }
    }

    fn from_log(path: PathId, grid: RateGrid, mut log_values: Vec<f64>) -> Self {
        let max = log_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for v in log_values.iter_mut() {
            *v = (*v - max).exp().max(MIN_LIKELIHOOD);
        }
        Self {
            path,
            grid,
            values: log_values,
        }
    }

    /// Pointwise product with another curve for the same path and grid,
    /// rescaled to max 1.
    pub fn accumulate(&self, other: &PathLikelihood) -> Result<PathLikelihood> {
        if self.grid != other.grid {
            return Err(PabError::GridMismatch {
                expected_lo: self.grid.b_min,
                expected_hi: self.grid.b_max,
                got_lo: other.grid.b_min,
                got_hi: other.grid.b_max,
            });
        }
        if self.path != other.path {
            return Err(PabError::Likelihood(format!(
                "cannot combine evidence for paths {} and {}",
                self.path.0, other.path.0
            )));
        }
        let log_values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.ln() + b.ln())
            .collect();
        Ok(Self::from_log(self.path, self.grid, log_values))
    }
}

/// Per-grid-rate log likelihood of a set of `(rate, outcome)` pairs,
/// unnormalized: `sum_k ln L(z(k) | r(k), y)` at every grid rate `y`.
pub fn pairs_log_likelihood(
    model: &LikelihoodModel,
    pairs: &[(f64, bool)],
    grid: RateGrid,
) -> Vec<f64> {
    grid.rates()
        .map(|y| {
            pairs
                .iter()
                .map(|(r, z)| model.log_point_likelihood(*r, y as f64, *z))
                .sum()
        })
        .collect()
}

/// Per-grid-rate log likelihood of a whole chirp observation, unnormalized.
pub fn chirp_log_likelihood(
    model: &LikelihoodModel,
    obs: &ChirpObservation,
    grid: RateGrid,
) -> Vec<f64> {
    let pairs: Vec<(f64, bool)> = obs.samples().collect();
    pairs_log_likelihood(model, &pairs, grid)
}

/// Likelihood curve of a set of `(rate, outcome)` pairs, rescaled to max 1.
pub fn pairs_likelihood(
    model: &LikelihoodModel,
    path: PathId,
    pairs: &[(f64, bool)],
    grid: RateGrid,
) -> PathLikelihood {
    if pairs.is_empty() {
        return PathLikelihood::ones(path, grid);
    }
    PathLikelihood::from_log(path, grid, pairs_log_likelihood(model, pairs, grid))
}

/// Likelihood curve of one chirp observation, rescaled to max 1.
pub fn chirp_likelihood(
    model: &LikelihoodModel,
    obs: &ChirpObservation,
    grid: RateGrid,
) -> Result<PathLikelihood> {
    if obs.is_empty() {
        return Err(PabError::Likelihood(
            "cannot build a likelihood from an empty observation".into(),
        ));
    }
    Ok(PathLikelihood::from_log(
        obs.path,
        grid,
        chirp_log_likelihood(model, obs, grid),
    ))
}

/// Fits the sigmoid slope to `(r - y, z)` samples by least squares against
/// empirical success frequencies in unit-width bins of the rate gap.
///
/// Returns `(alpha, mse)` where the error is the bin-occupancy-weighted mean
/// squared gap between the empirical frequencies and the fitted curve.
pub fn fit_alpha(samples: &[(f64, bool)]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(PabError::DegenerateData(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let successes = samples.iter().filter(|(_, z)| *z).count();
    if successes == 0 || successes == samples.len() {
        return Err(PabError::DegenerateData(
            "all samples share one outcome; slope is unidentifiable".into(),
        ));
    }
    // Unit bins centered on integers.
    let mut bins: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
    for (delta, z) in samples {
        if !delta.is_finite() {
            return Err(PabError::DegenerateData(format!(
                "non-finite rate gap {delta}"
            )));
        }
        let e = bins.entry(delta.round() as i64).or_insert((0.0, 0.0));
        e.0 += 1.0;
        if *z {
            e.1 += 1.0;
        }
    }
    let pts: Vec<(f64, f64, f64)> = bins
        .iter()
        .map(|(d, (n, s))| (*d as f64, s / n, *n))
        .collect();
    let total: f64 = pts.iter().map(|(_, _, n)| n).sum();
    let objective = |alpha: f64| -> f64 {
        pts.iter()
            .map(|(d, freq, n)| {
                let e = freq - sigmoid(alpha * d);
                n * e * e
            })
            .sum::<f64>()
            / total
    };
    // Coarse scan, then golden-section refinement around the best point.
    const LO: f64 = -10.0;
    const HI: f64 = -1e-4;
    const STEPS: usize = 2000;
    let mut best = (LO, objective(LO));
    for i in 1..=STEPS {
        let a = LO + (HI - LO) * i as f64 / STEPS as f64;
        let v = objective(a);
        if v < best.1 {
            best = (a, v);
        }
    }
    let step = (HI - LO) / STEPS as f64;
    let (mut lo, mut hi) = ((best.0 - step).max(LO), (best.0 + step).min(HI));
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = objective(d);
        }
    }
    let alpha = 0.5 * (lo + hi);
    Ok((alpha, objective(alpha)))
}

/// Reads `(delta_mbps, z)` fitting samples from CSV; a single header row is
/// tolerated, `z` must be 0 or 1.
pub fn read_fit_samples<R: Read>(reader: R) -> Result<Vec<(f64, bool)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PabError::Measurement(format!("bad CSV record: {e}")))?;
        if rec.len() != 2 {
            return Err(PabError::Measurement(format!(
                "row {}: expected 2 fields, got {}",
                i + 1,
                rec.len()
            )));
        }
        let parsed = rec[0]
            .parse::<f64>()
            .map_err(|e| e.to_string())
            .and_then(|d| {
                rec[1]
                    .parse::<u8>()
                    .map(|z| (d, z))
                    .map_err(|e| e.to_string())
            });
        match parsed {
            Ok((d, z)) if z <= 1 => out.push((d, z == 1)),
            Ok((_, z)) => {
                return Err(PabError::Measurement(format!(
                    "row {}: outcome must be 0 or 1, got {z}",
                    i + 1
                )))
            }
            Err(_) if i == 0 => continue, // header row
            Err(e) => {
                return Err(PabError::Measurement(format!(
                    "row {}: {e}",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}
