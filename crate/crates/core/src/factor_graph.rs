//! Discrete sum-product belief propagation over the per-slice factor graph.
//!
//! One link variable per link, one path variable per path, a min-factor tying
//! each path to its constituent links (`y_p = min of link values`), and a
//! degree-one likelihood factor per path holding the accumulated chirp
//! evidence. Min-factor messages are computed through cumulative survival
//! products in `O(B * n)` per factor instead of `O(B^n)` enumeration.
//!
//! Messages persist inside the graph, so repeated [`FactorGraph::run_bp`]
//! calls after incremental likelihood updates warm-start from the previous
//! fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};
use crate::grid::{Pmf, RateGrid};
use crate::likelihood::PathLikelihood;
use crate::topology::{PathId, Topology};

/// Message-passing schedule: synchronous flooding until the largest message
/// change drops below `tol` or `max_iters` sweeps have run. `damping` blends
/// each new message with the previous one (`0.0` = undamped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpSchedule {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
}

impl Default for BpSchedule {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50,
            damping: 0.0,
        }
    }
}

/// Marginals produced by one [`FactorGraph::run_bp`] call.
#[derive(Debug, Clone)]
pub struct BpResult {
    pub path_marginals: Vec<Pmf>,
    pub link_marginals: Vec<Pmf>,
    pub converged: bool,
    pub iterations: usize,
}

/// The per-slice factor graph. Structure mirrors the topology's incidence
/// exactly; likelihood factors accumulate evidence across measurements.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    grid: RateGrid,
    /// Per path, the grid-index layout of its links.
    links_of_path: Vec<Vec<usize>>,
    /// Per link, the `(path, slot)` positions where it appears.
    paths_of_link: Vec<Vec<(usize, usize)>>,
    priors: Vec<Vec<f64>>,
    likelihoods: Vec<PathLikelihood>,
    /// `[path][slot]` messages, each a vector over the grid.
    msg_link_to_factor: Vec<Vec<Vec<f64>>>,
    msg_factor_to_link: Vec<Vec<Vec<f64>>>,
    msg_factor_to_path: Vec<Vec<f64>>,
}

/// Normalizes `v` to sum 1 in place; falls back to uniform if the mass
/// underflowed to nothing.
fn normalize_or_uniform(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        for x in v.iter_mut() {
            *x /= total;
        }
    } else {
        let u = 1.0 / v.len() as f64;
        for x in v.iter_mut() {
            *x = u;
        }
    }
}

/// Survival vector of a (possibly unnormalized) message: `S[v] = sum of
/// entries at grid indices >= v`, length `B + 1` with `S[B] = 0`.
fn survival_of(msg: &[f64]) -> Vec<f64> {
    let b = msg.len();
    let mut s = vec![0.0; b + 1];
    for v in (0..b).rev() {
        s[v] = s[v + 1] + msg[v];
    }
    s
}

/// Elementwise prefix products of survival vectors: `pre[i] = prod of
/// `s[0..i]``, so `pre[0]` is all ones and `pre[n]` is the full product.
fn prefix_products<T: AsRef<[f64]>>(s: &[T], len: usize) -> Vec<Vec<f64>> {
    let mut pre = vec![vec![1.0; len]];
    for si in s {
        let last = pre.last().unwrap();
        let next: Vec<f64> = last.iter().zip(si.as_ref()).map(|(a, b)| a * b).collect();
        pre.push(next);
    }
    pre
}

fn suffix_products<T: AsRef<[f64]>>(s: &[T], len: usize) -> Vec<Vec<f64>> {
    let n = s.len();
    let mut suf = vec![vec![1.0; len]; n + 1];
    for i in (0..n).rev() {
        suf[i] = suf[i + 1]
            .iter()
            .zip(s[i].as_ref())
            .map(|(a, b)| a * b)
            .collect();
    }
    suf
}

/// Message a min-factor sends to its path variable given the incoming link
/// messages' survival vectors: the distribution of the minimum,
/// `m(y) = M(y) - M(y+1)` with `M(y) = prod of link survivals at y`.
/// Unnormalized.
fn min_to_path(survivals: &[Vec<f64>], b: usize) -> Vec<f64> {
    let mut big = vec![1.0; b + 1];
    for s in survivals {
        for (acc, x) in big.iter_mut().zip(s) {
            *acc *= x;
        }
    }
    (0..b).map(|y| (big[y] - big[y + 1]).max(0.0)).collect()
}

/// Messages a min-factor sends to each of its links, computed for all links
/// at once via prefix/suffix products over the incoming link messages'
/// survival vectors. `path_msg` is the incoming message from the path
/// variable. Unnormalized.
fn min_to_links(survivals: &[Vec<f64>], path_msg: &[f64], b: usize) -> Vec<Vec<f64>> {
    let n = survivals.len();
    let pre = prefix_products(survivals, b + 1);
    let suf = suffix_products(survivals, b + 1);
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        // G = survival product over the other links; g its difference pmf.
        let g_surv: Vec<f64> = pre[j]
            .iter()
            .zip(&suf[j + 1])
            .map(|(a, c)| a * c)
            .collect();
        let mut msg = vec![0.0; b];
        // m_j(v) = sum_{y<v} path_msg(y) * g(y)  +  path_msg(v) * G(v):
        // either some other link attains a smaller minimum y, or all the
        // others sit at or above v and the path value equals v.
        let mut below = 0.0;
        for v in 0..b {
            msg[v] = below + path_msg[v] * g_surv[v];
            below += path_msg[v] * (g_surv[v] - g_surv[v + 1]).max(0.0);
        }
        out.push(msg);
    }
    out
}

impl FactorGraph {
    /// Builds a graph over the topology with the given per-link priors,
    /// all-ones initial messages, and unit likelihood factors.
    pub fn build(topo: &Topology, priors: &[Pmf]) -> Result<Self> {
        if priors.len() != topo.n_links() {
            return Err(PabError::Topology(format!(
                "expected {} priors, got {}",
                topo.n_links(),
                priors.len()
            )));
        }
        let grid = priors[0].grid();
        for p in priors {
            if p.grid() != grid {
                return Err(PabError::GridMismatch {
                    expected_lo: grid.b_min,
                    expected_hi: grid.b_max,
                    got_lo: p.grid().b_min,
                    got_hi: p.grid().b_max,
                });
            }
        }
        let b = grid.len();
        let links_of_path: Vec<Vec<usize>> = topo
            .path_ids()
            .map(|p| topo.links_of_path(p).iter().map(|l| l.index()).collect())
            .collect();
        let mut paths_of_link = vec![Vec::new(); topo.n_links()];
        for (pi, links) in links_of_path.iter().enumerate() {
            for (slot, li) in links.iter().enumerate() {
                paths_of_link[*li].push((pi, slot));
            }
        }
        let likelihoods = topo
            .path_ids()
            .map(|p| PathLikelihood::ones(p, grid))
            .collect();
        let msg_link_to_factor: Vec<Vec<Vec<f64>>> = links_of_path
            .iter()
            .map(|links| vec![vec![1.0; b]; links.len()])
            .collect();
        let msg_factor_to_link = msg_link_to_factor.clone();
        let msg_factor_to_path = vec![vec![1.0; b]; links_of_path.len()];
        Ok(Self {
            grid,
            links_of_path,
            paths_of_link,
            priors: priors.iter().map(|p| p.values().to_vec()).collect(),
            likelihoods,
            msg_link_to_factor,
            msg_factor_to_link,
            msg_factor_to_path,
        })
    }

    pub fn grid(&self) -> RateGrid {
        self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.links_of_path.len()
    }

    pub fn n_links(&self) -> usize {
        self.paths_of_link.len()
    }

    /// The accumulated evidence factor of one path.
    pub fn likelihood(&self, path: PathId) -> &PathLikelihood {
        &self.likelihoods[path.index()]
    }

    /// Multiplies a new measurement's likelihood into the path's factor.
    pub fn update_likelihood(&mut self, path: PathId, new: &PathLikelihood) -> Result<()> {
        let idx = path.index();
        if idx >= self.likelihoods.len() {
            return Err(PabError::Topology(format!("unknown path {}", path.0)));
        }
        self.likelihoods[idx] = self.likelihoods[idx].accumulate(new)?;
        Ok(())
    }

    /// Writes `new` over `slot` applying damping, returns the L-inf change.
    fn store(slot: &mut Vec<f64>, mut new: Vec<f64>, damping: f64) -> f64 {
        normalize_or_uniform(&mut new);
        if damping > 0.0 {
            for (n, o) in new.iter_mut().zip(slot.iter()) {
                *n = (1.0 - damping) * *n + damping * *o;
            }
            normalize_or_uniform(&mut new);
        }
        let delta = new
            .iter()
            .zip(slot.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        *slot = new;
        delta
    }

    /// One synchronous sweep: every factor fires from the stored variable
    /// messages, then every variable fires from the fresh factor messages.
    /// Returns the largest message change seen.
    fn sweep(&mut self, damping: f64) -> f64 {
        let b = self.grid.len();
        let mut max_delta: f64 = 0.0;
        for pi in 0..self.links_of_path.len() {
            let survivals: Vec<Vec<f64>> = self.msg_link_to_factor[pi]
                .iter()
                .map(|m| survival_of(m))
                .collect();
            // The path variable's only other neighbor is its likelihood
            // factor, so the path->factor message is the likelihood itself.
            let mut path_msg = self.likelihoods[pi].values.clone();
            normalize_or_uniform(&mut path_msg);
            let to_path = min_to_path(&survivals, b);
            let to_links = min_to_links(&survivals, &path_msg, b);
            max_delta = max_delta.max(Self::store(
                &mut self.msg_factor_to_path[pi],
                to_path,
                damping,
            ));
            for (slot, msg) in to_links.into_iter().enumerate() {
                max_delta = max_delta.max(Self::store(
                    &mut self.msg_factor_to_link[pi][slot],
                    msg,
                    damping,
                ));
            }
        }
        for li in 0..self.paths_of_link.len() {
            let members = &self.paths_of_link[li];
            let inbound: Vec<&[f64]> = members
                .iter()
                .map(|(pi, slot)| self.msg_factor_to_link[*pi][*slot].as_slice())
                .collect();
            let pre = prefix_products(&inbound, b);
            let suf = suffix_products(&inbound, b);
            for (k, (pi, slot)) in members.iter().enumerate() {
                let msg: Vec<f64> = (0..b)
                    .map(|v| self.priors[li][v] * pre[k][v] * suf[k + 1][v])
                    .collect();
                max_delta = max_delta.max(Self::store(
                    &mut self.msg_link_to_factor[*pi][*slot],
                    msg,
                    damping,
                ));
            }
        }
        max_delta
    }

    /// Runs message passing and returns normalized marginals. Non-convergence
    /// within the schedule is reported through the flag, with best-effort
    /// marginals.
    pub fn run_bp(&mut self, schedule: &BpSchedule) -> BpResult {
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..schedule.max_iters {
            iterations += 1;
            let delta = self.sweep(schedule.damping);
            if delta < schedule.tol {
                converged = true;
                break;
            }
        }
        let b = self.grid.len();
        let path_marginals = (0..self.n_paths())
            .map(|pi| {
                let mut m: Vec<f64> = self.msg_factor_to_path[pi]
                    .iter()
                    .zip(&self.likelihoods[pi].values)
                    .map(|(a, l)| a * l)
                    .collect();
                normalize_or_uniform(&mut m);
                Pmf::from_mass(self.grid, m).expect("normalized mass is a valid pmf")
            })
            .collect();
        let link_marginals = (0..self.n_links())
            .map(|li| {
                let mut m = self.priors[li].clone();
                for (pi, slot) in &self.paths_of_link[li] {
                    for (acc, x) in m.iter_mut().zip(&self.msg_factor_to_link[*pi][*slot]) {
                        *acc *= x;
                    }
                }
                let _ = b;
                normalize_or_uniform(&mut m);
                Pmf::from_mass(self.grid, m).expect("normalized mass is a valid pmf")
            })
            .collect();
        BpResult {
            path_marginals,
            link_marginals,
            converged,
            iterations,
        }
    }
}
