//! Temporal belief layer: per-link Gaussian-mixture belief state, diffusion
//! transition between measurement slices, likelihood-weighting importance
//! updates, and effective-sample-size triggered resampling.
//!
//! Each link's available bandwidth is tracked as a weighted mixture of `N_v`
//! Gaussians with common std-dev `sigma_mu`. Between slices every mean
//! diffuses with `N(0, sigma_h^2)` noise; after each slice the weights of the
//! links on observed paths are re-weighted by the probability of the slice's
//! outcomes under each component, with the remaining links of a path
//! following their full mixtures. Discretized component and mixture
//! distributions are cached per slice because the weight update visits them
//! once per component per observed path.

use std::io::Write as IoWrite;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};
use crate::grid::{Pmf, RateGrid};
use crate::likelihood::{pairs_log_likelihood, LikelihoodModel};
use crate::topology::{LinkId, Topology};

/// One link's belief: component means (Mbps), weights, and the common
/// component std-dev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBelief {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma_mu: f64,
}

/// Particle-filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Mixture components per link.
    pub n_v: usize,
    /// Transition (diffusion) std-dev in Mbps.
    pub sigma_h: f64,
    /// Resample a link when its effective component count falls below this.
    pub n_eff_threshold: f64,
    /// Component std-dev in Mbps.
    pub sigma_mu: f64,
    pub grid: RateGrid,
    pub seed: u64,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_v < 1 {
            return Err(PabError::Config("need at least one component".into()));
        }
        if self.n_eff_threshold > self.n_v as f64 {
            return Err(PabError::Config(format!(
                "resampling threshold {} exceeds component count {}",
                self.n_eff_threshold, self.n_v
            )));
        }
        if !(self.sigma_mu > 0.0) || !(self.sigma_h >= 0.0) {
            return Err(PabError::Config(
                "component std-dev must be positive and transition std-dev non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// The `(rate, outcome)` pairs observed on each path during one slice.
#[derive(Debug, Clone, Default)]
pub struct ObservationWindow {
    per_path: Vec<Vec<(f64, bool)>>,
    chirps: usize,
}

impl ObservationWindow {
    pub fn new(n_paths: usize) -> Self {
        Self {
            per_path: vec![Vec::new(); n_paths],
            chirps: 0,
        }
    }

    /// Appends one chirp's surviving `(rate, outcome)` pairs for a path.
    pub fn add_chirp(&mut self, path: usize, samples: &[(f64, bool)]) {
        self.per_path[path].extend_from_slice(samples);
        self.chirps += 1;
    }

    /// Number of chirps recorded, regardless of how many windows each kept.
    pub fn chirp_count(&self) -> usize {
        self.chirps
    }

    pub fn pairs(&self, path: usize) -> &[(f64, bool)] {
        &self.per_path[path]
    }

    /// Indices of paths with at least one observation.
    pub fn observed_paths(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_path
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(i, _)| i)
    }

    pub fn clear(&mut self) {
        for v in self.per_path.iter_mut() {
            v.clear();
        }
        self.chirps = 0;
    }
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated through the tail that keeps
/// precision so far-off-grid components still get positive bin mass.
fn phi_diff(a: f64, b: f64) -> f64 {
    const SQRT2: f64 = std::f64::consts::SQRT_2;
    let d = if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT2) - libm::erfc(b / SQRT2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT2) - libm::erfc(-a / SQRT2))
    } else {
        0.5 * (libm::erf(b / SQRT2) - libm::erf(a / SQRT2))
    };
    d.max(0.0)
}

/// Mass a single Gaussian component puts on each unit-width grid bin,
/// normalized to sum 1 (nearest-bin point mass if everything underflowed).
fn component_mass(mean: f64, sigma: f64, grid: RateGrid) -> Vec<f64> {
    let mut mass: Vec<f64> = grid
        .rates()
        .map(|r| {
            let a = (r as f64 - 0.5 - mean) / sigma;
            let b = (r as f64 + 0.5 - mean) / sigma;
            phi_diff(a, b)
        })
        .collect();
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        for m in mass.iter_mut() {
            *m /= total;
        }
    } else {
        let nearest = (mean.round().max(grid.b_min as f64) as u32).min(grid.b_max);
        mass = vec![0.0; grid.len()];
        mass[grid.index(nearest).unwrap()] = 1.0;
    }
    mass
}

/// Projects a mixture onto the grid: each component integrated over unit
/// bins and normalized, then combined with its weight.
pub fn discretize(belief: &LinkBelief, grid: RateGrid) -> Pmf {
    let mut acc = vec![0.0; grid.len()];
    for (mean, w) in belief.means.iter().zip(&belief.weights) {
        if *w == 0.0 {
            continue;
        }
        for (a, m) in acc.iter_mut().zip(component_mass(*mean, belief.sigma_mu, grid)) {
            *a += w * m;
        }
    }
    Pmf::from_mass(grid, acc).expect("mixture of normalized components has positive mass")
}

/// Effective component count `1 / sum(w^2)` of a normalized weight vector.
pub fn effective_count(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Multinomial resampling: draws `N_v` means with replacement proportionally
/// to the weights and resets the weights to uniform.
pub fn resample<R: Rng>(belief: &mut LinkBelief, rng: &mut R) {
    let dist = WeightedIndex::new(&belief.weights).expect("weights are normalized");
    let n = belief.means.len();
    let new_means: Vec<f64> = (0..n).map(|_| belief.means[dist.sample(rng)]).collect();
    belief.means = new_means;
    belief.weights = vec![1.0 / n as f64; n];
}

fn normalize_or_uniform(v: &mut [f64]) -> bool {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        for x in v.iter_mut() {
            *x /= total;
        }
        true
    } else {
        let u = 1.0 / v.len() as f64;
        for x in v.iter_mut() {
            *x = u;
        }
        false
    }
}

fn survival_of(values: &[f64]) -> Vec<f64> {
    let b = values.len();
    let mut s = vec![0.0; b + 1];
    for i in (0..b).rev() {
        s[i] = s[i + 1] + values[i];
    }
    s
}

/// One serialized belief snapshot row.
#[derive(Debug, Serialize)]
struct SnapshotRow<'a> {
    slice: u64,
    link: u32,
    means: &'a [f64],
    weights: &'a [f64],
}

/// All links' beliefs plus per-link RNG streams and per-slice discretization
/// caches.
#[derive(Debug, Clone)]
pub struct BeliefState {
    config: FilterConfig,
    beliefs: Vec<LinkBelief>,
    rngs: Vec<ChaCha8Rng>,
    mix_cache: Vec<Option<Pmf>>,
    comp_cache: Vec<Option<Vec<Pmf>>>,
}

impl BeliefState {
    /// Initializes every link with means drawn uniformly over the grid range
    /// and uniform weights. Each link gets its own deterministic RNG stream.
    pub fn init(config: FilterConfig, topo: &Topology) -> Result<Self> {
        config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let n = topo.n_links();
        let mut rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|_| ChaCha8Rng::seed_from_u64(master.gen()))
            .collect();
        let beliefs = rngs
            .iter_mut()
            .map(|rng| {
                let means = (0..config.n_v)
                    .map(|_| rng.gen_range(config.grid.b_min as f64..=config.grid.b_max as f64))
                    .collect();
                LinkBelief {
                    means,
                    weights: vec![1.0 / config.n_v as f64; config.n_v],
                    sigma_mu: config.sigma_mu,
                }
            })
            .collect();
        Ok(Self {
            config,
            beliefs,
            rngs,
            mix_cache: vec![None; n],
            comp_cache: vec![None; n],
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn n_links(&self) -> usize {
        self.beliefs.len()
    }

    pub fn belief(&self, link: LinkId) -> &LinkBelief {
        &self.beliefs[link.index()]
    }

    fn invalidate(&mut self, link: usize) {
        self.mix_cache[link] = None;
        self.comp_cache[link] = None;
    }

    fn invalidate_all(&mut self) {
        for i in 0..self.beliefs.len() {
            self.invalidate(i);
        }
    }

    /// Cached discretized mixture of one link: the per-slice BP prior.
    pub fn discretized_prior(&mut self, link: LinkId) -> Pmf {
        let i = link.index();
        if self.mix_cache[i].is_none() {
            self.mix_cache[i] = Some(discretize(&self.beliefs[i], self.config.grid));
        }
        self.mix_cache[i].clone().unwrap()
    }

    /// Discretized priors for every link, in link order.
    pub fn priors(&mut self) -> Vec<Pmf> {
        (0..self.beliefs.len())
            .map(|i| self.discretized_prior(LinkId(i as u32)))
            .collect()
    }

    fn component_pmfs(&mut self, link: usize) -> &Vec<Pmf> {
        if self.comp_cache[link].is_none() {
            let grid = self.config.grid;
            let sigma = self.beliefs[link].sigma_mu;
            let pmfs = self.beliefs[link]
                .means
                .iter()
                .map(|m| {
                    Pmf::from_mass(grid, component_mass(*m, sigma, grid))
                        .expect("component mass is normalized")
                })
                .collect();
            self.comp_cache[link] = Some(pmfs);
        }
        self.comp_cache[link].as_ref().unwrap()
    }

    /// Diffuses every component mean with `N(0, sigma_h^2)` noise, reflecting
    /// at `grid +- 3 sigma_h` so mass cannot drift arbitrarily far off grid.
    /// Weights are untouched.
    pub fn transition(&mut self) {
        if self.config.sigma_h == 0.0 {
            return;
        }
        let noise = rand_distr::Normal::new(0.0, self.config.sigma_h).unwrap();
        let lo = self.config.grid.b_min as f64 - 3.0 * self.config.sigma_h;
        let hi = self.config.grid.b_max as f64 + 3.0 * self.config.sigma_h;
        for (belief, rng) in self.beliefs.iter_mut().zip(self.rngs.iter_mut()) {
            for mean in belief.means.iter_mut() {
                let mut m = *mean + noise.sample(rng);
                while m < lo || m > hi {
                    m = if m < lo { 2.0 * lo - m } else { 2.0 * hi - m };
                }
                *mean = m;
            }
        }
        self.invalidate_all();
    }

    /// Probability of one path's slice outcomes when link `link` follows its
    /// single component `component` and the path's other links follow their
    /// full mixtures. An empty window carries no information and yields 1.
    pub fn partial_weight(
        &mut self,
        link: LinkId,
        component: usize,
        path: usize,
        pairs: &[(f64, bool)],
        topo: &Topology,
        model: &LikelihoodModel,
    ) -> f64 {
        let grid = self.config.grid;
        let mut l_vec: Vec<f64> = pairs_log_likelihood(model, pairs, grid);
        let max = l_vec.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in l_vec.iter_mut() {
            *v = (*v - max).exp();
        }
        if pairs.is_empty() {
            l_vec = vec![1.0; grid.len()];
        }
        let s_others = self.others_survival(link, path, topo);
        let s_comp = {
            let pmfs = self.component_pmfs(link.index());
            survival_of(pmfs[component].values())
        };
        partial_from_survivals(&l_vec, &s_comp, &s_others)
    }

    /// Survival of the min over the path's other links' mixtures.
    fn others_survival(&mut self, link: LinkId, path: usize, topo: &Topology) -> Vec<f64> {
        let grid_len = self.config.grid.len();
        let mut s = vec![1.0; grid_len + 1];
        s[grid_len] = 0.0;
        let links: Vec<LinkId> = topo
            .links_of_path(crate::topology::PathId(path as u32))
            .to_vec();
        let mut any = false;
        for m in links {
            if m == link {
                continue;
            }
            any = true;
            let mix = self.discretized_prior(m);
            let sm = survival_of(mix.values());
            for (acc, x) in s.iter_mut().zip(&sm) {
                *acc *= x;
            }
        }
        if !any {
            // Single-link path: the path value is the component itself.
            s = vec![1.0; grid_len + 1];
            s[grid_len] = 0.0;
        }
        s
    }

    /// Likelihood-weighting update after a completed slice: links on observed
    /// paths multiply their weights by the product of per-path partial
    /// weights and renormalize; every other link keeps its weights. Returns
    /// the number of links whose weights were updated.
    pub fn update_weights(
        &mut self,
        window: &ObservationWindow,
        topo: &Topology,
        model: &LikelihoodModel,
    ) -> usize {
        let grid = self.config.grid;
        let observed: Vec<usize> = window.observed_paths().collect();
        if observed.is_empty() {
            return 0;
        }
        // Max-rescaled window likelihood per observed path; the scale factor
        // is shared by every component of a link, so normalization removes it.
        let mut l_vecs: Vec<(usize, Vec<f64>)> = Vec::with_capacity(observed.len());
        for p in &observed {
            let mut l = pairs_log_likelihood(model, window.pairs(*p), grid);
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in l.iter_mut() {
                *v = (*v - max).exp();
            }
            l_vecs.push((*p, l));
        }
        // Links touched by at least one observed path.
        let mut links: Vec<usize> = observed
            .iter()
            .flat_map(|p| {
                topo.links_of_path(crate::topology::PathId(*p as u32))
                    .iter()
                    .map(|l| l.index())
            })
            .collect();
        links.sort_unstable();
        links.dedup();

        let mut updated = 0;
        for li in links {
            let link = LinkId(li as u32);
            let member_paths: Vec<&(usize, Vec<f64>)> = l_vecs
                .iter()
                .filter(|(p, _)| {
                    topo.links_of_path(crate::topology::PathId(*p as u32))
                        .contains(&link)
                })
                .collect();
            if member_paths.is_empty() {
                continue;
            }
            let n_v = self.config.n_v;
            let mut log_w = vec![0.0f64; n_v];
            for (p, l_vec) in member_paths {
                let s_others = self.others_survival(link, *p, topo);
                let comp_survivals: Vec<Vec<f64>> = self
                    .component_pmfs(li)
                    .iter()
                    .map(|c| survival_of(c.values()))
                    .collect();
                for (v, s_comp) in comp_survivals.iter().enumerate() {
                    let pw = partial_from_survivals(l_vec, s_comp, &s_others);
                    log_w[v] += pw.max(f64::MIN_POSITIVE).ln();
                }
            }
            let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut new_w: Vec<f64> = self.beliefs[li]
                .weights
                .iter()
                .zip(&log_w)
                .map(|(w, lw)| w * (lw - max).exp())
                .collect();
            if !normalize_or_uniform(&mut new_w) {
                log::warn!("link {li}: weight update underflowed, reset to uniform");
            }
            self.beliefs[li].weights = new_w;
            updated += 1;
        }
        updated
    }

    /// Resamples every link whose effective component count fell below the
    /// threshold; returns how many links were resampled.
    pub fn maybe_resample(&mut self) -> usize {
        let mut count = 0;
        for i in 0..self.beliefs.len() {
            if effective_count(&self.beliefs[i].weights) < self.config.n_eff_threshold {
                resample(&mut self.beliefs[i], &mut self.rngs[i]);
                self.invalidate(i);
                count += 1;
            }
        }
        count
    }

    /// Writes one JSON line per link: `{slice, link, means, weights}`.
    pub fn write_snapshot<W: IoWrite>(&self, mut out: W, slice: u64) -> Result<()> {
        for (i, b) in self.beliefs.iter().enumerate() {
            let row = SnapshotRow {
                slice,
                link: i as u32,
                means: &b.means,
                weights: &b.weights,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `sum_y L(y) * pmin(y)` where `pmin` is the minimum-distribution of the
/// component (survival `s_comp`) and the other links (survival `s_others`).
fn partial_from_survivals(l_vec: &[f64], s_comp: &[f64], s_others: &[f64]) -> f64 {
    let b = l_vec.len();
    let mut total = 0.0;
    for y in 0..b {
        let here = s_comp[y] * s_others[y];
        let next = s_comp[y + 1] * s_others[y + 1];
        total += l_vec[y] * (here - next).max(0.0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> RateGrid {
        RateGrid::new(1, 100).unwrap()
    }

    fn config(n_v: usize, seed: u64) -> FilterConfig {
        FilterConfig {
            n_v,
            sigma_h: 4.0,
            n_eff_threshold: 10.0f64.min(n_v as f64),
            sigma_mu: 1.0,
            grid: grid(),
            seed,
        }
    }

    fn single_link_topo() -> Topology {
        Topology::from_paths(1, vec![vec![LinkId(0)]]).unwrap()
    }

    fn chain_topo(n: usize) -> Topology {
        Topology::from_paths(n, vec![(0..n as u32).map(LinkId).collect()]).unwrap()
    }

    fn model() -> LikelihoodModel {
        LikelihoodModel::new(-0.27, 5.0).unwrap()
    }

    #[test]
    fn single_component_init() {
        let mut cfg = config(1, 5);
        cfg.n_eff_threshold = 1.0;
        let st = BeliefState::init(cfg, &single_link_topo()).unwrap();
        let b = st.belief(LinkId(0));
        assert_eq!(b.means.len(), 1);
        assert_eq!(b.weights, vec![1.0]);
    }

    #[test]
    fn init_is_reproducible() {
        let topo = chain_topo(3);
        let a = BeliefState::init(config(100, 9), &topo).unwrap();
        let b = BeliefState::init(config(100, 9), &topo).unwrap();
        for l in 0..3 {
            assert_eq!(a.belief(LinkId(l)).means, b.belief(LinkId(l)).means);
        }
        let c = BeliefState::init(config(100, 10), &topo).unwrap();
        assert_ne!(a.belief(LinkId(0)).means, c.belief(LinkId(0)).means);
    }

    #[test]
    fn initial_means_cover_the_grid_uniformly() {
        let st = BeliefState::init(config(10_000, 77), &single_link_topo()).unwrap();
        let means = &st.belief(LinkId(0)).means;
        let avg: f64 = means.iter().sum::<f64>() / means.len() as f64;
        assert!((avg - 50.5).abs() < 1.0, "avg={avg}");
        assert!(means.iter().all(|m| (1.0..=100.0).contains(m)));
    }

    #[test]
    fn threshold_above_count_rejected() {
        let mut cfg = config(5, 0);
        cfg.n_eff_threshold = 6.0;
        assert!(BeliefState::init(cfg, &single_link_topo()).is_err());
    }

    #[test]
    fn discretize_single_component_peak_mass() {
        let b = LinkBelief {
            means: vec![50.0],
            weights: vec![1.0],
            sigma_mu: 1.0,
        };
        let pmf = discretize(&b, grid());
        // Unit-bin mass of a unit Gaussian at its mean: Phi(0.5) - Phi(-0.5).
        assert!((pmf.mass_at(50) - 0.3829249225).abs() < 1e-6);
        pmf.check().unwrap();
    }

    #[test]
    fn discretize_bimodal_is_symmetric() {
        let b = LinkBelief {
            means: vec![30.0, 70.0],
            weights: vec![0.5, 0.5],
            sigma_mu: 1.0,
        };
        let pmf = discretize(&b, grid());
        for d in 0..5u32 {
            assert!((pmf.mass_at(30 + d) - pmf.mass_at(70 + d)).abs() < 1e-12);
            assert!((pmf.mass_at(30 - d) - pmf.mass_at(70 - d)).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_off_grid_component_still_normalizes() {
        let b = LinkBelief {
            means: vec![-20.0],
            weights: vec![1.0],
            sigma_mu: 1.0,
        };
        let pmf = discretize(&b, grid());
        pmf.check().unwrap();
        // All remaining mass is pinned to the low edge.
        assert!(pmf.mass_at(1) > 0.99);
    }

    #[test]
    fn zero_diffusion_is_identity() {
        let mut cfg = config(50, 3);
        cfg.sigma_h = 0.0;
        let mut st = BeliefState::init(cfg, &single_link_topo()).unwrap();
        let before = st.belief(LinkId(0)).clone();
        st.transition();
        assert_eq!(st.belief(LinkId(0)), &before);
    }

    #[test]
    fn diffusion_variance_matches_parameter() {
        let mut st = BeliefState::init(config(100_000, 21), &single_link_topo()).unwrap();
        let before = st.belief(LinkId(0)).means.clone();
        let w_before = st.belief(LinkId(0)).weights.clone();
        st.transition();
        let after = &st.belief(LinkId(0)).means;
        let deltas: Vec<f64> = before.iter().zip(after).map(|(a, b)| b - a).collect();
        let mean: f64 = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var: f64 =
            deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / deltas.len() as f64;
        assert!((var - 16.0).abs() / 16.0 < 0.02, "var={var}");
        assert_eq!(&w_before, &st.belief(LinkId(0)).weights);
    }

    #[test]
    fn diffusion_reflects_at_the_extended_range() {
        let mut cfg = config(200, 13);
        cfg.sigma_h = 30.0;
        let mut st = BeliefState::init(cfg, &single_link_topo()).unwrap();
        let (lo, hi) = (1.0 - 90.0, 100.0 + 90.0);
        for _ in 0..20 {
            st.transition();
            for m in &st.belief(LinkId(0)).means {
                assert!((lo..=hi).contains(m), "mean {m} escaped");
            }
        }
    }

    #[test]
    fn effective_count_hand_cases() {
        assert!((effective_count(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((effective_count(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((effective_count(&[0.5, 0.5, 0.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn resample_degenerate_weights_clones_survivor() {
        let mut b = LinkBelief {
            means: vec![10.0, 20.0, 30.0],
            weights: vec![0.0, 1.0, 0.0],
            sigma_mu: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        resample(&mut b, &mut rng);
        assert!(b.means.iter().all(|m| *m == 20.0));
        assert!(b.weights.iter().all(|w| (*w - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn resample_uniform_weights_is_unbiased() {
        let n = 10usize;
        let trials = 10_000usize;
        let base = LinkBelief {
            means: (0..n).map(|i| i as f64).collect(),
            weights: vec![1.0 / n as f64; n],
            sigma_mu: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0usize; n];
        for _ in 0..trials {
            let mut b = base.clone();
            resample(&mut b, &mut rng);
            for m in &b.means {
                counts[*m as usize] += 1;
            }
        }
        let total = (trials * n) as f64;
        let p = 1.0 / n as f64;
        let sigma = (total * p * (1.0 - p)).sqrt();
        for (i, c) in counts.iter().enumerate() {
            let dev = (*c as f64 - total * p).abs();
            assert!(dev < 3.0 * sigma, "mean {i}: count {c}, dev {dev}");
        }
    }

    #[test]
    fn partial_weight_collapses_to_point_likelihood() {
        let mut cfg = config(3, 7);
        cfg.sigma_mu = 0.05; // near-point components
        cfg.n_eff_threshold = 1.0;
        let topo = single_link_topo();
        let mut st = BeliefState::init(cfg, &topo).unwrap();
        let y_star = st.belief(LinkId(0)).means[1];
        let m = model();
        let pairs = [(40.0, true)];
        let pw = st.partial_weight(LinkId(0), 1, 0, &pairs, &topo, &m);
        // Max-rescaling divides by the curve's max over the grid.
        let l_max = grid()
            .rates()
            .map(|y| m.point_likelihood(40.0, y as f64, true))
            .fold(f64::NEG_INFINITY, f64::max);
        let expect = m.point_likelihood(40.0, y_star.round(), true) / l_max;
        assert!((pw - expect).abs() < 1e-6, "pw={pw} expect={expect}");
    }

    #[test]
    fn empty_window_gives_unit_weight() {
        let topo = chain_topo(2);
        let mut st = BeliefState::init(config(5, 3), &topo).unwrap();
        for v in 0..5 {
            let pw = st.partial_weight(LinkId(0), v, 0, &[], &topo, &model());
            assert!((pw - 1.0).abs() < 1e-9, "pw={pw}");
        }
    }

    /// Brute force over the full joint grid of the path's links.
    fn brute_partial(
        st: &mut BeliefState,
        link: usize,
        component: usize,
        path_links: &[usize],
        l_vec: &[f64],
        g: RateGrid,
    ) -> f64 {
        let b = g.len();
        let pmfs: Vec<Vec<f64>> = path_links
            .iter()
            .map(|m| {
                if *m == link {
                    st.component_pmfs(link)[component].values().to_vec()
                } else {
                    st.discretized_prior(LinkId(*m as u32)).values().to_vec()
                }
            })
            .collect();
        let n = path_links.len();
        let mut idx = vec![0usize; n];
        let mut total = 0.0;
        loop {
            let w: f64 = (0..n).map(|i| pmfs[i][idx[i]]).product();
            let min = *idx.iter().min().unwrap();
            total += w * l_vec[min];
            let mut done = true;
            for i in (0..n).rev() {
                idx[i] += 1;
                if idx[i] < b {
                    done = false;
                    break;
                }
                idx[i] = 0;
            }
            if done {
                break;
            }
        }
        total
    }

    fn window_l_vec(pairs: &[(f64, bool)], g: RateGrid) -> Vec<f64> {
        let mut l = pairs_log_likelihood(&model(), pairs, g);
        let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in l.iter_mut() {
            *v = (*v - max).exp();
        }
        l
    }

    #[test]
    fn partial_weight_matches_brute_force_sums() {
        for (n_links, seed) in [(2usize, 17u64), (3, 18)] {
            let g = RateGrid::new(1, 8).unwrap();
            let cfg = FilterConfig {
                n_v: 4,
                sigma_h: 4.0,
                n_eff_threshold: 2.0,
                sigma_mu: 1.5,
                grid: g,
                seed,
            };
            let topo = chain_topo(n_links);
            let mut st = BeliefState::init(cfg, &topo).unwrap();
            let pairs = [(3.0, true), (6.0, false), (5.0, true)];
            let l_vec = window_l_vec(&pairs, g);
            let path_links: Vec<usize> = (0..n_links).collect();
            for link in 0..n_links {
                for v in 0..4 {
                    let fast =
                        st.partial_weight(LinkId(link as u32), v, 0, &pairs, &topo, &model());
                    let slow = brute_partial(&mut st, link, v, &path_links, &l_vec, g);
                    assert!(
                        (fast - slow).abs() < 1e-10,
                        "link {link} comp {v}: fast={fast} slow={slow}"
                    );
                }
            }
        }
    }

    /// The same quantity through explicit dense matrix algebra: survival
    /// accumulation, masking by the others' survival, differencing, then the
    /// evidence inner product.
    fn matrix_partial(l_vec: &[f64], comp: &[f64], s_others: &[f64]) -> f64 {
        let b = l_vec.len();
        // U[y][r] = 1 for r >= y turns a pmf into its survival vector.
        let mut u = vec![vec![0.0; b]; b];
        for (y, row) in u.iter_mut().enumerate() {
            for (r, cell) in row.iter_mut().enumerate() {
                if r >= y {
                    *cell = 1.0;
                }
            }
        }
        // D[y][y] = 1, D[y][y+1] = -1 maps joint survival back to a pmf.
        let mut d = vec![vec![0.0; b]; b];
        for y in 0..b {
            d[y][y] = 1.0;
            if y + 1 < b {
                d[y][y + 1] = -1.0;
            }
        }
        let diag: Vec<f64> = s_others[..b].to_vec();
        // A = D * diag(S_others) * U, built with plain matrix products.
        let mut du = vec![vec![0.0; b]; b];
        for y in 0..b {
            for r in 0..b {
                let mut acc = 0.0;
                for k in 0..b {
                    acc += d[y][k] * diag[k] * u[k][r];
                }
                du[y][r] = acc;
            }
        }
        // partial = L^T * (A * comp).
        let mut a_c = vec![0.0; b];
        for y in 0..b {
            for (r, cv) in comp.iter().enumerate() {
                a_c[y] += du[y][r] * cv;
            }
        }
        l_vec.iter().zip(&a_c).map(|(l, x)| l * x).sum()
    }

    #[test]
    fn matrix_route_agrees_with_direct_sum() {
        let g = RateGrid::new(1, 8).unwrap();
        let cfg = FilterConfig {
            n_v: 4,
            sigma_h: 4.0,
            n_eff_threshold: 2.0,
            sigma_mu: 1.5,
            grid: g,
            seed: 23,
        };
        let topo = chain_topo(3);
        let mut st = BeliefState::init(cfg, &topo).unwrap();
        let pairs = [(4.0, true), (7.0, false)];
        let l_vec = window_l_vec(&pairs, g);
        for link in 0..3usize {
            let s_others = st.others_survival(LinkId(link as u32), 0, &topo);
            for v in 0..4 {
                let comp = st.component_pmfs(link)[v].values().to_vec();
                let direct = partial_from_survivals(&l_vec, &survival_of(&comp), &s_others);
                let matrix = matrix_partial(&l_vec, &comp, &s_others);
                assert!(
                    (direct - matrix).abs() < 1e-10,
                    "link {link} comp {v}: direct={direct} matrix={matrix}"
                );
            }
        }
    }

    #[test]
    fn no_observations_leave_weights_untouched() {
        let topo = chain_topo(2);
        let mut st = BeliefState::init(config(20, 31), &topo).unwrap();
        let before: Vec<Vec<f64>> = (0..2)
            .map(|l| st.belief(LinkId(l)).weights.clone())
            .collect();
        let window = ObservationWindow::new(1);
        let updated = st.update_weights(&window, &topo, &model());
        assert_eq!(updated, 0);
        for l in 0..2u32 {
            assert_eq!(st.belief(LinkId(l)).weights, before[l as usize]);
        }
    }

    #[test]
    fn single_link_update_matches_hand_oracle() {
        let g = RateGrid::new(1, 8).unwrap();
        let cfg = FilterConfig {
            n_v: 3,
            sigma_h: 4.0,
            n_eff_threshold: 1.0,
            sigma_mu: 1.0,
            grid: g,
            seed: 5,
        };
        let topo = single_link_topo();
        let mut st = BeliefState::init(cfg, &topo).unwrap();
        let pairs = [(4.0, true), (6.0, false)];
        let l_vec = window_l_vec(&pairs, g);
        // Oracle: w'_v proportional to w_v * sum_y L(y) * c_v(y).
        let mut expect: Vec<f64> = (0..3)
            .map(|v| {
                let comp = st.component_pmfs(0)[v].values().to_vec();
                let lsum: f64 = l_vec.iter().zip(&comp).map(|(l, c)| l * c).sum();
                st.belief(LinkId(0)).weights[v] * lsum
            })
            .collect();
        let total: f64 = expect.iter().sum();
        for e in expect.iter_mut() {
            *e /= total;
        }
        let mut window = ObservationWindow::new(1);
        window.add_chirp(0, &pairs);
        assert_eq!(st.update_weights(&window, &topo, &model()), 1);
        let got = &st.belief(LinkId(0)).weights;
        let sum: f64 = got.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for (g_w, e) in got.iter().zip(&expect) {
            assert!((g_w - e).abs() < 1e-10, "got={g_w} expect={e}");
        }
    }

    #[test]
    fn update_leaves_unobserved_links_alone() {
        // Two disjoint single-link paths; observe only path 0.
        let topo = Topology::from_paths(2, vec![vec![LinkId(0)], vec![LinkId(1)]]).unwrap();
        let mut st = BeliefState::init(config(10, 41), &topo).unwrap();
        let before = st.belief(LinkId(1)).weights.clone();
        let mut window = ObservationWindow::new(2);
        window.add_chirp(0, &[(50.0, true), (80.0, false)]);
        assert_eq!(st.update_weights(&window, &topo, &model()), 1);
        assert_eq!(st.belief(LinkId(1)).weights, before);
        assert_ne!(
            st.belief(LinkId(0)).weights,
            vec![1.0 / 10.0; 10],
            "observed link should have moved"
        );
    }

    #[test]
    fn bp_priors_equal_discretized_mixtures() {
        use crate::factor_graph::{BpSchedule, FactorGraph};
        let topo = chain_topo(3);
        let mut st = BeliefState::init(config(30, 53), &topo).unwrap();
        let priors = st.priors();
        let mut graph = FactorGraph::build(&topo, &priors).unwrap();
        let res = graph.run_bp(&BpSchedule::default());
        // With unit likelihoods BP must hand back exactly the product-form
        // prior: each link marginal equals its discretized mixture.
        for (l, prior) in priors.iter().enumerate() {
            for (a, e) in res.link_marginals[l].values().iter().zip(prior.values()) {
                assert!((a - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn maybe_resample_triggers_only_below_threshold() {
        let topo = chain_topo(2);
        let mut cfg = config(4, 61);
        cfg.n_eff_threshold = 3.0;
        let mut st = BeliefState::init(cfg, &topo).unwrap();
        // Uniform weights: N_eff = 4 >= 3, nothing resamples.
        assert_eq!(st.maybe_resample(), 0);
        st.beliefs[0].weights = vec![0.97, 0.01, 0.01, 0.01];
        let means_before = st.belief(LinkId(0)).means.clone();
        assert_eq!(st.maybe_resample(), 1);
        assert!(st.belief(LinkId(0)).weights.iter().all(|w| *w == 0.25));
        // Resampled means are a multiset drawn from the originals.
        for m in &st.belief(LinkId(0)).means {
            assert!(means_before.contains(m));
        }
    }

    #[test]
    fn snapshot_lines_parse_back() {
        let topo = chain_topo(2);
        let st = BeliefState::init(config(3, 71), &topo).unwrap();
        let mut buf = Vec::new();
        st.write_snapshot(&mut buf, 7).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 2);
        for (i, line) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["slice"], 7);
            assert_eq!(v["link"], i as u64);
            assert_eq!(v["means"].as_array().unwrap().len(), 3);
        }
    }
}
