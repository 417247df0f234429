//! The tracking loop: within a slice, repeatedly pick the widest-interval
//! path, probe it with a chirp spanning its interval bounds, fold the
//! outcome into the slice's factor graph, and re-run message passing; at
//! every `lambda`-th measurement, advance the per-link mixture beliefs
//! (diffuse, reweight, resample) and rebuild the slice graph from the
//! refreshed priors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefState, FilterConfig, ObservationWindow};
use crate::chirp::{solve_chirp, ChirpObservation, ChirpSpec};
use crate::error::Result;
use crate::estimator::{
    confidence_interval, pick_path, pick_rates, select_estimate, ConfidenceInterval,
    SelectionMode,
};
use crate::factor_graph::{BpSchedule, FactorGraph};
use crate::grid::Pmf;
use crate::likelihood::{chirp_likelihood, LikelihoodModel};
use crate::topology::{PathId, Topology};

/// A measurement backend: given a path and a solved chirp plan, returns the
/// observed rate/outcome windows. Implemented by the simulator and by the
/// live probe engine.
pub trait Measurer {
    fn measure(&mut self, path: PathId, spec: &ChirpSpec) -> Result<ChirpObservation>;
}

/// Everything the tracking loop needs beyond the topology.
#[derive(Debug, Clone)]
pub struct TrackerParams {
    pub filter: FilterConfig,
    pub model: LikelihoodModel,
    pub schedule: BpSchedule,
    /// Measurements per slice.
    pub lambda: usize,
    /// Confidence-interval mass target.
    pub eta: f64,
    /// Packets per chirp train.
    pub chirp_k: usize,
    /// Window size in gaps.
    pub chirp_k_min: usize,
    /// Probe packet size in bits.
    pub packet_bits: f64,
    /// Seed for the path-selection stream (independent of the filter seed).
    pub sampler_seed: u64,
}

/// One line of the per-step log: what was probed, with what rate range, and
/// the resulting per-path intervals and estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based measurement index.
    pub t: u64,
    pub path: u32,
    pub r_min: f64,
    pub r_max: f64,
    /// Surviving measurement windows in this chirp.
    pub windows: usize,
    pub converged: bool,
    /// Whether a slice boundary (belief update) fired after this measurement.
    pub boundary: bool,
    pub ci_lo: Vec<u32>,
    pub ci_hi: Vec<u32>,
    pub lower_bound: Vec<u32>,
    pub percentile_25: Vec<u32>,
    pub median: Vec<u32>,
}

/// The result of one tracking step: the serializable record plus the raw
/// observation for consumers that want to replay the measurement stream.
#[derive(Debug, Clone)]
pub struct TrackStep {
    pub record: StepRecord,
    pub observation: ChirpObservation,
}

pub struct Tracker {
    topo: Topology,
    params: TrackerParams,
    beliefs: BeliefState,
    graph: FactorGraph,
    window: ObservationWindow,
    rng: ChaCha8Rng,
    t: u64,
    slice: u64,
    marginals: Vec<Pmf>,
    link_marginals: Vec<Pmf>,
    cis: Vec<ConfidenceInterval>,
    converged: bool,
}

impl Tracker {
    pub fn new(topo: &Topology, params: TrackerParams) -> Result<Self> {
        params.filter.validate()?;
        if params.lambda < 1 {
            return Err(crate::PabError::Config(
                "lambda must be at least 1".into(),
            ));
        }
        if !(params.eta > 0.0 && params.eta < 1.0) {
            return Err(crate::PabError::Config(format!(
                "eta must lie in (0, 1), got {}",
                params.eta
            )));
        }
        let mut beliefs = BeliefState::init(params.filter, topo)?;
        let priors = beliefs.priors();
        let mut graph = FactorGraph::build(topo, &priors)?;
        let res = graph.run_bp(&params.schedule);
        let cis = res
            .path_marginals
            .iter()
            .enumerate()
            .map(|(p, m)| confidence_interval(PathId(p as u32), m, params.eta))
            .collect();
        Ok(Self {
            topo: topo.clone(),
            window: ObservationWindow::new(topo.n_paths()),
            rng: ChaCha8Rng::seed_from_u64(params.sampler_seed),
            beliefs,
            graph,
            t: 0,
            slice: 0,
            marginals: res.path_marginals,
            link_marginals: res.link_marginals,
            cis,
            converged: res.converged,
            params,
        })
    }

    /// One measurement: select path and rates from the current intervals,
    /// probe, absorb the evidence, and refresh marginals and intervals. On a
    /// slice boundary the belief state advances and the graph is rebuilt.
    /// Measurement errors propagate with the tracker state unchanged.
    pub fn step<M: Measurer>(&mut self, measurer: &mut M) -> Result<TrackStep> {
        let path = pick_path(&self.cis, &mut self.rng);
        let (r_min, r_max) = pick_rates(&self.cis[path.index()]);
        let spec = solve_chirp(
            r_min,
            r_max,
            self.params.chirp_k,
            self.params.chirp_k_min,
            self.params.packet_bits,
        )?;
        let obs = measurer.measure(path, &spec)?;

        let samples: Vec<(f64, bool)> = obs.samples().collect();
        self.window.add_chirp(path.index(), &samples);
        let like = chirp_likelihood(&self.params.model, &obs, self.graph.grid())?;
        self.graph.update_likelihood(path, &like)?;
        let res = self.graph.run_bp(&self.params.schedule);
        self.marginals = res.path_marginals;
        self.link_marginals = res.link_marginals;
        self.converged = res.converged;
        self.refresh_cis();

        self.t += 1;
        let boundary = self.t.is_multiple_of(self.params.lambda as u64);
        if boundary {
            self.advance_slice()?;
        }

        let record = StepRecord {
            t: self.t,
            path: path.index() as u32,
            r_min,
            r_max,
            windows: obs.len(),
            converged: self.converged,
            boundary,
            ci_lo: self.cis.iter().map(|c| c.lo).collect(),
            ci_hi: self.cis.iter().map(|c| c.hi).collect(),
            lower_bound: self.estimates(SelectionMode::LowerBound),
            percentile_25: self.estimates(SelectionMode::Percentile25),
            median: self.estimates(SelectionMode::Median),
        };
        Ok(TrackStep {
            record,
            observation: obs,
        })
    }

    /// Slice boundary: diffuse the mixtures, reweight them against the
    /// window's evidence, resample degenerate links, then restart the slice
    /// graph from the refreshed discretized priors.
    fn advance_slice(&mut self) -> Result<()> {
        self.beliefs.transition();
        self.beliefs
            .update_weights(&self.window, &self.topo, &self.params.model);
        self.beliefs.maybe_resample();
        self.window.clear();
        let priors = self.beliefs.priors();
        self.graph = FactorGraph::build(&self.topo, &priors)?;
        let res = self.graph.run_bp(&self.params.schedule);
        self.marginals = res.path_marginals;
        self.link_marginals = res.link_marginals;
        self.converged = res.converged;
        self.refresh_cis();
        self.slice += 1;
        Ok(())
    }

    fn refresh_cis(&mut self) {
        self.cis = self
            .marginals
            .iter()
            .enumerate()
            .map(|(p, m)| confidence_interval(PathId(p as u32), m, self.params.eta))
            .collect();
    }

    /// Point estimates for every path under one selection rule.
    pub fn estimates(&self, mode: SelectionMode) -> Vec<u32> {
        self.marginals
            .iter()
            .zip(&self.cis)
            .map(|(m, ci)| select_estimate(m, ci, mode))
            .collect()
    }

    pub fn confidence_intervals(&self) -> &[ConfidenceInterval] {
        &self.cis
    }

    pub fn path_marginals(&self) -> &[Pmf] {
        &self.marginals
    }

    pub fn link_marginals(&self) -> &[Pmf] {
        &self.link_marginals
    }

    pub fn beliefs(&self) -> &BeliefState {
        &self.beliefs
    }

    /// Whether the most recent message-passing pass converged.
    pub fn last_converged(&self) -> bool {
        self.converged
    }

    /// Measurements taken so far.
    pub fn measurements(&self) -> u64 {
        self.t
    }

    /// Completed slice boundaries so far.
    pub fn slices(&self) -> u64 {
        self.slice
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::BpSchedule;
    use crate::grid::RateGrid;
    use crate::topology::LinkId;
    use rand::Rng;

    fn params(seed: u64) -> TrackerParams {
        let grid = RateGrid::new(1, 100).unwrap();
        TrackerParams {
            filter: FilterConfig {
                n_v: 20,
                sigma_h: 4.0,
                n_eff_threshold: 5.0,
                sigma_mu: 1.0,
                grid,
                seed,
            },
            model: LikelihoodModel::new(-0.27, 5.0).unwrap(),
            schedule: BpSchedule::default(),
            lambda: 10,
            eta: 0.95,
            chirp_k: 75,
            chirp_k_min: 15,
            packet_bits: 8000.0,
            sampler_seed: seed.wrapping_add(1),
        }
    }

    fn fixture_topo() -> Topology {
        // 3 links, 2 paths sharing the middle link.
        Topology::from_paths(
            3,
            vec![vec![LinkId(0), LinkId(1)], vec![LinkId(1), LinkId(2)]],
        )
        .unwrap()
    }

    /// Synthetic measurer against a fixed truth: z ~ Bernoulli(sigmoid).
    struct FixedTruth {
        y: Vec<f64>,
        model: LikelihoodModel,
        rng: ChaCha8Rng,
        calls: usize,
    }

    impl FixedTruth {
        fn new(y: Vec<f64>, seed: u64) -> Self {
            Self {
                y,
                model: LikelihoodModel::new(-0.27, 5.0).unwrap(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                calls: 0,
            }
        }
    }

    impl Measurer for FixedTruth {
        fn measure(&mut self, path: PathId, spec: &ChirpSpec) -> Result<ChirpObservation> {
            self.calls += 1;
            let rates = spec.window_rates();
            let y = self.y[path.index()];
            let mut outcomes = Vec::with_capacity(rates.len());
            let mut out_rates = Vec::with_capacity(rates.len());
            for &r in &rates {
                let p = crate::likelihood::sigmoid(self.model.alpha * (r - y));
                let z = self.rng.gen::<f64>() < p;
                outcomes.push(z);
                out_rates.push(if z { r } else { r - self.model.epsilon - 1.0 });
            }
            Ok(ChirpObservation {
                path,
                rates,
                out_rates,
                outcomes,
                time_index: self.calls as u64,
            })
        }
    }

    /// Measurer that always fails, for error-propagation checks.
    struct Broken;
    impl Measurer for Broken {
        fn measure(&mut self, _: PathId, _: &ChirpSpec) -> Result<ChirpObservation> {
            Err(crate::PabError::Measurement("probe lost".into()))
        }
    }

    #[test]
    fn boundary_fires_exactly_every_lambda_measurements() {
        let topo = fixture_topo();
        let mut tr = Tracker::new(&topo, params(11)).unwrap();
        let mut m = FixedTruth::new(vec![40.0, 70.0], 99);
        for t in 1..=30u64 {
            let step = tr.step(&mut m).unwrap();
            assert_eq!(step.record.t, t);
            assert_eq!(step.record.boundary, t % 10 == 0, "t={t}");
        }
        assert_eq!(tr.slices(), 3);
        assert_eq!(tr.measurements(), 30);
    }

    #[test]
    fn identical_seeds_give_bit_identical_runs() {
        let topo = fixture_topo();
        let run = |seed: u64| -> Vec<StepRecord> {
            let mut tr = Tracker::new(&topo, params(seed)).unwrap();
            let mut m = FixedTruth::new(vec![40.0, 70.0], 7);
            (0..25).map(|_| tr.step(&mut m).unwrap().record).collect()
        };
        let a = run(42);
        let b = run(42);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.path, rb.path);
            assert_eq!(ra.r_min, rb.r_min);
            assert_eq!(ra.r_max, rb.r_max);
            assert_eq!(ra.ci_lo, rb.ci_lo);
            assert_eq!(ra.ci_hi, rb.ci_hi);
            assert_eq!(ra.lower_bound, rb.lower_bound);
            assert_eq!(ra.percentile_25, rb.percentile_25);
            assert_eq!(ra.median, rb.median);
        }
        let c = run(43);
        assert!(
            a.iter().zip(&c).any(|(ra, rc)| ra.path != rc.path
                || ra.ci_lo != rc.ci_lo
                || ra.median != rc.median),
            "different seeds should diverge"
        );
    }

    #[test]
    fn estimates_stay_inside_their_intervals() {
        let topo = fixture_topo();
        let mut tr = Tracker::new(&topo, params(5)).unwrap();
        let mut m = FixedTruth::new(vec![30.0, 55.0], 17);
        for _ in 0..100 {
            let step = tr.step(&mut m).unwrap();
            let r = &step.record;
            for p in 0..topo.n_paths() {
                for est in [r.lower_bound[p], r.percentile_25[p], r.median[p]] {
                    assert!(
                        r.ci_lo[p] <= est && est <= r.ci_hi[p],
                        "estimate {est} outside [{}, {}]",
                        r.ci_lo[p],
                        r.ci_hi[p]
                    );
                }
            }
        }
    }

    #[test]
    fn static_truth_narrows_intervals_and_brackets_it() {
        let topo = fixture_topo();
        let mut tr = Tracker::new(&topo, params(23)).unwrap();
        let mut m = FixedTruth::new(vec![40.0, 70.0], 31);
        let initial_width: u32 = tr.confidence_intervals().iter().map(|c| c.width()).sum();
        let mut last = None;
        for _ in 0..200 {
            last = Some(tr.step(&mut m).unwrap().record);
        }
        let r = last.unwrap();
        let final_width: u32 = r
            .ci_lo
            .iter()
            .zip(&r.ci_hi)
            .map(|(lo, hi)| hi - lo + 1)
            .sum();
        assert!(
            final_width < initial_width / 2,
            "intervals should narrow: {initial_width} -> {final_width}"
        );
        // The interval should sit near the truth for each path.
        for (p, y) in [(0usize, 40.0f64), (1, 70.0)] {
            let lo = r.ci_lo[p] as f64;
            let hi = r.ci_hi[p] as f64;
            assert!(
                lo - 20.0 <= y && y <= hi + 20.0,
                "path {p}: truth {y} far outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn measurement_errors_propagate_without_advancing() {
        let topo = fixture_topo();
        let mut tr = Tracker::new(&topo, params(3)).unwrap();
        let before = tr.measurements();
        let err = tr.step(&mut Broken).unwrap_err();
        assert!(matches!(err, crate::PabError::Measurement(_)));
        assert_eq!(tr.measurements(), before);
        // Still usable afterwards.
        let mut m = FixedTruth::new(vec![40.0, 70.0], 1);
        tr.step(&mut m).unwrap();
        assert_eq!(tr.measurements(), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let topo = fixture_topo();
        let mut p = params(1);
        p.lambda = 0;
        assert!(Tracker::new(&topo, p).is_err());
        let mut p = params(1);
        p.eta = 1.5;
        assert!(Tracker::new(&topo, p).is_err());
    }

    #[test]
    fn step_records_roundtrip_through_json() {
        let topo = fixture_topo();
        let mut tr = Tracker::new(&topo, params(9)).unwrap();
        let mut m = FixedTruth::new(vec![40.0, 70.0], 2);
        let rec = tr.step(&mut m).unwrap().record;
        let line = serde_json::to_string(&rec).unwrap();
        let back: StepRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.t, rec.t);
        assert_eq!(back.ci_lo, rec.ci_lo);
        assert_eq!(back.median, rec.median);
    }
}
