//! Ground-truth network simulation and the experiment harness: evolving
//! integer link bandwidths, synthetic chirp outcomes drawn from the outcome
//! model, running feasibility/cost metrics, and multi-replica aggregation
//! with deterministic seed derivation.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chirp::{ChirpObservation, ChirpSpec};
use crate::config::RunConfig;
use crate::error::{PabError, Result};
use crate::estimator::{
    confidence_interval, select_estimate, AllHistoryEstimator, EstimatorKind,
    RecentWindowEstimator, SelectionMode,
};
use crate::grid::{Pmf, RateGrid};
use crate::likelihood::{sigmoid, LikelihoodModel};
use crate::topology::{generate_random_topology, PathId, Topology};
use crate::tracker::{Measurer, StepRecord, Tracker};

/// Per-step increment distribution for the simulated link bandwidths.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    deltas: Vec<i64>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl DynamicsModel {
    pub fn new(deltas: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() || deltas.len() != probs.len() {
            return Err(PabError::Config(format!(
                "dynamics table needs matching nonempty lists, got {} deltas and {} probabilities",
                deltas.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PabError::Config(
                "dynamics probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PabError::Config(format!(
                "dynamics probabilities must sum to 1, got {total}"
            )));
        }
        let dist = WeightedIndex::new(&probs)
            .map_err(|e| PabError::Config(format!("dynamics table: {e}")))?;
        Ok(Self {
            deltas,
            probs,
            dist,
        })
    }

    /// The default two-sided table: a binomial(4, 1/2) profile over −2..=+2.
    pub fn standard() -> Self {
        Self::new(vec![-2, -1, 0, 1, 2], vec![0.0625, 0.25, 0.375, 0.25, 0.0625])
            .expect("table is valid")
    }

    /// All mass on zero: a frozen truth.
    pub fn frozen() -> Self {
        Self::new(vec![0], vec![1.0]).expect("table is valid")
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> i64 {
        self.deltas[self.dist.sample(rng)]
    }

    pub fn deltas(&self) -> &[i64] {
        &self.deltas
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// True per-link bandwidths and the per-path minima they induce.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    grid: RateGrid,
    x: Vec<u32>,
    y: Vec<u32>,
}

impl GroundTruth {
    /// Initial truth: each link uniform on the integer grid.
    pub fn init<R: Rng>(topo: &Topology, grid: RateGrid, rng: &mut R) -> Self {
        let x = (0..topo.n_links())
            .map(|_| rng.gen_range(grid.b_min..=grid.b_max))
            .collect();
        let mut t = Self {
            grid,
            x,
            y: vec![0; topo.n_paths()],
        };
        t.recompute(topo);
        t
    }

    /// Adds one iid increment per link, clamped to the grid bounds.
    pub fn step<R: Rng>(&mut self, topo: &Topology, dynamics: &DynamicsModel, rng: &mut R) {
        for x in self.x.iter_mut() {
            let next = *x as i64 + dynamics.sample(rng);
            *x = next.clamp(self.grid.b_min as i64, self.grid.b_max as i64) as u32;
        }
        self.recompute(topo);
    }

    fn recompute(&mut self, topo: &Topology) {
        for p in 0..topo.n_paths() {
            self.y[p] = topo
                .links_of_path(PathId(p as u32))
                .iter()
                .map(|l| self.x[l.index()])
                .min()
                .expect("paths are nonempty");
        }
    }

    pub fn link_rates(&self) -> &[u32] {
        &self.x
    }

    pub fn path_rates(&self) -> &[u32] {
        &self.y
    }
}

/// Draws windowed outcomes for a chirp against the current truth:
/// `z ~ Bernoulli(sigmoid(alpha (r − y)))`, with output rates synthesized
/// consistently (`r` on success, `r − epsilon − 1` on failure).
pub fn synth_measure<R: Rng>(
    truth: &GroundTruth,
    path: PathId,
    spec: &ChirpSpec,
    model: &LikelihoodModel,
    rng: &mut R,
    time_index: u64,
) -> ChirpObservation {
    let rates = spec.window_rates();
    let y = truth.path_rates()[path.index()] as f64;
    let mut outcomes = Vec::with_capacity(rates.len());
    let mut out_rates = Vec::with_capacity(rates.len());
    for &r in &rates {
        let p = sigmoid(model.alpha * (r - y));
        let z = rng.gen::<f64>() < p;
        outcomes.push(z);
        out_rates.push(if z { r } else { r - model.epsilon - 1.0 });
    }
    ChirpObservation {
        path,
        rates,
        out_rates,
        outcomes,
        time_index,
    }
}

/// Measurement backend over the simulated truth. `measure` reads the truth
/// without advancing it; the driver steps the truth once per measurement
/// after scoring.
pub struct SimMeasurer {
    topo: Topology,
    truth: GroundTruth,
    dynamics: DynamicsModel,
    model: LikelihoodModel,
    outcome_rng: ChaCha8Rng,
    dynamics_rng: ChaCha8Rng,
    t: u64,
}

impl SimMeasurer {
    pub fn new(
        topo: &Topology,
        grid: RateGrid,
        dynamics: DynamicsModel,
        model: LikelihoodModel,
        truth_seed: u64,
        outcome_seed: u64,
    ) -> Self {
        let mut init_rng = ChaCha8Rng::seed_from_u64(truth_seed);
        let truth = GroundTruth::init(topo, grid, &mut init_rng);
        Self {
            topo: topo.clone(),
            truth,
            dynamics,
            model,
            outcome_rng: ChaCha8Rng::seed_from_u64(outcome_seed),
            dynamics_rng: init_rng,
            t: 0,
        }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Advances the truth by one step; called once per measurement.
    pub fn advance_truth(&mut self) {
        self.truth
            .step(&self.topo, &self.dynamics, &mut self.dynamics_rng);
    }
}

impl Measurer for SimMeasurer {
    fn measure(&mut self, path: PathId, spec: &ChirpSpec) -> Result<ChirpObservation> {
        self.t += 1;
        Ok(synth_measure(
            &self.truth,
            path,
            spec,
            &self.model,
            &mut self.outcome_rng,
            self.t,
        ))
    }
}

/// Cumulative counters behind the running metrics; summable across paths,
/// steps, and replicas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounters {
    /// Estimate-at-or-below-truth events.
    pub feasible: u64,
    /// Scored (path, step) pairs.
    pub scored: u64,
    /// Sum of estimate − truth over feasible events (nonpositive).
    pub cr_sum: f64,
    pub cr_count: u64,
    /// Sum of success-probability shortfall over overestimates.
    pub cp_sum: f64,
    pub cp_count: u64,
}

impl MetricCounters {
    pub fn absorb(&mut self, other: &MetricCounters) {
        self.feasible += other.feasible;
        self.scored += other.scored;
        self.cr_sum += other.cr_sum;
        self.cr_count += other.cr_count;
        self.cp_sum += other.cp_sum;
        self.cp_count += other.cp_count;
    }

    /// Running share of feasible (non-overestimating) estimates.
    pub fn ps(&self) -> f64 {
        if self.scored == 0 {
            return 0.0;
        }
        self.feasible as f64 / self.scored as f64
    }

    /// Running mean rate cost over feasible estimates.
    pub fn cr(&self) -> Option<f64> {
        (self.cr_count > 0).then(|| self.cr_sum / self.cr_count as f64)
    }

    /// Running mean success-probability cost over overestimates.
    pub fn cp(&self) -> Option<f64> {
        (self.cp_count > 0).then(|| self.cp_sum / self.cp_count as f64)
    }
}

/// Scores one step's per-path estimates against the truth.
pub fn metrics_update(
    c: &mut MetricCounters,
    estimates: &[u32],
    truth: &[u32],
    gamma: f64,
    model: &LikelihoodModel,
) {
    assert_eq!(estimates.len(), truth.len());
    for (est, y) in estimates.iter().zip(truth) {
        c.scored += 1;
        if est <= y {
            c.feasible += 1;
            c.cr_sum += *est as f64 - *y as f64;
            c.cr_count += 1;
        } else {
            c.cp_sum += sigmoid(model.alpha * (*est as f64 - *y as f64)) - gamma;
            c.cp_count += 1;
        }
    }
}

/// Running metric series: cumulative counters snapshotted after every step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricSeries {
    current: MetricCounters,
    pub rows: Vec<MetricCounters>,
}

impl MetricSeries {
    pub fn update(&mut self, estimates: &[u32], truth: &[u32], gamma: f64, model: &LikelihoodModel) {
        metrics_update(&mut self.current, estimates, truth, gamma, model);
        self.rows.push(self.current);
    }
}

/// One estimator's per-path intervals and estimates at one step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSnapshot {
    pub kind: EstimatorKind,
    pub ci_lo: Vec<u32>,
    pub ci_hi: Vec<u32>,
    pub lower_bound: Vec<u32>,
    pub percentile_25: Vec<u32>,
    pub median: Vec<u32>,
}

impl EstimatorSnapshot {
    fn from_marginals(kind: EstimatorKind, marginals: &[Pmf], eta: f64) -> Self {
        let cis: Vec<_> = marginals
            .iter()
            .enumerate()
            .map(|(p, m)| confidence_interval(PathId(p as u32), m, eta))
            .collect();
        let pick = |mode: SelectionMode| -> Vec<u32> {
            marginals
                .iter()
                .zip(&cis)
                .map(|(m, ci)| select_estimate(m, ci, mode))
                .collect()
        };
        Self {
            kind,
            ci_lo: cis.iter().map(|c| c.lo).collect(),
            ci_hi: cis.iter().map(|c| c.hi).collect(),
            lower_bound: pick(SelectionMode::LowerBound),
            percentile_25: pick(SelectionMode::Percentile25),
            median: pick(SelectionMode::Median),
        }
    }

    pub fn estimates(&self, mode: SelectionMode) -> &[u32] {
        match mode {
            SelectionMode::LowerBound => &self.lower_bound,
            SelectionMode::Percentile25 => &self.percentile_25,
            SelectionMode::Median => &self.median,
        }
    }

    /// Mean interval width in grid points across paths.
    pub fn mean_ci_width(&self) -> f64 {
        let total: u64 = self
            .ci_lo
            .iter()
            .zip(&self.ci_hi)
            .map(|(lo, hi)| (hi - lo + 1) as u64)
            .sum();
        total as f64 / self.ci_lo.len() as f64
    }
}

/// One step of one replica, carrying everything needed to recompute every
/// metric offline: the truth, the tracking step, and baseline snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimStepRecord {
    pub replica: usize,
    /// Per-path true bandwidth the measurement saw.
    pub truth: Vec<u32>,
    pub step: StepRecord,
    pub baselines: Vec<EstimatorSnapshot>,
}

/// Metric series keyed by estimator and selection rule.
pub type SeriesByCase = BTreeMap<(EstimatorKind, SelectionMode), MetricSeries>;

/// What a replica should retain beyond its metric series.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplicaOpts {
    pub keep_records: bool,
    /// Capture the tracking filter's final belief state as JSONL.
    pub snapshot_beliefs: bool,
}

/// Outcome of one replica.
pub struct ReplicaResult {
    pub series: SeriesByCase,
    /// Mean CI width per estimator per step.
    pub ci_width: BTreeMap<EstimatorKind, Vec<f64>>,
    pub slices: u64,
    /// Per-step records; retained only when requested.
    pub records: Vec<SimStepRecord>,
    /// Final belief state, one JSON line per link; retained only when
    /// requested.
    pub belief_snapshot: Option<String>,
}

/// Aggregated outcome across replicas.
pub struct ExperimentResult {
    pub topology: Topology,
    /// Pooled cumulative counters per step, per (estimator, mode).
    pub series: BTreeMap<(EstimatorKind, SelectionMode), Vec<MetricCounters>>,
    /// Mean CI width per estimator per step, averaged over replicas.
    pub ci_width: BTreeMap<EstimatorKind, Vec<f64>>,
    pub replicas: usize,
}

/// Seeds for one replica, all derived from the experiment master seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReplicaSeeds {
    pub truth: u64,
    pub outcome: u64,
    pub filter: u64,
    pub sampler: u64,
}

/// Derives the per-replica seed block deterministically from the master.
pub fn derive_seeds(master: u64, replicas: usize) -> Vec<ReplicaSeeds> {
    let mut rng = ChaCha8Rng::seed_from_u64(master.wrapping_add(0x5EED));
    (0..replicas)
        .map(|_| ReplicaSeeds {
            truth: rng.gen(),
            outcome: rng.gen(),
            filter: rng.gen(),
            sampler: rng.gen(),
        })
        .collect()
}

/// Runs one replica: the tracking filter drives the measurement stream; the
/// block baselines consume the same stream; every requested (estimator,
/// mode) pair is scored after each ingest against the truth that produced
/// the measurement.
pub fn run_replica(
    topo: &Topology,
    cfg: &RunConfig,
    seeds: ReplicaSeeds,
    replica_index: usize,
    opts: ReplicaOpts,
) -> Result<ReplicaResult> {
    let grid = cfg.grid()?;
    let model = cfg.model()?;
    let dynamics = DynamicsModel::new(cfg.delta_values.clone(), cfg.delta_probs.clone())?;
    let mut measurer = SimMeasurer::new(topo, grid, dynamics, model, seeds.truth, seeds.outcome);
    let mut tracker = Tracker::new(topo, cfg.tracker_params(seeds.filter, seeds.sampler)?)?;

    let want = |k: EstimatorKind| cfg.estimators.contains(&k);
    let mut all_history = want(EstimatorKind::AllHistory)
        .then(|| AllHistoryEstimator::new(topo, grid, model, cfg.schedule()))
        .transpose()?;
    let mut recent = want(EstimatorKind::RecentWindow)
        .then(|| RecentWindowEstimator::new(topo, grid, model, cfg.schedule(), cfg.lambda))
        .transpose()?;

    let mut series: SeriesByCase = BTreeMap::new();
    for &k in &cfg.estimators {
        for &m in &cfg.modes {
            series.insert((k, m), MetricSeries::default());
        }
    }
    let mut ci_width: BTreeMap<EstimatorKind, Vec<f64>> = cfg
        .estimators
        .iter()
        .map(|k| (*k, Vec::with_capacity(cfg.steps)))
        .collect();
    let mut records = Vec::new();

    for _ in 0..cfg.steps {
        let truth_now = measurer.truth().path_rates().to_vec();
        let step = tracker.step(&mut measurer)?;
        let mut snapshots = Vec::new();

        if let Some(est) = all_history.as_mut() {
            let samples: Vec<(f64, bool)> = step.observation.samples().collect();
            est.ingest(step.observation.path, &samples)?;
            let res = est.estimate();
            snapshots.push(EstimatorSnapshot::from_marginals(
                EstimatorKind::AllHistory,
                &res.path_marginals,
                cfg.eta,
            ));
        }
        if let Some(est) = recent.as_mut() {
            let samples: Vec<(f64, bool)> = step.observation.samples().collect();
            est.ingest(step.observation.path, &samples)?;
            snapshots.push(EstimatorSnapshot::from_marginals(
                EstimatorKind::RecentWindow,
                est.estimates(),
                cfg.eta,
            ));
        }

        for ((kind, mode), s) in series.iter_mut() {
            let estimates: Vec<u32> = match kind {
                EstimatorKind::Tracking => match mode {
                    SelectionMode::LowerBound => step.record.lower_bound.clone(),
                    SelectionMode::Percentile25 => step.record.percentile_25.clone(),
                    SelectionMode::Median => step.record.median.clone(),
                },
                other => snapshots
                    .iter()
                    .find(|s| s.kind == *other)
                    .expect("snapshot built for every requested baseline")
                    .estimates(*mode)
                    .to_vec(),
            };
            s.update(&estimates, &truth_now, cfg.gamma_cp, &model);
        }
        for (kind, widths) in ci_width.iter_mut() {
            let w = match kind {
                EstimatorKind::Tracking => {
                    let total: u64 = step
                        .record
                        .ci_lo
                        .iter()
                        .zip(&step.record.ci_hi)
                        .map(|(lo, hi)| (hi - lo + 1) as u64)
                        .sum();
                    total as f64 / step.record.ci_lo.len() as f64
                }
                other => snapshots
                    .iter()
                    .find(|s| s.kind == *other)
                    .expect("snapshot built for every requested baseline")
                    .mean_ci_width(),
            };
            widths.push(w);
        }

        if opts.keep_records {
            records.push(SimStepRecord {
                replica: replica_index,
                truth: truth_now,
                step: step.record,
                baselines: snapshots,
            });
        }
        measurer.advance_truth();
    }

    let belief_snapshot = if opts.snapshot_beliefs {
        let mut buf = Vec::new();
        tracker.beliefs().write_snapshot(&mut buf, tracker.slices())?;
        Some(String::from_utf8(buf).expect("snapshot lines are JSON"))
    } else {
        None
    };

    Ok(ReplicaResult {
        series,
        ci_width,
        slices: tracker.slices(),
        records,
        belief_snapshot,
    })
}

/// Recomputes the full metric series for one (estimator, mode) from logged
/// step records — must reproduce the in-run series exactly.
pub fn recompute_series(
    records: &[SimStepRecord],
    kind: EstimatorKind,
    mode: SelectionMode,
    gamma: f64,
    model: &LikelihoodModel,
) -> MetricSeries {
    let mut series = MetricSeries::default();
    for rec in records {
        let estimates: Vec<u32> = match kind {
            EstimatorKind::Tracking => match mode {
                SelectionMode::LowerBound => rec.step.lower_bound.clone(),
                SelectionMode::Percentile25 => rec.step.percentile_25.clone(),
                SelectionMode::Median => rec.step.median.clone(),
            },
            other => rec
                .baselines
                .iter()
                .find(|s| s.kind == other)
                .expect("record holds every baseline")
                .estimates(mode)
                .to_vec(),
        };
        series.update(&estimates, &rec.truth, gamma, model);
    }
    series
}

/// Consumer of per-replica belief snapshots: (replica index, JSONL snapshot).
pub type BeliefSink<'a> = &'a mut dyn FnMut(usize, &str) -> Result<()>;

/// Sinks for the experiment's artifacts; any of them may be absent.
#[derive(Default)]
pub struct ExperimentSinks<'a> {
    /// JSONL, one `SimStepRecord` per line, all replicas concatenated.
    pub records: Option<&'a mut dyn IoWrite>,
    /// Called once per replica with its final belief snapshot (JSONL, one
    /// line per link).
    pub beliefs: Option<BeliefSink<'a>>,
}

/// Runs `cfg.replicas` independent replicas over one shared topology
/// (generated from the master seed) and pools the metric series.
pub fn run_experiment(cfg: &RunConfig, sinks: &mut ExperimentSinks) -> Result<ExperimentResult> {
    cfg.validate()?;
    let topo = generate_random_topology(cfg.end_nodes, cfg.seed)?;
    let seeds = derive_seeds(cfg.seed, cfg.replicas);
    let opts = ReplicaOpts {
        keep_records: sinks.records.is_some(),
        snapshot_beliefs: sinks.beliefs.is_some(),
    };
    let results: Vec<Result<ReplicaResult>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_replica(&topo, cfg, *s, i, opts))
        .collect();

    let mut pooled: BTreeMap<(EstimatorKind, SelectionMode), Vec<MetricCounters>> = BTreeMap::new();
    let mut width_sums: BTreeMap<EstimatorKind, Vec<f64>> = BTreeMap::new();
    let mut n = 0usize;
    for (index, result) in results.into_iter().enumerate() {
        let replica = result?;
        n += 1;
        for ((kind, mode), s) in &replica.series {
            let slot = pooled
                .entry((*kind, *mode))
                .or_insert_with(|| vec![MetricCounters::default(); s.rows.len()]);
            for (acc, row) in slot.iter_mut().zip(&s.rows) {
                acc.absorb(row);
            }
        }
        for (kind, widths) in &replica.ci_width {
            let slot = width_sums
                .entry(*kind)
                .or_insert_with(|| vec![0.0; widths.len()]);
            for (acc, w) in slot.iter_mut().zip(widths) {
                *acc += w;
            }
        }
        if let Some(out) = sinks.records.as_mut() {
            for rec in &replica.records {
                serde_json::to_writer(&mut **out, rec)?;
                out.write_all(b"\n")?;
            }
        }
        if let Some(cb) = sinks.beliefs.as_mut() {
            if let Some(snap) = &replica.belief_snapshot {
                cb(index, snap)?;
            }
        }
    }
    for widths in width_sums.values_mut() {
        for w in widths.iter_mut() {
            *w /= n as f64;
        }
    }
    Ok(ExperimentResult {
        topology: topo,
        series: pooled,
        ci_width: width_sums,
        replicas: n,
    })
}

/// Writes one (estimator, mode) running-average series as CSV:
/// `t,ps,cr,cp` with empty cells where a cost has no samples yet.
pub fn write_metrics_csv(rows: &[MetricCounters], mut out: impl IoWrite) -> Result<()> {
    writeln!(out, "t,ps,cr,cp")?;
    for (i, c) in rows.iter().enumerate() {
        let cr = c.cr().map(|v| format!("{v}")).unwrap_or_default();
        let cp = c.cp().map(|v| format!("{v}")).unwrap_or_default();
        writeln!(out, "{},{},{},{}", i + 1, c.ps(), cr, cp)?;
    }
    Ok(())
}
