//! Command-line surface: simulated tracking experiments, live tracking over
//! UDP, one-shot probe utilities, outcome-model fitting, and offline
//! re-analysis of logged runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use pabtrack::chirp::{solve_chirp, ChirpObservation, ChirpSpec};
use pabtrack::config::RunConfig;
use pabtrack::error::{PabError, Result};
use pabtrack::estimator::{EstimatorKind, SelectionMode};
use pabtrack::likelihood::fit_alpha;
use pabtrack::probe::{measure_path, ChirpReceipt, Receiver, ReceiverConfig};
use pabtrack::sim::{
    recompute_series, run_experiment, ExperimentSinks, MetricCounters, SimStepRecord,
    write_metrics_csv,
};
use pabtrack::topology::{load_topology, save_topology, PathId};
use pabtrack::tracker::{Measurer, Tracker};

#[derive(Parser)]
#[command(
    name = "pabtrack",
    version,
    about = "Track probabilistic available bandwidth across multiple network paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-replica tracking experiment against simulated truth.
    Simulate(SimulateArgs),
    /// Track real paths by probing them over UDP.
    TrackLive(TrackLiveArgs),
    /// One-shot probe utilities.
    #[command(subcommand)]
    Probe(ProbeCmd),
    /// Fit the outcome-model slope from logged (gap, outcome) samples.
    FitAlpha(FitAlphaArgs),
    /// Recompute metric series from a logged run.
    Analyze(AnalyzeArgs),
}

/// Run-configuration keys, each exposed 1:1 as a flag; flags override the
/// config file, which overrides the built-in defaults.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for topology, truth, and all sampling streams.
    #[arg(long)]
    seed: Option<u64>,
    /// End nodes in the generated topology.
    #[arg(long)]
    end_nodes: Option<usize>,
    /// Measurements per replica.
    #[arg(long)]
    steps: Option<usize>,
    /// Independent replicas.
    #[arg(long)]
    replicas: Option<usize>,
    /// Measurements per slice between belief updates.
    #[arg(long)]
    lambda: Option<usize>,
    /// Confidence-interval probability mass.
    #[arg(long)]
    eta: Option<f64>,
    /// Target success probability behind the feasibility notion.
    #[arg(long)]
    gamma: Option<f64>,
    /// Reference success level for the overestimation cost.
    #[arg(long)]
    gamma_cp: Option<f64>,
    /// Rate tolerance in Mbps for a successful transmission.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Outcome-model steepness (negative).
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Mixture components per link.
    #[arg(long)]
    n_v: Option<usize>,
    /// Resample a link when its effective component count drops below this.
    #[arg(long)]
    n_eff_threshold: Option<f64>,
    /// Between-slice diffusion std-dev in Mbps.
    #[arg(long)]
    sigma_h: Option<f64>,
    /// Mixture-component std-dev in Mbps.
    #[arg(long)]
    sigma_mu: Option<f64>,
    /// Lowest rate on the grid, Mbps.
    #[arg(long)]
    b_min: Option<u32>,
    /// Highest rate on the grid, Mbps.
    #[arg(long)]
    b_max: Option<u32>,
    /// Packets per chirp train.
    #[arg(long)]
    chirp_k: Option<usize>,
    /// Gaps per measurement window.
    #[arg(long)]
    chirp_k_min: Option<usize>,
    /// Probe packet size in bytes.
    #[arg(long)]
    packet_bytes: Option<usize>,
    /// Truth increments, comma-separated (e.g. -2,-1,0,1,2).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_values: Option<Vec<i64>>,
    /// Probabilities matching --delta-values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    delta_probs: Option<Vec<f64>>,
    /// Estimators to score: tracking, all_history, recent_window.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    estimators: Option<Vec<EstimatorKind>>,
    /// Selection rules to score: lower_bound, percentile_25, median.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    modes: Option<Vec<SelectionMode>>,
    /// Message-passing convergence tolerance.
    #[arg(long)]
    bp_tol: Option<f64>,
    /// Message-passing iteration cap.
    #[arg(long)]
    bp_max_iters: Option<usize>,
    /// Message damping in [0,1).
    #[arg(long)]
    bp_damping: Option<f64>,
}

fn parse_kind(s: &str) -> std::result::Result<EstimatorKind, String> {
    EstimatorKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown estimator '{s}', expected one of {}", names.join(", "))
        })
}

fn parse_mode(s: &str) -> std::result::Result<SelectionMode, String> {
    SelectionMode::ALL
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = SelectionMode::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown selection rule '{s}', expected one of {}", names.join(", "))
        })
}

macro_rules! apply_overrides {
    ($cfg:ident, $args:ident; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let args = self;
        apply_overrides!(
            cfg, args;
            seed, end_nodes, steps, replicas, lambda, eta, gamma, gamma_cp, epsilon,
            alpha, n_v, n_eff_threshold, sigma_h, sigma_mu, b_min, b_max, chirp_k,
            chirp_k_min, packet_bytes, delta_values, delta_probs, estimators, modes,
            bp_tol, bp_max_iters, bp_damping,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for all artifacts.
    #[arg(long, short, default_value = "runs/latest")]
    out: PathBuf,
    /// Also log every step to records.jsonl (enables offline re-analysis).
    #[arg(long)]
    records: bool,
    /// Also snapshot each replica's final beliefs to beliefs_r<i>.jsonl.
    #[arg(long)]
    beliefs: bool,
}

#[derive(Args)]
struct TrackLiveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Topology JSON describing the probed paths.
    #[arg(long)]
    topology: PathBuf,
    /// JSON array mapping path index to a receiver "host:port".
    #[arg(long)]
    targets: PathBuf,
    /// Local UDP bind address for the probe sender.
    #[arg(long, default_value = "0.0.0.0:0")]
    bind: String,
    /// Output directory for all artifacts.
    #[arg(long, short, default_value = "runs/live")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ProbeCmd {
    /// Send one chirp train and print the interpreted observation as JSON.
    Send(ProbeSendArgs),
    /// Receive chirp trains and print receipts as JSON lines.
    Recv(ProbeRecvArgs),
}

#[derive(Args)]
struct ProbeSendArgs {
    /// Receiver address, host:port.
    #[arg(long)]
    dest: String,
    /// Lowest probed rate in Mbps.
    #[arg(long)]
    rmin: f64,
    /// Highest probed rate in Mbps.
    #[arg(long)]
    rmax: f64,
    /// Packets in the train.
    #[arg(long, default_value_t = 75)]
    k: usize,
    /// Gaps per measurement window.
    #[arg(long, default_value_t = 15)]
    kmin: usize,
    /// Probe packet size in bytes.
    #[arg(long, default_value_t = 1000)]
    packet_bytes: usize,
    /// Rate tolerance in Mbps for a successful transmission.
    #[arg(long, default_value_t = 5.0)]
    epsilon: f64,
    /// Local UDP bind address.
    #[arg(long, default_value = "0.0.0.0:0")]
    bind: String,
}

#[derive(Args)]
struct ProbeRecvArgs {
    /// UDP port to listen on.
    #[arg(long, default_value_t = 7575)]
    port: u16,
    /// Bind address.
    #[arg(long, default_value = "0.0.0.0")]
    bind: String,
    /// Stop after this many receipts (runs until killed by default).
    #[arg(long)]
    max_receipts: Option<u64>,
}

#[derive(Args)]
struct FitAlphaArgs {
    /// CSV with header `gap,outcome`: rate minus true bandwidth, 0/1 outcome.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Step-record JSONL written by `simulate --records`.
    #[arg(long)]
    input: PathBuf,
    /// Effective-config JSON of the original run (defaults otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for recomputed metric CSVs; summary only when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn exit_code(e: &PabError) -> i32 {
    match e {
        PabError::Config(_)
        | PabError::Topology(_)
        | PabError::Chirp(_)
        | PabError::Likelihood(_)
        | PabError::DegenerateData(_)
        | PabError::GridMismatch { .. }
        | PabError::Json(_) => 2,
        PabError::Measurement(_) | PabError::EmptyObservation { .. } => 3,
        PabError::Io(_) => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::TrackLive(args) => track_live(args),
        Command::Probe(ProbeCmd::Send(args)) => probe_send(args),
        Command::Probe(ProbeCmd::Recv(args)) => probe_recv(args),
        Command::FitAlpha(args) => fit_alpha_cmd(args),
        Command::Analyze(args) => analyze(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn metrics_file_name(kind: EstimatorKind, mode: SelectionMode) -> String {
    format!("metrics_{}_{}.csv", kind.as_str(), mode.as_str())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.config.build()?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("config.json"), cfg.to_json())?;

    let mut records_file = if args.records {
        Some(create(&args.out.join("records.jsonl"))?)
    } else {
        None
    };
    let out_dir = args.out.clone();
    let mut belief_writer = |replica: usize, snapshot: &str| -> Result<()> {
        std::fs::write(out_dir.join(format!("beliefs_r{replica}.jsonl")), snapshot)?;
        Ok(())
    };
    let mut sinks = ExperimentSinks {
        records: records_file.as_mut().map(|f| f as &mut dyn Write),
        beliefs: args
            .beliefs
            .then_some(&mut belief_writer as &mut dyn FnMut(usize, &str) -> Result<()>),
    };

    let result = run_experiment(&cfg, &mut sinks)?;
    if let Some(f) = records_file.as_mut() {
        f.flush()?;
    }
    save_topology(&result.topology, args.out.join("topology.json"))?;

    for ((kind, mode), rows) in &result.series {
        let mut f = create(&args.out.join(metrics_file_name(*kind, *mode)))?;
        write_metrics_csv(rows, &mut f)?;
        f.flush()?;
    }
    write_ci_width_csv(&result.ci_width, cfg.steps, &args.out.join("ci_width.csv"))?;

    let final_summary: Vec<String> = result
        .series
        .iter()
        .filter_map(|((kind, mode), rows)| {
            rows.last()
                .map(|c| format!("{}/{}: PS={:.4}", kind.as_str(), mode.as_str(), c.ps()))
        })
        .collect();
    println!(
        "simulated {} replicas x {} steps over {} paths / {} links",
        result.replicas,
        cfg.steps,
        result.topology.n_paths(),
        result.topology.n_links()
    );
    for line in final_summary {
        println!("{line}");
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn write_ci_width_csv(
    widths: &BTreeMap<EstimatorKind, Vec<f64>>,
    steps: usize,
    path: &Path,
) -> Result<()> {
    let mut f = create(path)?;
    let kinds: Vec<EstimatorKind> = widths.keys().copied().collect();
    let header: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
    writeln!(f, "t,{}", header.join(","))?;
    for t in 0..steps {
        let row: Vec<String> = kinds
            .iter()
            .map(|k| widths[k].get(t).map(|w| format!("{w}")).unwrap_or_default())
            .collect();
        writeln!(f, "{},{}", t + 1, row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Measurement backend that probes real paths over UDP.
struct LiveMeasurer {
    socket: UdpSocket,
    targets: Vec<SocketAddr>,
    packet_bytes: usize,
    epsilon: f64,
}

impl Measurer for LiveMeasurer {
    fn measure(&mut self, path: PathId, spec: &ChirpSpec) -> Result<ChirpObservation> {
        measure_path(
            &self.socket,
            self.targets[path.index()],
            spec,
            self.packet_bytes,
            self.epsilon,
            path,
        )
    }
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .ok_or_else(|| PabError::Config(format!("address '{addr}' resolves to nothing")))
}

fn track_live(args: TrackLiveArgs) -> Result<()> {
    let cfg = args.config.build()?;
    let topo = load_topology(&args.topology)?;
    let targets_text = std::fs::read_to_string(&args.targets)?;
    let target_strings: Vec<String> = serde_json::from_str(&targets_text)?;
    if target_strings.len() != topo.n_paths() {
        return Err(PabError::Config(format!(
            "targets list has {} entries for {} paths",
            target_strings.len(),
            topo.n_paths()
        )));
    }
    let targets = target_strings
        .iter()
        .map(|s| resolve(s))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("config.json"), cfg.to_json())?;
    let mut records = create(&args.out.join("records.jsonl"))?;
    let mut beliefs = create(&args.out.join("beliefs.jsonl"))?;

    let seeds = pabtrack::sim::derive_seeds(cfg.seed, 1)[0];
    let mut tracker = Tracker::new(&topo, cfg.tracker_params(seeds.filter, seeds.sampler)?)?;
    let mut measurer = LiveMeasurer {
        socket: UdpSocket::bind(&args.bind)?,
        targets,
        packet_bytes: cfg.packet_bytes,
        epsilon: cfg.epsilon,
    };

    tracker.beliefs().write_snapshot(&mut beliefs, 0)?;
    for _ in 0..cfg.steps {
        let step = tracker.step(&mut measurer)?;
        serde_json::to_writer(&mut records, &step.record)?;
        records.write_all(b"\n")?;
        log::info!(
            "t={} path={} windows={} lower bounds={:?}",
            step.record.t,
            step.record.path,
            step.record.windows,
            step.record.lower_bound
        );
        if step.record.boundary {
            tracker.beliefs().write_snapshot(&mut beliefs, tracker.slices())?;
        }
    }
    records.flush()?;
    beliefs.flush()?;

    let estimates: BTreeMap<&str, Vec<u32>> = SelectionMode::ALL
        .into_iter()
        .map(|m| (m.as_str(), tracker.estimates(m)))
        .collect();
    println!("{}", serde_json::to_string_pretty(&estimates)?);
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn probe_send(args: ProbeSendArgs) -> Result<()> {
    let spec = solve_chirp(
        args.rmin,
        args.rmax,
        args.k,
        args.kmin,
        (args.packet_bytes * 8) as f64,
    )?;
    let socket = UdpSocket::bind(&args.bind)?;
    let dest = resolve(&args.dest)?;
    let obs = measure_path(&socket, dest, &spec, args.packet_bytes, args.epsilon, PathId(0))?;
    println!("{}", serde_json::to_string_pretty(&obs)?);
    Ok(())
}

fn probe_recv(args: ProbeRecvArgs) -> Result<()> {
    let mut rx = Receiver::bind((args.bind.as_str(), args.port), ReceiverConfig::default())?;
    log::info!("listening on {}", rx.local_addr()?);
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let mut seen = 0u64;
    let max = args.max_receipts;
    rx.run_until(&stop, move |receipt: &ChirpReceipt| {
        println!(
            "{}",
            serde_json::to_string(receipt).expect("receipts serialize")
        );
        seen += 1;
        if let Some(limit) = max {
            if seen >= limit {
                flag.store(true, Ordering::Relaxed);
            }
        }
    })
}

fn fit_alpha_cmd(args: FitAlphaArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.input).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let gap_col = headers
        .iter()
        .position(|h| h.trim() == "gap")
        .ok_or_else(|| PabError::Config("input needs a 'gap' column".into()))?;
    let outcome_col = headers
        .iter()
        .position(|h| h.trim() == "outcome")
        .ok_or_else(|| PabError::Config("input needs an 'outcome' column".into()))?;
    let mut samples = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let gap: f64 = row
            .get(gap_col)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| PabError::Config(format!("bad gap in row {:?}", row)))?;
        let outcome = match row.get(outcome_col).map(str::trim) {
            Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            other => {
                return Err(PabError::Config(format!(
                    "bad outcome {other:?}, expected 0/1"
                )))
            }
        };
        samples.push((gap, outcome));
    }
    let (alpha, mse) = fit_alpha(&samples)?;
    println!(
        "{}",
        serde_json::json!({ "alpha": alpha, "mse": mse, "samples": samples.len() })
    );
    Ok(())
}

fn csv_err(e: csv::Error) -> PabError {
    PabError::Config(format!("csv: {e}"))
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let model = cfg.model()?;

    let reader = BufReader::new(File::open(&args.input)?);
    let mut by_replica: BTreeMap<usize, Vec<SimStepRecord>> = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SimStepRecord = serde_json::from_str(&line)?;
        by_replica.entry(rec.replica).or_default().push(rec);
    }
    if by_replica.is_empty() {
        return Err(PabError::Config("input holds no step records".into()));
    }

    let mut pooled: BTreeMap<(EstimatorKind, SelectionMode), Vec<MetricCounters>> = BTreeMap::new();
    for records in by_replica.values() {
        for kind in EstimatorKind::ALL {
            if !records[0].baselines.iter().any(|b| b.kind == kind)
                && kind != EstimatorKind::Tracking
            {
                continue;
            }
            for mode in SelectionMode::ALL {
                let series = recompute_series(records, kind, mode, cfg.gamma_cp, &model);
                let slot = pooled
                    .entry((kind, mode))
                    .or_insert_with(|| vec![MetricCounters::default(); series.rows.len()]);
                for (acc, row) in slot.iter_mut().zip(&series.rows) {
                    acc.absorb(row);
                }
            }
        }
    }

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        for ((kind, mode), rows) in &pooled {
            let mut f = create(&out.join(metrics_file_name(*kind, *mode)))?;
            write_metrics_csv(rows, &mut f)?;
            f.flush()?;
        }
        println!("recomputed metrics in {}", out.display());
    }
    println!(
        "replicas: {}, steps: {}",
        by_replica.len(),
        by_replica.values().next().map(|r| r.len()).unwrap_or(0)
    );
    for ((kind, mode), rows) in &pooled {
        if let Some(c) = rows.last() {
            println!("{}/{}: PS={:.4}", kind.as_str(), mode.as_str(), c.ps());
        }
    }
    Ok(())
}
