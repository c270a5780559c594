//! Evaluation episodes, controller comparisons and ablation sweeps, plus their CSV and
//! markdown reports.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_training, AgentConfig, MoveLight};
use crate::controllers::{Controller, FixedTime, MaxPressure, RandomPhase};
use crate::error::{Error, Result};
use crate::frap::{FrapConfig, ParamStore};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::network::RoadNetwork;
use crate::sim::{FlowSpec, SimConfig, SimState};

/// Green time per phase of the plain fixed-time plan.
pub const FIXED_GREEN_S: f64 = 30.0;
pub const DEFAULT_EVAL_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const HEADS_SWEEP: [usize; 5] = [1, 3, 5, 7, 9];
pub const NEIGHBORS_SWEEP: [usize; 5] = [2, 3, 4, 5, 6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Fixed,
    Webster,
    MaxPressure,
    MoveLight,
    Random,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Fixed,
        ControllerKind::Webster,
        ControllerKind::MaxPressure,
        ControllerKind::MoveLight,
        ControllerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "fixed",
            ControllerKind::Webster => "webster",
            ControllerKind::MaxPressure => "maxpressure",
            ControllerKind::MoveLight => "movelight",
            ControllerKind::Random => "random",
        }
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown controller `{s}`"))
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Trained parameters for the learned controller.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedPolicy {
    pub params: ParamStore,
    pub network: FrapConfig,
}

pub fn build_controller(
    kind: ControllerKind,
    net: &RoadNetwork,
    flows: &FlowSpec,
    cfg: &SimConfig,
    seed: u64,
    policy: Option<&LearnedPolicy>,
) -> Result<Box<dyn Controller + Send>> {
    Ok(match kind {
        ControllerKind::Fixed => Box::new(FixedTime::uniform(net, FIXED_GREEN_S)),
        ControllerKind::Webster => Box::new(FixedTime::webster(net, flows, cfg)?),
        ControllerKind::MaxPressure => Box::new(MaxPressure),
        ControllerKind::Random => Box::new(RandomPhase::new(seed)),
        ControllerKind::MoveLight => {
            let p = policy.ok_or_else(|| Error::Checkpoint("the movelight controller needs a checkpoint".into()))?;
            Box::new(MoveLight::new(net, p.params.clone(), p.network.clone())?)
        }
    })
}

/// Runs one episode to the horizon, checking vehicle conservation after every step.
pub fn run_episode(
    net: &RoadNetwork,
    flows: &FlowSpec,
    cfg: &SimConfig,
    controller: &mut dyn Controller,
    seed: u64,
) -> Result<EpisodeMetrics> {
    run_episode_with(net, flows, cfg, controller, seed, |_, _| Ok(()))
}

/// [`run_episode`] with a hook called after every step.
pub fn run_episode_with(
    net: &RoadNetwork,
    flows: &FlowSpec,
    cfg: &SimConfig,
    controller: &mut dyn Controller,
    seed: u64,
    mut after_step: impl FnMut(&SimState, &MetricsAccumulator) -> Result<()>,
) -> Result<EpisodeMetrics> {
    let mut state = SimState::new(net, flows, cfg, seed)?;
    let mut acc = MetricsAccumulator::new(net);
    let mut signal = vec![0; net.intersections.len()];
    for t in 0..cfg.horizon_steps {
        if controller.every_step() || t % cfg.decision_interval_s == 0 {
            signal = controller.decide(&state, net, cfg)?;
        }
        state.step(net, flows, cfg, &signal)?;
        let census = state.census();
        if !census.conserved() {
            return Err(Error::Conservation { step: state.clock(), detail: format!("{census:?}") });
        }
        acc.record_step(&state, net);
        after_step(&state, &acc)?;
    }
    Ok(acc.finalize(cfg.horizon_steps))
}

/// One episode per seed, in seed order; seeds may run in parallel.
pub fn evaluate(
    kind: ControllerKind,
    net: &RoadNetwork,
    flows: &FlowSpec,
    cfg: &SimConfig,
    seeds: &[u64],
    policy: Option<&LearnedPolicy>,
) -> Result<Vec<EpisodeMetrics>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = build_controller(kind, net, flows, cfg, seed, policy)?;
            run_episode(net, flows, cfg, c.as_mut(), seed)
        })
        .collect()
}

/// One CSV row of per-seed results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub travel_time: Option<f64>,
    pub throughput: usize,
    pub avg_queue: f64,
    pub avg_delay: Option<f64>,
    pub unfinished: usize,
}

impl MetricsRow {
    pub fn new(scenario: &str, controller: &str, seed: u64, m: &EpisodeMetrics) -> Self {
        MetricsRow {
            scenario: scenario.into(),
            controller: controller.into(),
            seed,
            travel_time: m.avg_travel_time_s,
            throughput: m.throughput,
            avg_queue: m.avg_queue,
            avg_delay: m.avg_delay_s,
            unfinished: m.unfinished,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidScenario(format!("csv: {other:?}")),
    }
}

/// Serializes any rows with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, sd, n })
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

/// Summaries over seeds. Travel time and delay only average seeds where something finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub travel_time: Option<Summary>,
    pub throughput: Option<Summary>,
    pub avg_queue: Option<Summary>,
    pub avg_delay: Option<Summary>,
    pub unfinished: Option<Summary>,
}

impl Aggregate {
    pub fn of(per_seed: &[EpisodeMetrics]) -> Self {
        let pick = |f: &dyn Fn(&EpisodeMetrics) -> Option<f64>| -> Option<Summary> {
            Summary::of(&per_seed.iter().filter_map(f).collect::<Vec<_>>())
        };
        Aggregate {
            travel_time: pick(&|m| m.avg_travel_time_s),
            throughput: pick(&|m| Some(m.throughput as f64)),
            avg_queue: pick(&|m| Some(m.avg_queue)),
            avg_delay: pick(&|m| m.avg_delay_s),
            unfinished: pick(&|m| Some(m.unfinished as f64)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub sim: SimConfig,
    pub demand_scale: f64,
    pub agent: Option<AgentConfig>,
}

/// Per-seed results of one controller on one scenario, with their aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub controller: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<EpisodeMetrics>,
    pub aggregate: Aggregate,
    pub config: ConfigSnapshot,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(
        scenario: &str,
        controller: &str,
        seeds: &[u64],
        per_seed: Vec<EpisodeMetrics>,
        config: ConfigSnapshot,
        wall_clock_s: f64,
    ) -> Self {
        RunReport {
            scenario: scenario.into(),
            controller: controller.into(),
            seeds: seeds.to_vec(),
            aggregate: Aggregate::of(&per_seed),
            per_seed,
            config,
            wall_clock_s,
        }
    }

    pub fn rows(&self) -> Vec<MetricsRow> {
        self.seeds
            .iter()
            .zip(&self.per_seed)
            .map(|(&s, m)| MetricsRow::new(&self.scenario, &self.controller, s, m))
            .collect()
    }
}

/// Evaluates every controller on the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    scenario: &str,
    net: &RoadNetwork,
    flows: &FlowSpec,
    cfg: &SimConfig,
    demand_scale: f64,
    controllers: &[ControllerKind],
    seeds: &[u64],
    policy: Option<&LearnedPolicy>,
) -> Result<Vec<RunReport>> {
    controllers
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let per_seed = evaluate(kind, net, flows, cfg, seeds, policy)?;
            let config = ConfigSnapshot { sim: cfg.clone(), demand_scale, agent: None };
            Ok(RunReport::new(scenario, kind.name(), seeds, per_seed, config, start.elapsed().as_secs_f64()))
        })
        .collect()
}

fn cell(s: Option<Summary>) -> String {
    s.map_or_else(|| "n/a".into(), |s| s.to_string())
}

/// Controllers as rows, metrics as columns, each cell `mean ± sd` over seeds.
pub fn markdown_table(reports: &[RunReport]) -> String {
    let mut out = String::from(
        "| controller | travel time (s) | avg queue (veh) | delay (s) | throughput (veh) |\n|---|---|---|---|---|\n",
    );
    for r in reports {
        let a = &r.aggregate;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.controller,
            cell(a.travel_time),
            cell(a.avg_queue),
            cell(a.avg_delay),
            cell(a.throughput)
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Heads,
    Neighbors,
}

impl Sweep {
    pub fn values(self) -> &'static [usize] {
        match self {
            Sweep::Heads => &HEADS_SWEEP,
            Sweep::Neighbors => &NEIGHBORS_SWEEP,
        }
    }

    pub fn apply(self, base: &AgentConfig, value: usize) -> AgentConfig {
        let mut cfg = base.clone();
        match self {
            Sweep::Heads => cfg.network.heads = value,
            Sweep::Neighbors => cfg.network.max_neighbors = value,
        }
        cfg
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "heads" => Ok(Sweep::Heads),
            "neighbors" => Ok(Sweep::Neighbors),
            _ => Err(format!("unknown sweep `{s}` (expected heads or neighbors)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sweep: Sweep,
    pub value: usize,
    pub train_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
    /// Greedy evaluation of every trained agent on every evaluation seed.
    pub travel_time: Option<Summary>,
    pub avg_queue: Option<Summary>,
    pub throughput: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCsvRow {
    pub sweep: Sweep,
    pub value: usize,
    pub travel_time_mean: Option<f64>,
    pub travel_time_sd: Option<f64>,
    pub avg_queue_mean: Option<f64>,
    pub avg_queue_sd: Option<f64>,
    pub throughput_mean: Option<f64>,
}

impl AblationRow {
    pub fn csv_row(&self) -> AblationCsvRow {
        AblationCsvRow {
            sweep: self.sweep,
            value: self.value,
            travel_time_mean: self.travel_time.map(|s| s.mean),
            travel_time_sd: self.travel_time.map(|s| s.sd),
            avg_queue_mean: self.avg_queue.map(|s| s.mean),
            avg_queue_sd: self.avg_queue.map(|s| s.sd),
            throughput_mean: self.throughput.map(|s| s.mean),
        }
    }
}

/// Trains one agent per sweep value and training seed, then evaluates each greedily.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    net: &RoadNetwork,
    flows: &FlowSpec,
    sweep: Sweep,
    values: &[usize],
    base: &AgentConfig,
    cfg: &SimConfig,
    train_seeds: &[u64],
    eval_seeds: &[u64],
    mut progress: impl FnMut(usize, u64),
) -> Result<Vec<AblationRow>> {
    if sweep == Sweep::Neighbors && net.intersections.len() < 2 {
        return Err(Error::Config(
            "a neighbor sweep needs a scenario with more than one intersection".into(),
        ));
    }
    values
        .iter()
        .map(|&value| {
            let agent = sweep.apply(base, value);
            agent.check()?;
            let mut per_seed = Vec::new();
            for &seed in train_seeds {
                progress(value, seed);
                let out = run_training(net, flows, &agent, cfg, seed)?;
                let policy = LearnedPolicy { params: out.params, network: agent.network.clone() };
                per_seed.extend(evaluate(ControllerKind::MoveLight, net, flows, cfg, eval_seeds, Some(&policy))?);
            }
            let agg = Aggregate::of(&per_seed);
            Ok(AblationRow {
                sweep,
                value,
                train_seeds: train_seeds.to_vec(),
                eval_seeds: eval_seeds.to_vec(),
                travel_time: agg.travel_time,
                avg_queue: agg.avg_queue,
                throughput: agg.throughput,
            })
        })
        .collect()
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = String::from("| sweep | value | travel time (s) | avg queue (veh) | throughput (veh) |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {:?} | {} | {} | {} | {} |",
            r.sweep,
            r.value,
            cell(r.travel_time),
            cell(r.avg_queue),
            cell(r.throughput)
        );
    }
    out.replace("| Heads |", "| heads |").replace("| Neighbors |", "| neighbors |")
}

/// Sizes the global worker pool from `MOVELIGHT_THREADS`, if set. Returns the pool size.
pub fn configure_threads() -> Result<usize> {
    if let Ok(v) = std::env::var("MOVELIGHT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("MOVELIGHT_THREADS must be a positive integer, got `{v}`")))?;
        // Ignored if the pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
