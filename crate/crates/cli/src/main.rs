use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use movelight::agent::{load_checkpoint, run_training_with, save_checkpoint, AgentConfig, EpisodeRecord};
use movelight::experiment::{
    ablate, ablation_markdown, compare, configure_threads, markdown_table, to_csv, ConfigSnapshot, ControllerKind,
    LearnedPolicy, RunReport, Sweep, DEFAULT_EVAL_SEEDS,
};
use movelight::network::{load_scenario, RoadNetwork, ScenarioDocument};
use movelight::scenarios;
use movelight::sim::{FlowSpec, SimConfig};

#[derive(Parser)]
#[command(name = "movelight", version, about = "Traffic-signal control lab: simulate, train, evaluate, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learned controller and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate one controller over a seed set.
    Eval(EvalArgs),
    /// Evaluate several controllers on the same seeds.
    Compare(CompareArgs),
    /// Sweep attention heads or neighbor count.
    Ablate(AblateArgs),
    /// Check a scenario file and list every problem found.
    Validate(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file, or the name of a bundled scenario (single, grid4x4).
    #[arg(long)]
    scenario: String,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Multiplies every flow rate.
    #[arg(long, default_value_t = 1.0)]
    demand_scale: f64,
    /// Steps per episode.
    #[arg(long, default_value_t = 3600)]
    horizon: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    episodes: Option<usize>,
}

impl NetworkArgs {
    fn agent_config(&self) -> AgentConfig {
        let mut cfg = AgentConfig::default();
        if let Some(h) = self.heads {
            cfg.network.heads = h;
        }
        if let Some(n) = self.neighbors {
            cfg.network.max_neighbors = n;
        }
        if let Some(e) = self.embed_dim {
            cfg.network.embed_dim = e;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the checkpoint (default: <out-dir>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    controller: ControllerKind,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EVAL_SEEDS)]
    seeds: Vec<u64>,
    /// Trained parameters, required for `movelight`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Controllers to compare; `movelight` is added when a checkpoint is given.
    #[arg(long = "controller", value_delimiter = ',', default_values_t = [ControllerKind::Fixed, ControllerKind::Webster, ControllerKind::MaxPressure])]
    controllers: Vec<ControllerKind>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EVAL_SEEDS)]
    seeds: Vec<u64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long)]
    sweep: Sweep,
    /// Sweep values (default: 1,3,5,7,9 heads or 2,3,4,5,6 neighbors).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<usize>>,
    /// Training seeds, one agent per seed and value.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64])]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EVAL_SEEDS)]
    eval_seeds: Vec<u64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(movelight::Error),
}

impl From<movelight::Error> for CliError {
    fn from(e: movelight::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn scenario_text(name: &str) -> CliResult<(String, String)> {
    let path = Path::new(name);
    if path.is_file() {
        let id = path.file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok((id, std::fs::read_to_string(path)?));
    }
    match scenarios::bundled(name) {
        Some(text) => Ok((name.trim_end_matches(".json").to_string(), text.to_string())),
        None => Err(CliError::Usage(format!("scenario `{name}` is neither a file nor a bundled scenario"))),
    }
}

struct Loaded {
    id: String,
    net: RoadNetwork,
    flows: FlowSpec,
    cfg: SimConfig,
    demand_scale: f64,
}

fn load(sim: &SimArgs) -> CliResult<Loaded> {
    let (id, text) = scenario_text(&sim.scenario.scenario)?;
    let (net, flows) = load_scenario(&text)?;
    if !(sim.demand_scale >= 0.0) {
        return Err(CliError::Usage(format!("--demand-scale must be non-negative, got {}", sim.demand_scale)));
    }
    if sim.horizon == 0 {
        return Err(CliError::Usage("--horizon must be positive".into()));
    }
    let cfg = SimConfig { horizon_steps: sim.horizon, ..SimConfig::default() };
    Ok(Loaded { id, net, flows: flows.scaled(sim.demand_scale), cfg, demand_scale: sim.demand_scale })
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn policy_from(checkpoint: Option<&Path>) -> CliResult<Option<LearnedPolicy>> {
    checkpoint
        .map(|p| {
            let (params, network, _) = load_checkpoint(p)?;
            Ok(LearnedPolicy { params, network })
        })
        .transpose()
}

#[derive(Serialize)]
struct EpisodeCsvRow {
    episode: usize,
    sim_seed: u64,
    travel_time: Option<f64>,
    throughput: usize,
    avg_queue: f64,
    avg_delay: Option<f64>,
    unfinished: usize,
    mean_loss: Option<f64>,
    total_reward: f64,
    epsilon: f64,
    train_steps: u64,
}

impl From<&EpisodeRecord> for EpisodeCsvRow {
    fn from(e: &EpisodeRecord) -> Self {
        EpisodeCsvRow {
            episode: e.episode,
            sim_seed: e.sim_seed,
            travel_time: e.metrics.avg_travel_time_s,
            throughput: e.metrics.throughput,
            avg_queue: e.metrics.avg_queue,
            avg_delay: e.metrics.avg_delay_s,
            unfinished: e.metrics.unfinished,
            mean_loss: e.mean_loss,
            total_reward: e.total_reward,
            epsilon: e.epsilon,
            train_steps: e.train_steps,
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    scenario: &'a str,
    seed: u64,
    agent: &'a AgentConfig,
    sim: &'a SimConfig,
    demand_scale: f64,
    train_steps: u64,
    final_avg_queue: Option<f64>,
    wall_clock_s: f64,
}

fn train(args: &TrainArgs) -> CliResult<()> {
    let l = load(&args.sim)?;
    let agent = args.net.agent_config();
    agent.check()?;
    let start = Instant::now();
    let out = run_training_with(&l.net, &l.flows, &agent, &l.cfg, args.seed, |e| {
        eprintln!(
            "episode {:>4}  avg_queue {:>8.3}  throughput {:>6}  epsilon {:.3}",
            e.episode, e.metrics.avg_queue, e.metrics.throughput, e.epsilon
        );
    })?;
    let dir = &args.sim.out_dir;
    std::fs::create_dir_all(dir)?;
    let ck = args.checkpoint.clone().unwrap_or_else(|| dir.join("checkpoint.json"));
    save_checkpoint(&ck, &out.params, &agent.network, out.train_steps)?;
    let rows: Vec<EpisodeCsvRow> = out.episodes.iter().map(EpisodeCsvRow::from).collect();
    write(dir, "episodes.csv", &to_csv(&rows)?)?;
    let report = TrainReport {
        scenario: &l.id,
        seed: args.seed,
        agent: &agent,
        sim: &l.cfg,
        demand_scale: l.demand_scale,
        train_steps: out.train_steps,
        final_avg_queue: out.episodes.last().map(|e| e.metrics.avg_queue),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    write(dir, "train_report.json", &json(&report))?;
    println!("checkpoint written to {}", ck.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    let l = load(&args.sim)?;
    let policy = policy_from(args.checkpoint.as_deref())?;
    let reports = compare(&l.id, &l.net, &l.flows, &l.cfg, l.demand_scale, &[args.controller], &args.seeds, policy.as_ref())?;
    emit_reports(&args.sim.out_dir, "eval", &reports)
}

fn compare_cmd(args: &CompareArgs) -> CliResult<()> {
    let l = load(&args.sim)?;
    let policy = policy_from(args.checkpoint.as_deref())?;
    let mut kinds = args.controllers.clone();
    if policy.is_some() && !kinds.contains(&ControllerKind::MoveLight) {
        kinds.push(ControllerKind::MoveLight);
    }
    let reports = compare(&l.id, &l.net, &l.flows, &l.cfg, l.demand_scale, &kinds, &args.seeds, policy.as_ref())?;
    emit_reports(&args.sim.out_dir, "compare", &reports)
}

fn emit_reports(dir: &Path, stem: &str, reports: &[RunReport]) -> CliResult<()> {
    let rows: Vec<_> = reports.iter().flat_map(RunReport::rows).collect();
    write(dir, &format!("{stem}.csv"), &to_csv(&rows)?)?;
    let table = markdown_table(reports);
    write(dir, &format!("{stem}.md"), &table)?;
    write(dir, &format!("{stem}.json"), &json(&reports))?;
    print!("{table}");
    Ok(())
}

fn ablate_cmd(args: &AblateArgs) -> CliResult<()> {
    let l = load(&args.sim)?;
    let base = args.net.agent_config();
    let values = args.values.clone().unwrap_or_else(|| args.sweep.values().to_vec());
    let start = Instant::now();
    let rows = ablate(&l.net, &l.flows, args.sweep, &values, &base, &l.cfg, &args.seeds, &args.eval_seeds, |v, s| {
        eprintln!("training value {v} seed {s}");
    })?;
    let dir = &args.sim.out_dir;
    let csv_rows: Vec<_> = rows.iter().map(|r| r.csv_row()).collect();
    write(dir, "ablation.csv", &to_csv(&csv_rows)?)?;
    let table = ablation_markdown(&rows);
    write(dir, "ablation.md", &table)?;
    let snapshot = ConfigSnapshot { sim: l.cfg.clone(), demand_scale: l.demand_scale, agent: Some(base) };
    write(
        dir,
        "ablation.json",
        &json(&serde_json::json!({
            "scenario": l.id,
            "rows": rows,
            "config": snapshot,
            "wall_clock_s": start.elapsed().as_secs_f64(),
        })),
    )?;
    print!("{table}");
    Ok(())
}

fn validate(args: &ScenarioArgs) -> CliResult<()> {
    let (id, text) = scenario_text(&args.scenario)?;
    let doc: ScenarioDocument = serde_json::from_str(&text).map_err(|e| movelight::Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let net = doc.build_network()?;
    let violations = net.validate();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(movelight::Error::InvalidScenario(format!("{} violation(s) in {id}", violations.len())).into());
    }
    let (net, flows) = doc.load()?;
    println!(
        "{id}: ok ({} intersections, {} lanes, {} flows)",
        net.intersections.len(),
        net.lanes.len(),
        flows.entries.len()
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
