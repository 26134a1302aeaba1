//! `dhpp` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors. Machine-readable output goes
//! to standard output; progress and diagnostics go to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::harness::{export_csv, run_sweep, SweepConfig, SweepSummary};
use crate::placement::Placement;
use crate::scenario::{generate_scenario, Scenario, ScenarioError, SizeRange};
use crate::solver::{brute_force_oracle, solve_multistage, solve_stage1, SolveError, SolveOutcome};
use crate::topo::{load_topology, Topology};

#[derive(Debug, Parser)]
#[command(
    name = "dhpp",
    version,
    about = "Exact dynamic hypervisor placement for virtual SDNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Topology inspection.
    Topo {
        #[command(subcommand)]
        command: TopoCommand,
    },
    /// Scenario generation.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Solve an instance with the three-stage optimizer, or stage 1 only without a prior.
    Solve(SolveArgs),
    /// Run an experiment sweep.
    Sweep(SweepArgs),
    /// Solve a small instance by exhaustive enumeration.
    Oracle(OracleArgs),
}

#[derive(Debug, Subcommand)]
enum TopoCommand {
    /// Print node and link counts and latency extremes.
    Info {
        #[arg(long)]
        input: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    /// Generate a random set of vSDNs.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    n_vsdns: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, requires = "size_max")]
    size_min: Option<usize>,
    #[arg(long, requires = "size_min")]
    size_max: Option<usize>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Placement JSON of the current embedding, or `none`.
    #[arg(long)]
    prior: String,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Output file; standard output when omitted.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for rows.csv and summary.json.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Placement JSON of the current embedding, or `none`.
    #[arg(long)]
    prior: String,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

/// Objectives as written by `solve` and `oracle`. Reconfiguration counts are absent without a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportObjectives {
    pub l_avg_ms: f64,
    pub total_latency_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_loc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_hv: Option<usize>,
}

/// JSON document written by `solve` and `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub placement: Placement,
    pub l_star_ms: f64,
    pub rho: f64,
    pub latency_budget_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_loc_star: Option<usize>,
    pub objectives: ReportObjectives,
    pub solve_time_ms: f64,
    pub nodes_explored: u64,
}

impl SolveReport {
    pub fn new(out: SolveOutcome, with_prior: bool) -> Self {
        let o = out.objectives;
        Self {
            placement: out.placement,
            l_star_ms: out.bounds.l_star_ms,
            rho: out.bounds.rho,
            latency_budget_ms: out.bounds.latency_budget_ms,
            r_loc_star: out.bounds.r_loc_star,
            objectives: ReportObjectives {
                l_avg_ms: o.l_avg_ms,
                total_latency_ns: o.total_latency_ns,
                r_loc: with_prior.then_some(o.r_loc),
                r_hv: with_prior.then_some(o.r_hv),
            },
            solve_time_ms: out.solve_time_ms,
            nodes_explored: out.nodes_explored,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Topology summary as printed by `topo info --json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoInfo {
    pub name: String,
    pub nodes: usize,
    pub links: usize,
    pub min_link_latency_ms: f64,
    pub max_link_latency_ms: f64,
    pub mean_link_latency_ms: f64,
    pub diameter_ms: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Topo {
            command: TopoCommand::Info { input, json },
        } => topo_info(&input, json, out),
        Command::Scenario {
            command: ScenarioCommand::Gen(args),
        } => scenario_gen(args, out),
        Command::Solve(args) => solve(args, out),
        Command::Sweep(args) => sweep(args, out),
        Command::Oracle(args) => oracle(args, out),
    }
}

fn load_topo(path: &Path) -> Result<Topology, CliError> {
    load_topology(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(runtime)
}

fn topo_info(input: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let topo = load_topo(input)?;
    let s = topo.summary();
    let info = TopoInfo {
        name: s.name,
        nodes: s.nodes,
        links: s.links,
        min_link_latency_ms: s.min_link_latency_ms,
        max_link_latency_ms: s.max_link_latency_ms,
        mean_link_latency_ms: s.mean_link_latency_ms,
        diameter_ms: s.diameter_ms,
    };
    if json {
        emit(out, &serde_json::to_string_pretty(&info).map_err(runtime)?)
    } else {
        emit(
            out,
            &format!(
                "topology: {}\nnodes: {}, links: {}\nlink latency ms: min {:.4}, max {:.4}, mean {:.4}\ndiameter ms: {:.4}",
                info.name,
                info.nodes,
                info.links,
                info.min_link_latency_ms,
                info.max_link_latency_ms,
                info.mean_link_latency_ms,
                info.diameter_ms
            ),
        )
    }
}

fn scenario_gen(args: GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let topo = load_topo(&args.topology)?;
    let size_range = match (args.size_min, args.size_max) {
        (Some(min), Some(max)) => Some(SizeRange::new(min, max)),
        _ => None,
    };
    let scenario = generate_scenario(&topo, args.n_vsdns, args.k, args.seed, size_range).map_err(
        |e| match e {
            ScenarioError::Invalid(_) => runtime(e),
            _ => CliError::Usage(e.to_string()),
        },
    )?;
    write_file(&args.output, &scenario.to_json())?;
    emit(out, &format!("vcps: {}", scenario.vcp_count()))
}

fn load_instance(
    topology: &Path,
    scenario: &Path,
    prior: &str,
) -> Result<(Topology, Scenario, Option<Placement>), CliError> {
    let topo = load_topo(topology)?;
    let scenario = Scenario::from_json(&read_file(scenario)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", scenario.display())))?;
    let prior = if prior == "none" {
        None
    } else {
        let path = Path::new(prior);
        Some(
            Placement::from_json(&read_file(path)?)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        )
    };
    Ok((topo, scenario, prior))
}

fn write_report(
    report: &SolveReport,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match output {
        Some(path) => write_file(path, &report.to_json()),
        None => emit(out, &report.to_json()),
    }
}

fn solve(args: SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (topo, scenario, prior) = load_instance(&args.topology, &args.scenario, &args.prior)?;
    let outcome = match &prior {
        None => solve_stage1(&topo, &scenario),
        Some(p) => solve_multistage(&topo, &scenario, p, args.rho),
    }
    .map_err(runtime)?;
    write_report(
        &SolveReport::new(outcome, prior.is_some()),
        args.output.as_deref(),
        out,
    )
}

fn oracle(args: OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (topo, scenario, prior) = load_instance(&args.topology, &args.scenario, &args.prior)?;
    let outcome =
        brute_force_oracle(&topo, &scenario, prior.as_ref(), args.rho).map_err(|e| match e {
            SolveError::InstanceTooLarge { .. } => CliError::Usage(e.to_string()),
            _ => runtime(e),
        })?;
    write_report(
        &SolveReport::new(outcome, prior.is_some()),
        args.output.as_deref(),
        out,
    )
}

fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let text = read_file(&args.config)?;
    let mut config: SweepConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.config.display())))?;
    config.validate().map_err(runtime)?;
    // relative topology paths are taken from the config file's directory
    let topo_path = if config.topology.is_relative() {
        args.config
            .parent()
            .unwrap_or(Path::new(""))
            .join(&config.topology)
    } else {
        config.topology.clone()
    };
    let topo = load_topo(&topo_path)?;
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();

    let result = run_sweep(&config, &topo, args.jobs).map_err(runtime)?;
    fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.output.display())))?;
    let csv_path = args.output.join("rows.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
    export_csv(&result.rows, std::io::BufWriter::new(file)).map_err(runtime)?;
    config.topology = topo_path;
    let summary = SweepSummary::new(&config, &result);
    write_file(
        &args.output.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(runtime)?,
    )?;
    for f in &result.failures {
        eprintln!(
            "cell k={} n_vsdns={} seed={} failed: {}",
            f.k, f.n_vsdns_initial, f.seed, f.error
        );
    }
    let succeeded = result.failures.len()
        < config.k_values.len() * config.n_vsdns_values.len() * config.seeds.len();
    if !succeeded {
        return Err(CliError::Runtime("every cell failed".into()));
    }
    emit(out, &format!("rows: {}", result.rows.len()))
}
