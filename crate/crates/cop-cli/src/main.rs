//! `cop`: simulate clients running a shared functionality through an
//! untrusted server, record traces, and check them for consistency.
//!
//! Exit codes: 0 when no client halted and every requested check passed,
//! 1 when a run or recorded trace is dirty, 2 on usage or input errors.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cop_core::adversary::AdversarySpec;
use cop_core::checker::EXHAUSTIVE_OP_BOUND;
use cop_core::report::{run_checks, CheckMode, RunReport};
use cop_core::simnet::{replay, run};
use cop_core::{scenarios, CryptoKind, Trace, Workload};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "cop",
    version,
    about = "Run simulated protocol scenarios and check the recorded traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and report per-client outcomes and check results
    Run(RunArgs),
    /// Run consistency checks against a recorded trace
    Check(CheckArgs),
    /// Re-execute a recorded trace's scenario and compare event by event
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Number of clients [default: 2]
    #[arg(long)]
    clients: Option<u64>,

    /// Total operations, dealt round-robin across clients [default: two per client]
    #[arg(long)]
    ops: Option<u64>,

    /// Shared functionality [default: counter]
    #[arg(long, value_enum)]
    workload: Option<WorkloadArg>,

    /// Back the server state by the authenticated store (kv only) [default: off]
    #[arg(long, value_enum)]
    authstore: Option<Toggle>,

    /// Server behavior: none, fork, equivocate_reply, skip_broadcast,
    /// reorder_broadcast, tamper_status, forge_signature, fuzz [default: none]
    #[arg(long)]
    adversary: Option<String>,

    /// Client groups for the forking server, e.g. "1,3|2"
    #[arg(long)]
    partitions: Option<String>,

    /// Seed for operation choice and scheduling [default: 0]
    #[arg(long)]
    seed: Option<u64>,

    /// Signature scheme [default: sha256]
    #[arg(long, value_enum)]
    crypto: Option<CryptoArg>,

    /// Trim server state no client can ask about again [default: off]
    #[arg(long, value_enum)]
    gc: Option<Toggle>,

    /// Write the trace as line-delimited JSON
    #[arg(long)]
    out: Option<PathBuf>,

    /// Checks to run: lin, forklin, whitebox, or none. Defaults to
    /// whitebox plus the exhaustive checks when the history is small
    /// enough for them.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,

    /// Read settings from a TOML file; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print only the JSON report
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file produced by `cop run --out`
    #[arg(long)]
    trace: PathBuf,

    /// Checks to run: lin, forklin, whitebox, or none. Defaults to
    /// whitebox plus the exhaustive checks when the history is small
    /// enough for them.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,

    /// Print only the JSON report
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file produced by `cop run --out`
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WorkloadArg {
    Counter,
    Kv,
}

impl From<WorkloadArg> for Workload {
    fn from(w: WorkloadArg) -> Workload {
        match w {
            WorkloadArg::Counter => Workload::Counter,
            WorkloadArg::Kv => Workload::Kv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CryptoArg {
    Ideal,
    Sha256,
}

impl From<CryptoArg> for CryptoKind {
    fn from(c: CryptoArg) -> CryptoKind {
        match c {
            CryptoArg::Ideal => CryptoKind::Ideal,
            CryptoArg::Sha256 => CryptoKind::Sha256,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn on(self) -> bool {
        matches!(self, Toggle::On)
    }
}

/// Run settings as they appear in a TOML config file. Every field is
/// optional; flags override the file, and built-in defaults fill the
/// rest.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    clients: Option<u64>,
    ops: Option<u64>,
    workload: Option<WorkloadArg>,
    authstore: Option<bool>,
    adversary: Option<String>,
    partitions: Option<String>,
    seed: Option<u64>,
    crypto: Option<CryptoArg>,
    gc: Option<bool>,
}

impl ConfigFile {
    fn merged_over(self, base: ConfigFile) -> ConfigFile {
        ConfigFile {
            clients: self.clients.or(base.clients),
            ops: self.ops.or(base.ops),
            workload: self.workload.or(base.workload),
            authstore: self.authstore.or(base.authstore),
            adversary: self.adversary.or(base.adversary),
            partitions: self.partitions.or(base.partitions),
            seed: self.seed.or(base.seed),
            crypto: self.crypto.or(base.crypto),
            gc: self.gc.or(base.gc),
        }
    }
}

impl RunArgs {
    fn to_config(&self) -> ConfigFile {
        ConfigFile {
            clients: self.clients,
            ops: self.ops,
            workload: self.workload,
            authstore: self.authstore.map(Toggle::on),
            adversary: self.adversary.clone(),
            partitions: self.partitions.clone(),
            seed: self.seed,
            crypto: self.crypto,
            gc: self.gc.map(Toggle::on),
        }
    }
}

fn parse_partitions(s: &str) -> Result<Vec<Vec<u64>>> {
    let mut groups = Vec::new();
    for group in s.split('|') {
        let ids = group
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<u64>()
                    .map_err(|_| anyhow!("bad client id {tok:?} in partitions {s:?}"))
            })
            .collect::<Result<Vec<u64>>>()?;
        groups.push(ids);
    }
    Ok(groups)
}

fn parse_adversary(name: &str, partitions: Option<&str>) -> Result<AdversarySpec> {
    let spec = match name {
        "none" => AdversarySpec::None,
        "fork" => {
            let parts = partitions
                .context("--adversary fork requires --partitions, e.g. \"1,3|2\"")?;
            AdversarySpec::Fork {
                partitions: parse_partitions(parts)?,
            }
        }
        "equivocate_reply" => AdversarySpec::EquivocateReply,
        "skip_broadcast" => AdversarySpec::SkipBroadcast,
        "reorder_broadcast" => AdversarySpec::ReorderBroadcast,
        "tamper_status" => AdversarySpec::TamperStatus,
        "forge_signature" => AdversarySpec::ForgeSignature,
        "fuzz" => AdversarySpec::Fuzz,
        other => bail!(
            "unknown adversary {other:?} (none, fork, equivocate_reply, skip_broadcast, \
             reorder_broadcast, tamper_status, forge_signature, fuzz)"
        ),
    };
    if !matches!(spec, AdversarySpec::Fork { .. }) && partitions.is_some() {
        bail!("--partitions only applies to --adversary fork");
    }
    Ok(spec)
}

/// Turns the `--check`/`--mode` selection into concrete check modes.
/// An empty selection means the adaptive default: whitebox always, and
/// the exhaustive history checks when enough of the history completed
/// for them to accept it.
fn resolve_checks(selected: &[String], trace: &Trace) -> Result<Vec<CheckMode>> {
    if selected.iter().any(|s| s == "none") {
        if selected.len() > 1 {
            bail!("check mode \"none\" excludes the other modes");
        }
        return Ok(Vec::new());
    }
    if selected.is_empty() {
        let complete = trace
            .history()
            .iter()
            .filter(|op| op.completed_at.is_some())
            .count();
        let mut modes = Vec::new();
        if complete <= EXHAUSTIVE_OP_BOUND {
            modes.push(CheckMode::Lin);
            modes.push(CheckMode::ForkLin);
        }
        modes.push(CheckMode::Whitebox);
        return Ok(modes);
    }
    let mut modes = Vec::new();
    for s in selected {
        let mode = s.parse::<CheckMode>().map_err(|e| anyhow!(e))?;
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    Ok(modes)
}

/// Writes to stdout, swallowing broken pipes so `cop ... | head` exits
/// quietly instead of panicking.
fn print_out(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(anyhow!("writing report: {e}"))
        }
        _ => Ok(()),
    }
}

/// Prints the report: human-readable text followed by the same report
/// as a single line of JSON, or the JSON alone with `--json`.
fn emit(report: &RunReport, json_only: bool) -> Result<()> {
    if json_only {
        print_out(&format!("{}\n", report.render_json()))
    } else {
        let compact = serde_json::to_string(report).expect("report serializes");
        print_out(&format!("{}{compact}\n", report.render_text()))
    }
}

fn load_trace(path: &PathBuf) -> Result<Trace> {
    let file =
        File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    Trace::read_jsonl(BufReader::new(file))
        .with_context(|| format!("reading trace {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let file_cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str::<ConfigFile>(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    let cfg = args.to_config().merged_over(file_cfg);

    let clients = cfg.clients.unwrap_or(2);
    if clients == 0 {
        bail!("--clients must be at least 1");
    }
    let ops = cfg.ops.unwrap_or(clients * 2);
    let workload: Workload = cfg.workload.unwrap_or(WorkloadArg::Counter).into();
    let adversary = parse_adversary(
        cfg.adversary.as_deref().unwrap_or("none"),
        cfg.partitions.as_deref(),
    )?;

    let mut scenario = scenarios::dealt_scenario(cfg.seed.unwrap_or(0), clients, ops, workload);
    scenario.authstore = cfg.authstore.unwrap_or(false);
    scenario.crypto = cfg.crypto.unwrap_or(CryptoArg::Sha256).into();
    scenario.gc = cfg.gc.unwrap_or(false);
    scenario.adversary = adversary;

    let trace = run(&scenario).map_err(|e| anyhow!("running scenario: {e}"))?;
    if let Some(path) = &args.out {
        let file = File::create(path)
            .with_context(|| format!("creating trace file {}", path.display()))?;
        trace
            .write_jsonl(BufWriter::new(file))
            .with_context(|| format!("writing trace {}", path.display()))?;
    }

    let modes = resolve_checks(&args.check, &trace)?;
    let report = RunReport::new(&trace, run_checks(&trace, &modes));
    emit(&report, args.json)?;
    Ok(if report.clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let trace = load_trace(&args.trace)?;
    let modes = resolve_checks(&args.mode, &trace)?;
    let report = RunReport::new(&trace, run_checks(&trace, &modes));
    emit(&report, args.json)?;
    Ok(if report.clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode> {
    let trace = load_trace(&args.trace)?;
    match replay(&trace) {
        Ok(_) => {
            print_out(&format!("replay ok: {} events match\n", trace.events.len()))?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("replay failed: {e}");
            Ok(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
