//! Command-line harness around `best-core`: configuration files, CSV/JSONL
//! artifacts, model persistence, and the `best` binary's subcommands.
//!
//! Exit codes: 0 success, 1 configuration error (bad file, bad flag, invalid
//! field), 2 invariant violation (failed audit, replay divergence, training
//! divergence).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use best_core::assessment::{self, Architecture, ModelParams};
use best_core::consensus::node::NodeMode;
use best_core::crypto::PublicKey;
use best_core::ledger::{Block, Chain};
use best_core::netsim::LogEntry;
use best_core::scenario::{
    reproduce_accuracy_sweep, reproduce_loss_curves, run_scenario, run_scheme, AccuracyGrid,
    ExperimentConfig, LossCurves, RunMetrics, ScenarioError, ScenarioResult, ALL_SCHEMES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

/// Default malicious population for the loss-curve figure.
pub const FIG5_MALICIOUS: u32 = 50;
/// Default sweep points for the accuracy figure.
pub const FIG6_COUNTS: [u32; 5] = [0, 25, 50, 75, 100];

#[derive(Debug)]
pub enum CliError {
    /// Unusable input: missing/unparsable files, invalid config fields.
    Config(String),
    /// The system produced output that violates its own invariants.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Invariant(m) => m,
        }
    }
}

fn io_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {err}", path.display()))
}

fn scenario_err(err: ScenarioError) -> CliError {
    match err {
        ScenarioError::ConfigInvalid(fields) => {
            CliError::Config(format!("invalid config: {}", fields.join("; ")))
        }
        ScenarioError::Train(e) => CliError::Invariant(format!("training failed: {e:?}")),
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Load an experiment config: TOML file if given, built-in defaults
/// otherwise. Seed precedence: `--seed` flag, then `BEST_SEED`, then file.
pub fn load_config(path: Option<&Path>, seed_flag: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str::<ExperimentConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    } else if let Ok(env_seed) = std::env::var("BEST_SEED") {
        cfg.seed = env_seed
            .parse()
            .map_err(|_| CliError::Config(format!("BEST_SEED is not an integer: {env_seed:?}")))?;
    }
    cfg.validate().map_err(scenario_err)?;
    Ok(cfg)
}

/// The shipped default configuration, as TOML.
pub fn default_config_toml() -> String {
    toml::to_string_pretty(&ExperimentConfig::default()).expect("default config serializes")
}

// ---------------------------------------------------------------------------
// CSV / JSONL artifacts
// ---------------------------------------------------------------------------

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Loss-vs-iteration table, one column per scheme.
pub fn fig5_csv(curves: &LossCurves) -> String {
    let mut out = String::from("iteration");
    for run in &curves.runs {
        let _ = write!(out, ",{}", run.scheme.name());
    }
    out.push('\n');
    for i in 0..curves.iterations {
        let _ = write!(out, "{}", i + 1);
        for run in &curves.runs {
            let _ = write!(out, ",{:.6}", run.loss_trace[i]);
        }
        out.push('\n');
    }
    out
}

/// Accuracy grid, one row per malicious count, one column per scheme.
pub fn fig6_csv(grid: &AccuracyGrid) -> String {
    let mut out = String::from("malicious_count");
    for scheme in ALL_SCHEMES {
        let _ = write!(out, ",{}", scheme.name());
    }
    out.push('\n');
    for (count, row) in grid.counts.iter().zip(&grid.rows) {
        let _ = write!(out, "{count}");
        for acc in row {
            let _ = write!(out, ",{acc:.6}");
        }
        out.push('\n');
    }
    out
}

/// One-row run summary. Wall-clock time is reported separately by the CLI so
/// that this file stays a pure function of (config, seed).
pub fn metrics_csv(cfg: &ExperimentConfig, m: &RunMetrics) -> String {
    let verdicts = [
        "reject_unknown_identity",
        "reject_bad_signature",
        "reject_stale",
        "reject_implausible",
    ];
    let mut header = String::from("scheme,malicious_count,blocks_finalized,admitted_records");
    let mut row = format!(
        "{},{},{},{}",
        cfg.scheme.name(),
        cfg.malicious_count + cfg.malicious_implausible + cfg.malicious_replay,
        m.blocks_finalized,
        m.admitted_records
    );
    for v in verdicts {
        let _ = write!(header, ",{v}");
        let _ = write!(row, ",{}", m.rejected_by_verdict.get(v).copied().unwrap_or(0));
    }
    header.push_str(",signaling_total,data_messages,honest_emitted,forged_emitted");
    let _ = write!(
        row,
        ",{},{},{},{}",
        m.signaling_total, m.data_messages, m.honest_emitted, m.forged_emitted
    );
    format!("{header}\n{row}\n")
}

/// Per-round consensus log: outcome flags plus signaling message counts.
pub fn consensus_rounds_csv(result: &ScenarioResult) -> String {
    let mut out = String::from(
        "round,producer,outcome,propose_msgs,reply_msgs,announce_msgs,accuse_msgs,equivocation_msgs\n",
    );
    let Some(node) = result
        .nodes
        .iter()
        .find(|n| n.mode != NodeMode::Crashed && !n.round_log.is_empty())
    else {
        return out;
    };
    let empty = BTreeMap::new();
    for ev in &node.round_log {
        let per_kind = result
            .metrics
            .signaling_by_round
            .get(&ev.round)
            .unwrap_or(&empty);
        let count = |k: &str| per_kind.get(k).copied().unwrap_or(0);
        let outcome = if ev.finalized {
            "finalized"
        } else if ev.equivocated {
            "equivocated"
        } else if ev.invalid_proposal {
            "invalid_proposal"
        } else {
            "missed_slot"
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            ev.round,
            ev.producer,
            outcome,
            count("propose"),
            count("reply"),
            count("announce"),
            count("accuse"),
            count("equivocation_proof"),
        );
    }
    out
}

/// First line of a chain dump: the vehicle registry.
#[derive(Serialize, Deserialize)]
struct ChainDumpHeader {
    registry: Vec<PublicKey>,
}

/// Chain as JSONL: a registry header line, then one block per line.
pub fn chain_to_jsonl(chain: &Chain) -> String {
    let mut out = serde_json::to_string(&ChainDumpHeader {
        registry: chain.registry.iter().copied().collect(),
    })
    .expect("header serializes");
    out.push('\n');
    for block in &chain.blocks {
        out.push_str(&serde_json::to_string(block).expect("block serializes"));
        out.push('\n');
    }
    out
}

/// Parse a JSONL chain dump back into an unvalidated chain.
pub fn chain_from_jsonl(text: &str) -> Result<Chain, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: ChainDumpHeader = lines
        .next()
        .ok_or_else(|| CliError::Config("empty chain dump".into()))
        .and_then(|l| {
            serde_json::from_str(l).map_err(|e| CliError::Config(format!("bad dump header: {e}")))
        })?;
    let mut blocks = Vec::new();
    for (i, line) in lines.enumerate() {
        let block: Block = serde_json::from_str(line)
            .map_err(|e| CliError::Invariant(format!("dump line {}: {e}", i + 2)))?;
        blocks.push(block);
    }
    Ok(Chain::from_parts(header.registry, blocks))
}

/// First line of an event log: the config that produced it.
#[derive(Serialize, Deserialize)]
struct EventLogHeader {
    config: ExperimentConfig,
}

/// Netsim event log as JSONL: a config header line, then one entry per line.
pub fn events_to_jsonl(cfg: &ExperimentConfig, log: &[LogEntry]) -> String {
    let mut out = serde_json::to_string(&EventLogHeader { config: cfg.clone() })
        .expect("header serializes");
    out.push('\n');
    for entry in log {
        out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<(ExperimentConfig, Vec<LogEntry>), CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: EventLogHeader = lines
        .next()
        .ok_or_else(|| CliError::Config("empty event log".into()))
        .and_then(|l| {
            serde_json::from_str(l).map_err(|e| CliError::Config(format!("bad log header: {e}")))
        })?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let entry: LogEntry = serde_json::from_str(line)
            .map_err(|e| CliError::Config(format!("log line {}: {e}", i + 2)))?;
        entries.push(entry);
    }
    Ok((header.config, entries))
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 8] = b"BESTMDL\x01";

/// Binary model file: magic+version, architecture, shape, then weights as
/// little-endian f64.
pub fn model_to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 1 + 8 * 3 + 8 + params.weights.len() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(match params.arch {
        Architecture::Lstm2 => 0,
        Architecture::Dnn4 => 1,
    });
    out.extend_from_slice(&(params.hidden as u64).to_le_bytes());
    out.extend_from_slice(&params.dropout_rate.to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&(params.weights.len() as u64).to_le_bytes());
    for w in &params.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelParams, CliError> {
    let bad = |msg: &str| CliError::Config(format!("model file: {msg}"));
    if bytes.len() < 8 + 1 + 8 * 4 {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(bad("bad magic or unsupported version"));
    }
    let arch = match bytes[8] {
        0 => Architecture::Lstm2,
        1 => Architecture::Dnn4,
        other => return Err(bad(&format!("unknown architecture code {other}"))),
    };
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let hidden = u64_at(9) as usize;
    let dropout_rate = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
    let seed = u64_at(25);
    let count = u64_at(33) as usize;
    let body = &bytes[41..];
    if body.len() != count * 8 {
        return Err(bad(&format!(
            "weight payload is {} bytes, expected {}",
            body.len(),
            count * 8
        )));
    }
    let weights: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams {
        arch,
        hidden,
        dropout_rate,
        seed,
        weights,
    };
    let expected = ModelParams::init(arch, hidden, dropout_rate, seed).weights.len();
    if params.weights.len() != expected {
        return Err(bad(&format!(
            "weight count {} does not match architecture ({expected})",
            params.weights.len()
        )));
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "best",
    about = "Blockchain-backed safe-driving assessment simulator",
    version
)]
struct Cli {
    /// Override the config seed (wins over BEST_SEED and the file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one scenario and write chain/metrics/event artifacts.
    Simulate { config: Option<PathBuf> },
    /// Run a scenario, train the configured scheme, save model + loss trace.
    Train { config: Option<PathBuf> },
    /// Re-run the configured scenario and evaluate a saved model on its
    /// honest held-out test set.
    Evaluate { config: PathBuf, model: PathBuf },
    /// Loss-vs-iteration curves for all four schemes (50 malicious CAVs).
    Fig5 { config: Option<PathBuf> },
    /// Accuracy grid over malicious counts {0,25,50,75,100}, all schemes.
    Fig6 { config: Option<PathBuf> },
    /// Chain dump/verify.
    Chain {
        #[command(subcommand)]
        cmd: ChainCmd,
    },
    /// Event-log replay.
    Netsim {
        #[command(subcommand)]
        cmd: NetsimCmd,
    },
    /// Consensus log statistics.
    Consensus {
        #[command(subcommand)]
        cmd: ConsensusCmd,
    },
    /// Print the built-in default configuration as TOML.
    DefaultConfig,
}

#[derive(Subcommand, Debug)]
enum ChainCmd {
    /// Run the configured scenario and emit the chain as JSONL.
    Dump { config: Option<PathBuf> },
    /// Re-audit a chain dump; exits 2 on any violation.
    Verify { dump: PathBuf },
}

#[derive(Subcommand, Debug)]
enum NetsimCmd {
    /// Re-run the scenario recorded in an event log and check for divergence.
    Replay { log: PathBuf },
}

#[derive(Subcommand, Debug)]
enum ConsensusCmd {
    /// Print blocks/s and signaling totals from a consensus round CSV.
    Stats { log: PathBuf },
}

fn audited(result: &ScenarioResult) -> Result<(), CliError> {
    if result.metrics.divergent_tips > 0 {
        return Err(CliError::Invariant(format!(
            "{} replicas disagree on the chain tip",
            result.metrics.divergent_tips
        )));
    }
    if let Some(chain) = &result.chain {
        chain
            .audit()
            .map_err(|e| CliError::Invariant(format!("chain audit failed: {e:?}")))?;
    }
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let result = run_scenario(cfg).map_err(scenario_err)?;
    audited(&result)?;
    write_file(&out.join("metrics.csv"), &metrics_csv(cfg, &result.metrics))?;
    write_file(&out.join("events.jsonl"), &events_to_jsonl(cfg, &result.log))?;
    if let Some(chain) = &result.chain {
        write_file(&out.join("chain.jsonl"), &chain_to_jsonl(chain))?;
        write_file(&out.join("consensus_rounds.csv"), &consensus_rounds_csv(&result))?;
    }
    let m = &result.metrics;
    println!(
        "simulate: scheme={} blocks={} admitted={} rejected={} signaling={} ({:.1}s wall clock)",
        cfg.scheme.name(),
        m.blocks_finalized,
        m.admitted_records,
        m.rejected_by_verdict.values().sum::<usize>(),
        m.signaling_total,
        t0.elapsed().as_secs_f64()
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let run = run_scheme(cfg).map_err(scenario_err)?;
    let mut trace = String::from("iteration,loss\n");
    for (i, loss) in run.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{loss:.6}", i + 1);
    }
    write_file(&out.join("loss_trace.csv"), &trace)?;
    let model_path = out.join("model.bin");
    if let Some(dir) = model_path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(&model_path, model_to_bytes(&run.params)).map_err(|e| io_err(&model_path, e))?;
    println!(
        "train: scheme={} final_train_loss={:.4} test_accuracy={:.4} ({:.1}s wall clock)",
        run.scheme.name(),
        run.final_train_loss,
        run.accuracy,
        t0.elapsed().as_secs_f64()
    );
    println!("model: {}", model_path.display());
    Ok(())
}

fn confusion_csv(confusion: &[[u32; 4]; 4]) -> String {
    let mut out = String::from("actual,pred_low,pred_medium,pred_high,pred_accident\n");
    let names = ["low", "medium", "high", "accident"];
    for (name, row) in names.iter().zip(confusion) {
        let _ = writeln!(out, "{name},{},{},{},{}", row[0], row[1], row[2], row[3]);
    }
    out
}

fn cmd_evaluate(cfg: &ExperimentConfig, model_path: &Path, out: &Path) -> Result<(), CliError> {
    let bytes = fs::read(model_path).map_err(|e| io_err(model_path, e))?;
    let params = model_from_bytes(&bytes)?;
    if params.arch != cfg.scheme.architecture() {
        return Err(CliError::Config(format!(
            "model architecture {:?} does not match scheme {}",
            params.arch,
            cfg.scheme.name()
        )));
    }
    let result = run_scenario(cfg).map_err(scenario_err)?;
    audited(&result)?;
    let data = best_core::scenario::prepare_experiment_data(&result, cfg.seed);
    let eval = assessment::evaluate(&params, &data.test);
    let loss = assessment::dataset_loss(&params, &data.test);
    write_file(&out.join("confusion.csv"), &confusion_csv(&eval.confusion))?;
    println!(
        "evaluate: test_accuracy={:.4} test_loss={loss:.4} test_sequences={}",
        eval.accuracy,
        data.test.len()
    );
    Ok(())
}

fn cmd_fig5(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    cfg.malicious_count = FIG5_MALICIOUS;
    let t0 = Instant::now();
    let curves = reproduce_loss_curves(&cfg).map_err(scenario_err)?;
    write_file(&out.join("fig5.csv"), &fig5_csv(&curves))?;
    for run in &curves.runs {
        println!(
            "{:<16} final_loss={:.4} accuracy={:.4}",
            run.scheme.name(),
            run.final_train_loss,
            run.accuracy
        );
    }
    println!(
        "fig5: {} ({:.1}s wall clock)",
        out.join("fig5.csv").display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_fig6(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let t0 = Instant::now();
    let grid = reproduce_accuracy_sweep(cfg, &FIG6_COUNTS).map_err(scenario_err)?;
    write_file(&out.join("fig6.csv"), &fig6_csv(&grid))?;
    print!("{}", fig6_csv(&grid));
    println!(
        "fig6: {} ({:.1}s wall clock)",
        out.join("fig6.csv").display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_chain_dump(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let cfg = cfg.clone();
    if !cfg.scheme.is_blockchain() {
        return Err(CliError::Config(format!(
            "scheme {} has no chain to dump; pick a blockchain scheme",
            cfg.scheme.name()
        )));
    }
    let result = run_scenario(&cfg).map_err(scenario_err)?;
    audited(&result)?;
    let chain = result.chain.as_ref().expect("blockchain scheme has a chain");
    let path = out.join("chain.jsonl");
    write_file(&path, &chain_to_jsonl(chain))?;
    println!(
        "chain dump: {} blocks, {} admitted records -> {}",
        chain.blocks.len(),
        chain.admitted_record_count(),
        path.display()
    );
    Ok(())
}

fn cmd_chain_verify(dump: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(dump).map_err(|e| io_err(dump, e))?;
    let chain = chain_from_jsonl(&text)?;
    chain
        .audit()
        .map_err(|e| CliError::Invariant(format!("chain audit failed: {e:?}")))?;
    println!(
        "chain verify: ok ({} blocks, {} records)",
        chain.blocks.len(),
        chain.admitted_record_count()
    );
    Ok(())
}

fn cmd_netsim_replay(log_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(log_path).map_err(|e| io_err(log_path, e))?;
    let (cfg, recorded) = events_from_jsonl(&text)?;
    cfg.validate().map_err(scenario_err)?;
    let result = run_scenario(&cfg).map_err(scenario_err)?;
    if result.log.len() != recorded.len() {
        return Err(CliError::Invariant(format!(
            "replay divergence: {} events recorded, {} replayed",
            recorded.len(),
            result.log.len()
        )));
    }
    for (i, (a, b)) in recorded.iter().zip(&result.log).enumerate() {
        if a != b {
            return Err(CliError::Invariant(format!(
                "replay divergence at entry {i}: recorded {a:?}, replayed {b:?}"
            )));
        }
    }
    println!("netsim replay: ok ({} events match)", recorded.len());
    Ok(())
}

fn cmd_consensus_stats(log_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(log_path).map_err(|e| io_err(log_path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty consensus log".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Config(format!("consensus log missing column {name}")))
    };
    let outcome_col = idx("outcome")?;
    let msg_cols: Vec<usize> = [
        "propose_msgs",
        "reply_msgs",
        "announce_msgs",
        "accuse_msgs",
        "equivocation_msgs",
    ]
    .iter()
    .map(|c| idx(c))
    .collect::<Result<_, _>>()?;
    let mut rounds = 0u64;
    let mut finalized = 0u64;
    let mut signaling = 0u64;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Config(format!(
                "consensus log line {}: {} fields, expected {}",
                i + 2,
                fields.len(),
                cols.len()
            )));
        }
        rounds += 1;
        if fields[outcome_col] == "finalized" {
            finalized += 1;
        }
        for &c in &msg_cols {
            signaling += fields[c]
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("consensus log line {}: bad count", i + 2)))?;
        }
    }
    if rounds == 0 {
        return Err(CliError::Config("consensus log has no rounds".into()));
    }
    println!(
        "consensus stats: rounds={rounds} finalized={finalized} blocks_per_second={:.3} \
         signaling_total={signaling} signaling_per_round={:.1}",
        finalized as f64 / rounds as f64,
        signaling as f64 / rounds as f64
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Run the CLI on the given argv (including the program name); returns the
/// process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let seed = parsed.seed;
    let out = parsed.out.clone();
    let run = || -> Result<(), CliError> {
        match &parsed.cmd {
            Cmd::Simulate { config } => cmd_simulate(&load_config(config.as_deref(), seed)?, &out),
            Cmd::Train { config } => cmd_train(&load_config(config.as_deref(), seed)?, &out),
            Cmd::Evaluate { config, model } => {
                cmd_evaluate(&load_config(Some(config), seed)?, model, &out)
            }
            Cmd::Fig5 { config } => cmd_fig5(&load_config(config.as_deref(), seed)?, &out),
            Cmd::Fig6 { config } => cmd_fig6(&load_config(config.as_deref(), seed)?, &out),
            Cmd::Chain { cmd } => match cmd {
                ChainCmd::Dump { config } => {
                    cmd_chain_dump(&load_config(config.as_deref(), seed)?, &out)
                }
                ChainCmd::Verify { dump } => cmd_chain_verify(dump),
            },
            Cmd::Netsim { cmd } => match cmd {
                NetsimCmd::Replay { log } => cmd_netsim_replay(log),
            },
            Cmd::Consensus { cmd } => match cmd {
                ConsensusCmd::Stats { log } => cmd_consensus_stats(log),
            },
            Cmd::DefaultConfig => {
                print!("{}", default_config_toml());
                Ok(())
            }
        }
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
