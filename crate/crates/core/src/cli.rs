//! Experiment runner behind the `badsanta` binary.
//!
//! Two modes share one flag surface. `stream-bench` runs a query strategy
//! against an adversary for a number of seeded trials. `broadcast-sim` runs
//! the two-phase broadcast on a grid, optionally with a fault plan read from
//! a scenario file or generated at maximum density. Every artifact starts
//! with a header that embeds the full configuration as JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::adversary::{parse_streams, Adversary};
use crate::error::{Error, Result};
use crate::grid::{Coord, GridSpec};
use crate::metrics::write_ledger_csv;
use crate::montecarlo::{adversary_factory, monte_carlo_trials, TrialRecord};
use crate::protocol::fault::{crash_maker, FaultKind};
use crate::protocol::{
    commit_deadline, generate_max_plan, parse_scenario, run_broadcast, validate_fault_plan, BroadcastRun,
    ByzantineMode, FaultPlan, ProtocolConfig, Regime,
};
use crate::stream::{Strategy, StreamLength};
use crate::CostSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    StreamBench,
    BroadcastSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Naive,
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeArg {
    Failstop,
    Byzantine,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Failstop => Regime::FailStop,
            RegimeArg::Byzantine => Regime::Byzantine,
        }
    }
}

/// Command-line flags. Parsed straight into an [`ExperimentConfig`].
#[derive(Debug, Clone, Parser)]
#[command(name = "badsanta", version, about = "Bad Santa stream benchmarks and grid broadcast simulation")]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Stream length for stream-bench.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Grid size `WxH` for broadcast-sim without a scenario file.
    #[arg(long, default_value = "9x9")]
    pub grid: String,
    /// Transmission radius.
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Preliminary sampling rounds.
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = StrategyKind::Single)]
    pub strategy: StrategyKind,
    /// One of fixed:FILE, greedy, queryaware, case12k, case1, threeinterval, allones, lasthalf.
    #[arg(long, default_value = "greedy")]
    pub adversary: String,
    /// Scenario file with the grid, seed and fault plan.
    #[arg(long)]
    pub faults: Option<PathBuf>,
    /// Without `--faults`, generates a random maximum-density plan for this regime.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Behavior of generated Byzantine nodes.
    #[arg(long, default_value = "wrongdata")]
    pub byzantine_mode: String,
    /// Share of generated crashes that happen after the fingerprint phase.
    /// Dense plans with late crashes can leave a node no live upstream
    /// sender, which ends the run with a data-phase stall.
    #[arg(long, default_value_t = 0.0)]
    pub late: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Message the dealer broadcasts.
    #[arg(long, default_value = "bad santa")]
    pub message: String,
    /// Output directory. Artifacts go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub grid: (usize, usize),
    pub r: usize,
    pub k: usize,
    pub strategy: StrategyKind,
    pub adversary: String,
    pub faults: Option<PathBuf>,
    pub regime: Option<RegimeArg>,
    pub byzantine_mode: ByzantineMode,
    pub late: f64,
    pub trials: u64,
    pub seed: u64,
    pub message: String,
    pub out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid must look like WxH, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

impl TryFrom<Cli> for ExperimentConfig {
    type Error = Error;

    fn try_from(c: Cli) -> Result<Self> {
        if !(0.0..=1.0).contains(&c.late) {
            return Err(Error::Config(format!("--late must lie in [0, 1], got {}", c.late)));
        }
        if let Some(path) = &c.faults {
            if !path.is_file() {
                return Err(Error::Config(format!("fault file {} does not exist", path.display())));
            }
        }
        Ok(ExperimentConfig {
            mode: c.mode,
            n: c.n,
            grid: parse_grid(&c.grid)?,
            r: c.r,
            k: c.k,
            strategy: c.strategy,
            adversary: c.adversary,
            faults: c.faults,
            regime: c.regime,
            byzantine_mode: c.byzantine_mode.parse()?,
            late: c.late,
            trials: c.trials,
            seed: c.seed,
            message: c.message,
            out: c.out,
        })
    }
}

impl ExperimentConfig {
    pub fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyKind::Naive => Strategy::Naive,
            StrategyKind::Single => Strategy::SingleRound,
            StrategyKind::Multi => Strategy::MultiRound { rounds: self.k + 1 },
        }
    }

    /// Comment lines placed at the top of every artifact.
    pub fn header(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("badsanta {}\nconfig {json}", env!("CARGO_PKG_VERSION"))
    }
}

/// Resolves an `--adversary` value. `fixed:FILE` reads a stream corpus.
pub fn parse_adversary(s: &str) -> Result<Adversary> {
    if let Some(path) = s.strip_prefix("fixed:") {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("reading {path}: {e}")))?;
        return Ok(Adversary::Fixed(parse_streams(&text)?));
    }
    Ok(match s {
        "greedy" => Adversary::Greedy,
        "queryaware" => Adversary::QueryAware,
        "case12k" => Adversary::Case1Case2k,
        "case1" => Adversary::Case1,
        "threeinterval" => Adversary::ThreeInterval,
        "allones" => Adversary::AllOnes,
        "lasthalf" => Adversary::LastHalfOnes,
        other => return Err(Error::Config(format!("unknown adversary {other:?}"))),
    })
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub adversary: String,
    pub trials: Vec<TrialRecord>,
    pub summary: CostSummary,
}

pub fn run_stream_bench(config: &ExperimentConfig) -> Result<BenchResult> {
    let n = StreamLength::new(config.n)?;
    let adversary = parse_adversary(&config.adversary)?;
    if !adversary.supports(n) {
        return Err(Error::Config(format!(
            "adversary {} cannot produce streams of length {}",
            adversary.name(),
            config.n
        )));
    }
    let runs = monte_carlo_trials(
        config.strategy(),
        adversary_factory(&adversary, n),
        n,
        config.trials,
        config.seed,
    )?;
    let trials: Vec<TrialRecord> = runs.into_iter().map(|(rec, _)| rec).collect();
    let costs: Vec<usize> = trials.iter().map(|t| t.cost).collect();
    let failures = trials.iter().filter(|t| !t.found).count();
    Ok(BenchResult {
        adversary: adversary.name().to_string(),
        summary: CostSummary::from_costs(&costs, failures),
        trials,
    })
}

fn comment_header<W: Write>(out: &mut W, header: &str) -> Result<()> {
    for line in header.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// One row per trial: `n,k,adversary,seed,cost,found`.
pub fn write_bench_csv<W: Write>(out: &mut W, config: &ExperimentConfig, result: &BenchResult) -> Result<()> {
    comment_header(out, &config.header())?;
    writeln!(out, "n,k,adversary,seed,cost,found")?;
    for t in &result.trials {
        writeln!(out, "{},{},{},{},{},{}", config.n, config.k, result.adversary, t.seed, t.cost, t.found)?;
    }
    Ok(())
}

pub fn write_bench_summary_csv<W: Write>(out: &mut W, config: &ExperimentConfig, result: &BenchResult) -> Result<()> {
    let s = &result.summary;
    comment_header(out, &config.header())?;
    writeln!(out, "n,k,adversary,trials,mean,max,ci95_low,ci95_high,failures")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        config.n, config.k, result.adversary, s.trials, s.mean, s.max, s.ci95.0, s.ci95.1, s.failures
    )?;
    Ok(())
}

/// Fingerprint commit times measured against the fault-free deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeadlineCheck {
    /// True when the plan is empty, the only case the deadline covers.
    pub applies: bool,
    /// Largest `commit_time - deadline` over correct nodes that committed.
    pub max_slack: i64,
    pub violations: usize,
    pub node: Option<Coord>,
}

pub fn deadline_check(run: &BroadcastRun, plan: &FaultPlan) -> DeadlineCheck {
    let spec = run.record.spec;
    let mut check = DeadlineCheck {
        applies: plan.is_empty(),
        max_slack: i64::MIN,
        violations: 0,
        node: None,
    };
    for (i, c) in spec.coords().enumerate() {
        if !run.roles[i].is_correct() {
            continue;
        }
        let Some((_, t)) = run.fp.commits[i] else { continue };
        let o = spec.offset(c);
        let slack = t as i64 - commit_deadline(o.x, o.y, spec.r, run.fp.t_init) as i64;
        if slack > 0 {
            check.violations += 1;
        }
        if slack > check.max_slack {
            check.max_slack = slack;
            check.node = Some(c);
        }
    }
    check
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub plan: FaultPlan,
    pub run: BroadcastRun,
    pub deadline: DeadlineCheck,
}

impl SimResult {
    /// Process exit code: zero only when every correct node delivered the message.
    pub fn exit_code(&self) -> i32 {
        if self.run.record.summary.agreement {
            0
        } else {
            1
        }
    }
}

/// Grid, fault plan and run seed the simulation will use.
pub fn sim_setup(config: &ExperimentConfig) -> Result<(GridSpec, FaultPlan, u64)> {
    if let Some(path) = &config.faults {
        let scenario = parse_scenario(&fs::read_to_string(path)?)?;
        if let (Some(want), Some(got)) = (config.regime, scenario.faults.regime()) {
            if Regime::from(want) != got {
                return Err(Error::Config(format!("--regime {want:?} does not match the scenario faults")));
            }
        }
        return Ok((scenario.spec, scenario.faults, scenario.seed));
    }
    let (w, h) = config.grid;
    let dealer = Coord::new((w / 2) as i64, (h / 2) as i64);
    let spec = GridSpec::with_dealer(w, h, config.r, dealer)?;
    let plan = match config.regime {
        None => FaultPlan::default(),
        Some(RegimeArg::Failstop) => generate_max_plan(&spec, Regime::FailStop, config.seed, crash_maker(config.late)),
        Some(RegimeArg::Byzantine) => {
            let mode = config.byzantine_mode;
            generate_max_plan(&spec, Regime::Byzantine, config.seed, move |_| FaultKind::Byzantine(mode))
        }
    };
    Ok((spec, plan, config.seed))
}

/// Validates the plan, then runs both phases. Overdense plans come back as
/// `Error::FaultPlan` listing every violation; nothing is simulated.
pub fn run_broadcast_sim(config: &ExperimentConfig) -> Result<SimResult> {
    let (spec, plan, seed) = sim_setup(config)?;
    let regime = plan.regime().unwrap_or(Regime::FailStop);
    validate_fault_plan(&plan, &spec, regime).into_result()?;
    let pconfig = ProtocolConfig {
        k: config.k,
        seed,
        ..Default::default()
    };
    let run = run_broadcast(spec, &plan, config.message.as_bytes(), &pconfig)?;
    let deadline = deadline_check(&run, &plan);
    Ok(SimResult { plan, run, deadline })
}

#[derive(Serialize)]
struct FaultEntry {
    x: i64,
    y: i64,
    kind: String,
}

fn fault_entries(plan: &FaultPlan) -> Vec<FaultEntry> {
    let crashes = plan.failstop.iter().map(|(c, t)| FaultEntry {
        x: c.x,
        y: c.y,
        kind: format!("failstop:{t:?}"),
    });
    let byz = plan.byzantine.iter().map(|(c, m)| FaultEntry {
        x: c.x,
        y: c.y,
        kind: format!("byzantine:{}", m.name()),
    });
    crashes.chain(byz).collect()
}

#[derive(Serialize)]
struct SimArtifact<'a> {
    header: &'a str,
    config: &'a ExperimentConfig,
    faults: Vec<FaultEntry>,
    deadline_check: &'a DeadlineCheck,
    record: &'a crate::protocol::RunRecord,
}

pub fn write_sim_json<W: Write>(out: &mut W, config: &ExperimentConfig, result: &SimResult) -> Result<()> {
    let header = format!("badsanta {}", env!("CARGO_PKG_VERSION"));
    let artifact = SimArtifact {
        header: &header,
        config,
        faults: fault_entries(&result.plan),
        deadline_check: &result.deadline,
        record: &result.run.record,
    };
    serde_json::to_writer_pretty(&mut *out, &artifact).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_sim_ledger<W: Write>(out: &mut W, config: &ExperimentConfig, result: &SimResult) -> Result<()> {
    let run_id = format!("seed{}", result.run.record.config.seed);
    write_ledger_csv(out, &config.header(), &run_id, &result.run.record.spec, &result.run.ledgers)
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

/// Runs the configured mode, writes its artifacts and returns the exit code.
pub fn execute(config: &ExperimentConfig) -> Result<i32> {
    let stdout = std::io::stdout();
    match config.mode {
        Mode::StreamBench => {
            let result = run_stream_bench(config)?;
            match &config.out {
                Some(dir) => {
                    write_bench_csv(&mut create(dir, "bench.csv")?, config, &result)?;
                    write_bench_summary_csv(&mut create(dir, "bench_summary.csv")?, config, &result)?;
                }
                None => {
                    let mut lock = stdout.lock();
                    write_bench_csv(&mut lock, config, &result)?;
                    write_bench_summary_csv(&mut lock, config, &result)?;
                }
            }
            Ok(if result.summary.failures == 0 { 0 } else { 1 })
        }
        Mode::BroadcastSim => {
            let result = run_broadcast_sim(config)?;
            match &config.out {
                Some(dir) => {
                    write_sim_json(&mut create(dir, "run.json")?, config, &result)?;
                    write_sim_ledger(&mut create(dir, "ledger.csv")?, config, &result)?;
                }
                None => write_sim_json(&mut stdout.lock(), config, &result)?,
            }
            let s = &result.run.record.summary;
            eprintln!(
                "delivered {}/{} correct nodes, wrong commits {}, agreement {}",
                s.delivered, s.correct_nodes, s.wrong_commits, s.agreement
            );
            if result.deadline.applies {
                eprintln!(
                    "commit deadline check: max slack {}, violations {}",
                    result.deadline.max_slack, result.deadline.violations
                );
            }
            Ok(result.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> ExperimentConfig {
        let mut argv = vec!["badsanta"];
        argv.extend_from_slice(args);
        Cli::try_parse_from(argv).unwrap().try_into().unwrap()
    }

    fn bench_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
        let result = run_stream_bench(cfg).unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, cfg, &result).unwrap();
        write_bench_summary_csv(&mut buf, cfg, &result).unwrap();
        buf
    }

    #[test]
    fn greedy_n4_single_round_costs_three() {
        let cfg = config(&["--mode", "stream-bench", "--n", "4", "--adversary", "greedy", "--trials", "10"]);
        let result = run_stream_bench(&cfg).unwrap();
        assert_eq!(result.trials.len(), 10);
        assert!(result.trials.iter().all(|t| t.cost == 3 && t.found));
        assert_eq!(result.summary.max, 3);
    }

    #[test]
    fn all_ones_costs_one() {
        let cfg = config(&["--mode", "stream-bench", "--n", "16", "--adversary", "allones", "--trials", "5"]);
        let result = run_stream_bench(&cfg).unwrap();
        assert!(result.trials.iter().all(|t| t.cost == 1));
    }

    #[test]
    fn bench_rerun_is_byte_identical() {
        let cfg = config(&["--mode", "stream-bench", "--n", "64", "--strategy", "multi", "--k", "2", "--seed", "7"]);
        let a = bench_bytes(&cfg);
        assert_eq!(a, bench_bytes(&cfg));
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# badsanta"));
        assert!(text.lines().nth(1).unwrap().contains("\"strategy\":\"multi\""));
        assert_eq!(text.lines().filter(|l| l.starts_with("64,2,greedy,")).count(), 101);
    }

    #[test]
    fn unsupported_adversary_length_is_refused() {
        let cfg = config(&["--mode", "stream-bench", "--n", "10", "--adversary", "case12k"]);
        assert!(matches!(run_stream_bench(&cfg), Err(Error::Config(_))));
        assert!(parse_adversary("nope").is_err());
    }

    #[test]
    fn fixed_corpus_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        fs::write(&path, "# two streams\n0011\n1100\n").unwrap();
        let spec = format!("fixed:{}", path.display());
        let cfg = config(&["--mode", "stream-bench", "--n", "4", "--adversary", &spec, "--trials", "6"]);
        let result = run_stream_bench(&cfg).unwrap();
        assert_eq!(result.adversary, "fixed");
        assert!(result.trials.iter().all(|t| t.found && t.cost <= 3));
    }

    #[test]
    fn fault_free_sim_delivers_and_meets_deadlines() {
        let cfg = config(&["--mode", "broadcast-sim", "--grid", "9x9", "--r", "1", "--k", "0"]);
        let result = run_broadcast_sim(&cfg).unwrap();
        assert_eq!(result.exit_code(), 0);
        assert!(result.run.record.nodes.iter().all(|n| n.committed_ok == Some(true)));
        assert!(result.deadline.applies);
        assert!(result.deadline.max_slack <= 0);
        assert_eq!(result.deadline.violations, 0);
    }

    #[test]
    fn overdense_scenario_is_refused_with_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dense.txt");
        fs::write(&path, "grid 9 9 1 3\ndealer 4 4\nfailstop 0 0\nfailstop 1 0\nfailstop 2 0\nfailstop 0 1\nfailstop 1 1\n")
            .unwrap();
        let cfg = config(&["--mode", "broadcast-sim", "--faults", path.to_str().unwrap()]);
        match run_broadcast_sim(&cfg) {
            Err(Error::FaultPlan(report)) => assert!(!report.is_empty()),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn generated_plan_runs_and_artifacts_repeat() {
        let cfg = config(&["--mode", "broadcast-sim", "--grid", "11x11", "--regime", "failstop", "--seed", "5"]);
        let write = |cfg: &ExperimentConfig| {
            let result = run_broadcast_sim(cfg).unwrap();
            assert_eq!(result.exit_code(), 0);
            assert!(!result.plan.failstop.is_empty());
            let mut json = Vec::new();
            write_sim_json(&mut json, cfg, &result).unwrap();
            let mut csv = Vec::new();
            write_sim_ledger(&mut csv, cfg, &result).unwrap();
            (json, csv)
        };
        let (json, csv) = write(&cfg);
        assert_eq!((json.clone(), csv.clone()), write(&cfg));
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("# config {"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("seed5,")).count(), 121);
        let value: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(value["config"]["regime"], "failstop");
    }

    #[test]
    fn bad_flags_are_rejected() {
        let parse = |args: &[&str]| {
            let mut argv = vec!["badsanta", "--mode", "broadcast-sim"];
            argv.extend_from_slice(args);
            ExperimentConfig::try_from(Cli::try_parse_from(argv).unwrap())
        };
        assert!(parse(&["--grid", "9by9"]).is_err());
        assert!(parse(&["--late", "2"]).is_err());
        assert!(parse(&["--faults", "/no/such/file"]).is_err());
        assert!(parse(&["--byzantine-mode", "sneaky"]).is_err());
    }
}
