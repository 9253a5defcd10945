//! Command-line front end: validate networks, run restoration sessions,
//! enumerate plans for a hypothesis, and dump beliefs.
//!
//! Exit codes: 0 session finished (or command succeeded), 1 input error,
//! 2 session aborted.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use restore::belief::Candidate;
use restore::config::SessionConfig;
use restore::engine::{run_session, Termination};
use restore::planner::{enumerate_plans, plan_utility, PlanningState, ScoredPlan};
use restore::topology::NetworkTopology;
use restore::world::{BehaviorMode, Scenario, SwitchOp};
use restore::Topology;

#[derive(Parser)]
#[command(
    name = "restore",
    about = "Supply restoration in faulty radial power distribution networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and print a topology summary.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Run a full closed-loop restoration session and emit its trace.
    Run(RunArgs),
    /// Rank every admissible restoration plan for a state hypothesis.
    Plans {
        #[arg(long)]
        network: PathBuf,
        /// JSON file holding the Candidate to plan for.
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the belief at a session step (0 = initial distribution).
    Belief {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Session step: 0 before any operation, i after the i-th one.
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Validate { network } => cmd_validate(&network),
        Command::Run(args) => cmd_run(args),
        Command::Plans {
            network,
            candidate,
            config,
            format,
            out,
        } => cmd_plans(&network, &candidate, config.as_deref(), format, out.as_deref()),
        Command::Belief {
            network,
            scenario,
            config,
            seed,
            step,
            format,
            out,
        } => cmd_belief(
            &network,
            &scenario,
            config.as_deref(),
            seed,
            step,
            format,
            out.as_deref(),
        ),
    }
}

fn load_network(path: &Path) -> Result<Topology, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    NetworkTopology::load(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_scenario(path: &Path) -> Result<Scenario, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Scenario::load(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig<f64>, String> {
    match path {
        None => Ok(SessionConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            SessionConfig::load(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), String> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => {
            fs::write(p, content).map_err(|e| format!("cannot write {}: {e}", p.display()))
        }
    }
}

fn cmd_validate(network: &Path) -> Result<ExitCode, String> {
    let topo = load_network(network)?;
    let forest = topo
        .feeders(&topo.normal_positions)
        .map_err(|e| format!("normal configuration is not radial: {e}"))?;
    let report = topo
        .power_report(&topo.normal_positions)
        .map_err(|e| format!("normal configuration is not radial: {e}"))?;

    println!(
        "{}: {} lines, {} devices, {} areas, {} feeders",
        network.display(),
        topo.lines.len(),
        topo.devices.len(),
        topo.areas().len(),
        forest.trees.len()
    );
    for (cb, tree) in &forest.trees {
        let areas: BTreeSet<&str> = tree
            .lines
            .iter()
            .map(|l| topo.area_of_line()[l].as_str())
            .collect();
        println!(
            "  feeder {}: {} lines, {} areas, load {:.1} kW / {:.1} kW",
            cb.as_str(),
            tree.lines.len(),
            areas.len(),
            report.cb_load_kw[cb],
            topo.devices[cb].capacity_kw.unwrap()
        );
    }
    if report.violations.is_empty() {
        println!("  no capacity violations");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            println!("  violation: {v:?}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let topo = load_network(&args.network)?;
    let scenario = load_scenario(&args.scenario)?;
    let config = load_config(args.config.as_deref())?;
    let outcome =
        run_session(&topo, &scenario, &config, args.seed).map_err(|e| e.to_string())?;
    let rendered = match args.format {
        Format::Text => outcome.trace.to_text(),
        Format::Json => outcome.trace.to_jsonl(),
    };
    emit(args.out.as_deref(), &rendered)?;
    Ok(match outcome.termination {
        Termination::Finished => ExitCode::SUCCESS,
        Termination::Aborted(_) => ExitCode::from(2),
    })
}

#[derive(Serialize)]
struct RankedPlan {
    ops: Vec<SwitchOp>,
    utility: f64,
    restored_weight: f64,
}

fn cmd_plans(
    network: &Path,
    candidate_path: &Path,
    config: Option<&Path>,
    format: Format,
    out: Option<&Path>,
) -> Result<ExitCode, String> {
    let topo = load_network(network)?;
    let config = load_config(config)?;
    let text = fs::read_to_string(candidate_path)
        .map_err(|e| format!("cannot read {}: {e}", candidate_path.display()))?;
    let candidate: Candidate = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {e}", candidate_path.display()))?;

    let state = PlanningState {
        positions: candidate.positions.clone(),
        faulty_lines: candidate.faulty_lines(&topo),
        inoperable: candidate
            .ac_mode
            .iter()
            .filter(|(_, m)| **m != BehaviorMode::Correct)
            .map(|(d, _)| d.clone())
            .collect(),
    };
    let mut scored: Vec<ScoredPlan<f64>> = enumerate_plans(&topo, &state)
        .into_iter()
        .map(|(plan, positions)| plan_utility(&topo, &state, &plan, &positions, &config.utility))
        .collect();
    scored.sort_by(|a, b| {
        b.utility
            .partial_cmp(&a.utility)
            .unwrap()
            .then_with(|| a.plan.ops.len().cmp(&b.plan.ops.len()))
            .then_with(|| a.plan.ops.cmp(&b.plan.ops))
    });

    let rendered = match format {
        Format::Json => {
            let ranked: Vec<RankedPlan> = scored
                .iter()
                .map(|s| RankedPlan {
                    ops: s.plan.ops.clone(),
                    utility: s.utility,
                    restored_weight: s.restored_weight,
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&ranked).expect("plans serialize");
            text.push('\n');
            text
        }
        Format::Text => {
            let mut text = String::new();
            for s in &scored {
                let ops: Vec<String> = s
                    .plan
                    .ops
                    .iter()
                    .map(|op| {
                        let verb = match op.target {
                            restore::topology::Position::Open => "open",
                            restore::topology::Position::Closed => "close",
                        };
                        format!("{verb} {}", op.device.as_str())
                    })
                    .collect();
                let ops = if ops.is_empty() {
                    "(no ops)".to_string()
                } else {
                    ops.join(", ")
                };
                text.push_str(&format!("{:>10.3}  {}\n", s.utility, ops));
            }
            text
        }
    };
    emit(out, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_belief(
    network: &Path,
    scenario: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    step: usize,
    format: Format,
    out: Option<&Path>,
) -> Result<ExitCode, String> {
    let topo = load_network(network)?;
    let scenario = load_scenario(scenario)?;
    let config = load_config(config)?;
    let outcome = run_session(&topo, &scenario, &config, seed).map_err(|e| e.to_string())?;
    let belief = outcome
        .steps
        .get(step)
        .ok_or_else(|| format!("step {step} out of range (session has {})", outcome.steps.len()))?;
    let dump = belief.dump();

    let rendered = match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&dump).expect("belief serializes");
            text.push('\n');
            text
        }
        Format::Text => {
            let mut text = format!("step {step}, k={}, {} candidates\n", dump.k, dump.candidates.len());
            for c in &dump.candidates {
                let areas: Vec<&str> = c.candidate.fault_areas.iter().map(|a| a.as_str()).collect();
                text.push_str(&format!(
                    "  p={:.6} faults={{{}}}\n",
                    c.probability,
                    areas.join(",")
                ));
            }
            text
        }
    };
    emit(out, &rendered)?;
    Ok(ExitCode::SUCCESS)
}
