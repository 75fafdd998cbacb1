use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use qpolicy_core::instance::{load_graph, load_vrplib};
use qpolicy_core::oracle::{exact_mis, held_karp};
use qpolicy_harness::curriculum::{load_policy, run_from_config, suite_score, LoadedStage, RunConfig};
use qpolicy_harness::gen::{write_cvrp_set, write_mis_ladder, CVRP_CUSTOMERS, CVRP_PER_SIZE, MIS_PER_SIZE, MIS_SIZES};
use qpolicy_harness::report::emit_report;
use qpolicy_harness::HarnessError;

#[derive(Parser)]
#[command(name = "qpolicy", version, about = "Policy search for adaptive variational optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a curriculum; resumes if OUT already holds an event log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score one policy on one stage under its confirm budget.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        stage: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact reference solutions.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Rebuild reports from a run directory's event log.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write a seeded instance set.
    GenInstances {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Maximum independent set of an edge-list graph.
    Mis {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Optimal tour through every node of a VRPLIB instance.
    Tsp {
        #[arg(long)]
        vrp: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mis,
    Cvrp,
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializes"));
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let cfg = RunConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let report = run_from_config(&cfg, seed, &out)?;
            print_json(&serde_json::to_value(&report).expect("serializes"));
        }
        Command::Eval {
            policy,
            stage,
            config,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let spec = cfg
                .stage(&stage)
                .ok_or_else(|| HarnessError::Config(format!("no stage named {stage}")))?;
            let doc = load_policy(&policy, cfg.max_attempts_cap)?;
            let loaded = LoadedStage::load(spec)?;
            let seed = loaded.seed(seed.unwrap_or(cfg.seed));
            let s = suite_score(&doc, &loaded.all(), &spec.confirm_budget, seed)?;
            print_json(&json!({ "stage": stage, "policy_id": doc.policy_id, "summary": s }));
        }
        Command::Oracle { which } => match which {
            OracleCommand::Mis { graph } => {
                let g = load_graph(&graph).map_err(|e| HarnessError::Config(e.to_string()))?;
                let (size, set) = exact_mis(&g).map_err(|e| HarnessError::Execution(e.to_string()))?;
                let members: Vec<usize> = (0..g.n()).filter(|&i| set.get(i)).collect();
                print_json(&json!({ "graph": g.name, "size": size, "bitstring": set.to_string(), "vertices": members }));
            }
            OracleCommand::Tsp { vrp } => {
                let inst = load_vrplib(&vrp).map_err(|e| HarnessError::Config(e.to_string()))?;
                let (cost, tour) = held_karp(inst.distance_matrix(), &inst.customers(), inst.depot)
                    .map_err(|e| HarnessError::Execution(e.to_string()))?;
                print_json(&json!({ "instance": inst.name, "cost": cost, "tour": tour }));
            }
        },
        Command::Report { run } => {
            let report = emit_report(&run)?;
            print_json(&serde_json::to_value(&report).expect("serializes"));
        }
        Command::GenInstances { kind, out, seed } => {
            let paths = match kind {
                Kind::Mis => write_mis_ladder(&out, &MIS_SIZES, MIS_PER_SIZE, seed)?,
                Kind::Cvrp => write_cvrp_set(&out, &CVRP_CUSTOMERS, CVRP_PER_SIZE, seed)?,
            };
            for p in paths {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
