//! `opforge` command-line front end.
//!
//! Exit status: 0 on success (a finished campaign counts as success whatever
//! its coverage), 1 when `lint` or `replay` rejects its input, 2 on errors.

mod layers;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use opforge_core::lint::{default_config, lint_source, load_lint_config};
use opforge_core::protocol::{plan_tests, TestSourcePolicy};
use opforge_core::scheduler::{
    aggregate_runs, aggregate_text, dispatch, replay_artifact, summary_text, write_source_tables, write_tables,
    AggregateReport, ArtifactStore, Mode, RunReport, Runtime,
};
use opforge_core::fsm::PlanVerdict;

use layers::RunFlags;

#[derive(Parser)]
#[command(name = "opforge", version, about = "LLM-driven kernel generation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a generation campaign over the catalog.
    Run {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Statically check one candidate module.
    Lint {
        file: PathBuf,
        /// Lint configuration (YAML or JSON); the built-in default otherwise.
        #[arg(long)]
        lint_config: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print a run or aggregate report and optionally write its tables.
    Report {
        report: PathBuf,
        /// Directory for the CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Union several run reports over the same catalog.
    Aggregate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for aggregate.json and the CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify stored candidates on captured inputs, then regenerate the
    /// ones that no longer pass.
    Refine {
        /// Artifact store of an earlier campaign.
        #[arg(long)]
        artifacts: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Lint and test one stored candidate against an operator's plan.
    Replay {
        #[arg(long)]
        operator: String,
        /// A `.src` file, or an artifact store directory (its best entry for
        /// the operator is used).
        #[arg(long)]
        artifact: PathBuf,
        /// Test on captured inputs instead of the configured plan source.
        #[arg(long)]
        captured: bool,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { flags } => {
            let cfg = flags.resolve()?;
            let rt = Runtime::build(&cfg)?;
            let out = dispatch(&rt.campaign(&cfg, None), Mode::Run)?;
            print!("{}", summary_text(&out.report));
            if let Some(dir) = out.run_dir {
                println!("\nreport: {}", dir.join("report.json").display());
            }
            Ok(true)
        }
        Command::Refine { artifacts, flags } => {
            let cfg = flags.resolve()?;
            if cfg.captured_inputs.is_none() {
                bail!("refine needs captured inputs (--captured-inputs or captured_inputs in the config)");
            }
            if !artifacts.is_dir() {
                bail!("artifact store {} does not exist", artifacts.display());
            }
            let rt = Runtime::build(&cfg)?;
            let store = ArtifactStore::new(artifacts);
            let out = dispatch(&rt.campaign(&cfg, Some("refine")), Mode::Refine { store: &store })?;
            print!("{}", summary_text(&out.report));
            let replayed = out.report.operators.iter().filter(|o| o.replayed).count();
            let seeded = out.report.operators.iter().filter(|o| o.seeded).count();
            println!("replayed {replayed}, regenerated {seeded} from stored candidates");
            Ok(true)
        }
        Command::Lint { file, lint_config, json } => {
            let source = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let config = match lint_config {
                Some(p) => load_lint_config(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => default_config(),
            };
            let report = lint_source(&source, &config);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            Ok(report.pass)
        }
        Command::Report { report, out } => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            match serde_json::from_str::<RunReport>(&text) {
                Ok(r) => {
                    print!("{}", summary_text(&r));
                    if let Some(dir) = out {
                        write_tables(&dir, &r)?;
                    }
                }
                Err(run_err) => {
                    let agg: AggregateReport = serde_json::from_str(&text).map_err(|_| run_err).with_context(|| {
                        format!("{} is neither a run report nor an aggregate report", report.display())
                    })?;
                    print!("{}", aggregate_text(&agg));
                    if let Some(dir) = out {
                        write_source_tables(&dir, &agg)?;
                    }
                }
            }
            Ok(true)
        }
        Command::Aggregate { reports, out } => {
            let runs = reports
                .iter()
                .map(|p| RunReport::load(p))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let agg = aggregate_runs(&runs)?;
            print!("{}", aggregate_text(&agg));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("aggregate.json"), agg.to_json())?;
                write_source_tables(&dir, &agg)?;
            }
            Ok(true)
        }
        Command::Replay { operator, artifact, captured, flags } => replay(&operator, &artifact, captured, &flags),
    }
}

fn read_candidate(path: &Path, operator: &str) -> anyhow::Result<String> {
    if path.is_dir() {
        let best = ArtifactStore::new(path)
            .best(operator)
            .with_context(|| format!("no stored candidate for {operator} in {}", path.display()))?;
        return Ok(best.source);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn replay(operator: &str, artifact: &Path, captured: bool, flags: &RunFlags) -> anyhow::Result<bool> {
    let cfg = flags.resolve()?;
    let rt = Runtime::build(&cfg)?;
    let op = rt
        .catalog
        .get(operator)
        .with_context(|| format!("operator {operator} is not in the catalog"))?;
    let source = read_candidate(artifact, operator)?;
    let policy = if captured { TestSourcePolicy::CapturedInputs } else { cfg.session.test_source };
    let plan = plan_tests(op, policy, &rt.captured, cfg.session.plan_seed)?;
    let result = replay_artifact(&source, &plan, &rt.pool, &rt.lint_config, &cfg.session.tolerance_policy);
    if !result.lint.pass {
        println!("FAIL {operator}: lint\n{}", result.lint);
        return Ok(false);
    }
    match result.verdict.expect("lint passed") {
        PlanVerdict::Passed { tests } => {
            println!("PASS {operator}: {tests} test(s)");
            Ok(true)
        }
        PlanVerdict::CompileError(log) => {
            println!("FAIL {operator}: compile\n{log}");
            Ok(false)
        }
        PlanVerdict::TestFailed { case_id, payload } => {
            println!("FAIL {operator}: accuracy on {case_id}\n{}", serde_json::to_string_pretty(&payload)?);
            Ok(false)
        }
        PlanVerdict::Crashed { case_id, report } => {
            println!("FAIL {operator}: crash on {case_id} ({})", report.crash_kind);
            Ok(false)
        }
        PlanVerdict::WorkerLost(m) => bail!("worker lost during replay: {m}"),
    }
}
