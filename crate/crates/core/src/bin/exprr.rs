//! Command-line entry point: record, summarize, verify, replay, store and
//! audit inspection.
//!
//! Exit codes: 0 on success, 1 on a domain failure (denied or failed replay,
//! failed verification), 2 on usage or I/O errors.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use exprr::experience::Experience;
use exprr::recorder::{record, DemoScript, RawStep};
use exprr::replayer::{read_audit, replay_logged, report_outcome, AuditWriter, Outcome, StubPlanner, TaskRequest};
use exprr::sim::{fingerprint, WorldSpec};
use exprr::store;
use exprr::sts::Trace;
use exprr::summarizer::{summarize, summarize_against_world, SummarizeOptions};
use exprr::verifier::verify_experience;

#[derive(Parser)]
#[command(name = "exprr", version, about = "Record, summarize and safely replay UI workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a demonstration script and write its trace.
    Record {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extra roles whose values are masked.
        #[arg(long, value_delimiter = ',')]
        sensitive: Vec<String>,
        /// Append this JSON step to the script (creating it) before recording.
        #[arg(long)]
        append_step: Option<String>,
        /// Task label for a script created by --append-step.
        #[arg(long)]
        task: Option<String>,
    },
    /// Summarize traces into an experience file.
    Summarize {
        #[arg(long, value_delimiter = ',', required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replay each trace against this world first.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        enum_threshold: usize,
        /// Defaults to the current unix time in seconds.
        #[arg(long)]
        created_at: Option<u64>,
    },
    /// Audit an experience against its source traces.
    Verify {
        #[arg(long)]
        experience: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
    },
    /// Run a task under the monitor.
    Replay {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        experience: PathBuf,
        /// Task input as role=value; repeatable.
        #[arg(long = "input", value_parser = parse_input)]
        inputs: Vec<(String, String)>,
        #[arg(long)]
        audit: PathBuf,
        /// Defaults to the experience's task.
        #[arg(long)]
        task: Option<String>,
        /// Count the outcome against the experience in this store.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Manage the experience store.
    Store {
        #[command(subcommand)]
        command: StoreCommand,
    },
    /// Inspect audit logs.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
}

#[derive(Subcommand)]
enum StoreCommand {
    List {
        #[arg(long)]
        root: PathBuf,
    },
    Show {
        #[arg(long)]
        root: PathBuf,
        id: String,
    },
    Save {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        experience: PathBuf,
    },
    Select {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        world: PathBuf,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    Show { path: PathBuf },
}

fn parse_input(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected role=value, got `{s}`")),
    }
}

/// A run that completed but whose result is a domain failure.
#[derive(Debug)]
struct DomainFailure(String);

impl std::fmt::Display for DomainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainFailure {}

fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Trace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn load_world(path: &Path) -> Result<WorldSpec> {
    WorldSpec::load(path).with_context(|| format!("loading world {}", path.display()))
}

fn load_experience(path: &Path) -> Result<Experience> {
    Experience::load(path).with_context(|| format!("loading experience {}", path.display()))
}

fn append_step(script: &Path, step_json: &str, task: Option<&str>) -> Result<()> {
    let step: RawStep = serde_json::from_str(step_json).context("parsing --append-step")?;
    let mut demo = if script.exists() {
        DemoScript::load(script)?
    } else {
        DemoScript {
            task_label: task.ok_or_else(|| anyhow!("--task is required to create a new script"))?.to_string(),
            steps: Vec::new(),
        }
    };
    demo.steps.push(step);
    std::fs::write(script, serde_json::to_string_pretty(&demo)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Record { world, script, out, sensitive, append_step: step, task } => {
            if let Some(step) = step {
                append_step(&script, &step, task.as_deref())?;
            }
            let world = load_world(&world)?;
            let demo = DemoScript::load(&script)?;
            let sensitive: BTreeSet<String> = sensitive.into_iter().collect();
            let trace = record(&demo, &world, &sensitive)?;
            trace.write_jsonl(File::create(&out)?)?;
            eprintln!("recorded {} events as trace {}", trace.events.len(), trace.trace_id);
        }
        Command::Summarize { traces, out, world, enum_threshold, created_at } => {
            let traces: Vec<Trace> = traces.iter().map(|p| read_trace(p)).collect::<Result<_>>()?;
            let created_at = match created_at {
                Some(t) => t,
                None => std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH)?.as_secs(),
            };
            let opts = SummarizeOptions { enum_threshold, created_at };
            let exp = match world {
                Some(w) => summarize_against_world(&traces, &load_world(&w)?, &opts)?,
                None => summarize(&traces, &traces[0].env_fingerprint, &opts)?,
            };
            std::fs::write(&out, exp.to_json())?;
            eprintln!(
                "experience {}: {} nodes, {} edges, {} steps",
                exp.experience_id,
                exp.low.nodes.len(),
                exp.low.edges.len(),
                exp.high.steps.len()
            );
        }
        Command::Verify { experience, traces, max_len } => {
            let exp = load_experience(&experience)?;
            let traces: Vec<Trace> = traces.iter().map(|p| read_trace(p)).collect::<Result<_>>()?;
            let report = verify_experience(&exp, &traces, max_len)?;
            println!("{report}");
            if !report.passed() {
                return Err(DomainFailure("verification failed".into()).into());
            }
        }
        Command::Replay { world, experience, inputs, audit, task, store: root } => {
            let world = load_world(&world)?;
            let exp = load_experience(&experience)?;
            let task = TaskRequest {
                task_label: task.unwrap_or_else(|| exp.task_label.clone()),
                inputs: inputs.into_iter().collect(),
            };
            let mut writer = AuditWriter::create(&audit)?;
            let result = replay_logged(&task, &exp, &world, &StubPlanner, &mut writer)?;
            if let Some(root) = root {
                report_outcome(&result, &root)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "experience_id": result.experience_id,
                    "outcome": result.outcome,
                    "applied_actions": result.applied_actions,
                    "records": result.audit.len(),
                    "detail": result.detail,
                })
            );
            if result.outcome != Outcome::Success {
                return Err(DomainFailure(format!("replay {:?}: {}", result.outcome, result.detail)).into());
            }
        }
        Command::Store { command } => match command {
            StoreCommand::List { root } => {
                for e in store::list(&root)?.entries {
                    println!(
                        "{}\t{}\tcreated {}\t{} ok / {} failed",
                        e.experience_id, e.task_label, e.created_at, e.success_count, e.failure_count
                    );
                }
            }
            StoreCommand::Show { root, id } => println!("{}", store::load(&root, &id)?.to_json()),
            StoreCommand::Save { root, experience } => {
                println!("{}", store::save(&load_experience(&experience)?, &root)?);
            }
            StoreCommand::Select { root, task, world } => {
                let fp = fingerprint(&load_world(&world)?);
                for s in store::select(&root, &task, &fp)? {
                    println!("{}\t{:?}\t{:.3}", s.experience_id, s.level_hint, s.success_rate);
                }
            }
        },
        Command::Audit { command: AuditCommand::Show { path } } => {
            for r in read_audit(&path)? {
                let verdict = match (&r.verdict.allowed, &r.verdict.failed_check) {
                    (true, _) => "allow".to_string(),
                    (false, Some(c)) => format!("deny {c}"),
                    (false, None) => "deny".to_string(),
                };
                let exec = r.exec_result.map(|e| format!("{e:?}")).unwrap_or_else(|| "-".into());
                let args: Vec<String> = r.action.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!(
                    "{}\t{:?}\t{}({})\t{verdict}\t{exec}\tplanner={}",
                    r.tick,
                    r.level,
                    r.action.key(),
                    args.join(","),
                    r.planner_used
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<DomainFailure>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
