//! Asks for a replay that fills gate and then date without a name. No
//! demonstration filled date before name, so the monitor denies it.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::monitor::CheckKind;
use exprr::recorder::record;
use exprr::replayer::{replay, Outcome, StubPlanner, TaskRequest};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let task = TaskRequest::new(demo::TASK_LABEL, [("gate", "B7"), ("date", "2025-07-04")]);
    let result = replay(&task, &exp, &world, &StubPlanner);
    for r in &result.audit {
        println!("{:?} {} allowed={} {}", r.level, r.action.key(), r.verdict.allowed, r.verdict.detail);
    }
    let denied_by = result.audit.last().and_then(|r| r.verdict.failed_check);
    println!("outcome {:?}, failed check {denied_by:?}", result.outcome);
    if result.outcome != Outcome::Denied || denied_by != Some(CheckKind::DependencyOrder) {
        return Err("expected a dependency-order denial".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
