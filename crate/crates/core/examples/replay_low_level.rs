//! Replays the form task with fresh inputs on the unchanged world, where the
//! element-bound automaton runs without a planner.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::replayer::{replay, AuditLevel, Outcome, StubPlanner, TaskRequest};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let task = TaskRequest::new(demo::TASK_LABEL, demo::fresh_inputs());
    let result = replay(&task, &exp, &world, &StubPlanner);
    for r in &result.audit {
        println!("{:?} {} {:?} allowed={}", r.level, r.action.key(), r.action.args, r.verdict.allowed);
    }
    println!("outcome {:?}: {}", result.outcome, result.detail);
    if result.outcome != Outcome::Success || result.audit.iter().any(|r| r.level != AuditLevel::Low) {
        return Err("expected a low-level success".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
