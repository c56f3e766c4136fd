//! Renames every element id so the layout digest no longer matches; the
//! replay falls back to the role-bound plan and the stub planner.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::replayer::{replay, Outcome, StubPlanner, TaskRequest};
use exprr::sim::{fingerprint, perturb, PerturbMode};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let renamed = perturb(&world, PerturbMode::RenameIds);
    let (old, new) = (fingerprint(&world), fingerprint(&renamed));
    println!("digest changed: {}", old.digest != new.digest);
    println!("role digest kept: {}", old.role_digest == new.role_digest);

    let result = replay(&TaskRequest::new(demo::TASK_LABEL, demo::fresh_inputs()), &exp, &renamed, &StubPlanner);
    for r in &result.audit {
        let id = r.action.template.element_id.as_deref().unwrap_or("-");
        println!("{:?} {} on {id} planner={}", r.level, r.action.key(), r.planner_used);
    }
    println!("outcome {:?}", result.outcome);
    if result.outcome != Outcome::Success || !result.audit.iter().all(|r| r.planner_used) {
        return Err("expected a planner-driven success".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
