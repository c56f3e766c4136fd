//! Saves experiences to an on-disk store, counts replay outcomes and ranks
//! candidates for a task.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::replayer::{replay, report_outcome, StubPlanner, TaskRequest};
use exprr::sim::fingerprint;
use exprr::store;
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let world = demo::form_world();
    let none = BTreeSet::new();
    let a = record(&demo::script_a(), &world, &none)?;
    let b = record(&demo::script_b(), &world, &none)?;
    let both = summarize_against_world(&[a.clone(), b], &world, &SummarizeOptions::default())?;
    let only_a = summarize_against_world(&[a], &world, &SummarizeOptions::default())?;
    for exp in [&both, &only_a] {
        store::save(exp, root)?;
    }

    let task = TaskRequest::new(demo::TASK_LABEL, demo::fresh_inputs());
    for exp in [&both, &only_a] {
        let result = replay(&task, exp, &world, &StubPlanner);
        println!("{} -> {:?}", exp.experience_id, result.outcome);
        report_outcome(&result, root)?;
    }
    for entry in store::list(root)?.entries {
        println!("{} {}/{}", entry.experience_id, entry.success_count, entry.failure_count);
    }
    let ranked = store::select(root, demo::TASK_LABEL, &fingerprint(&world))?;
    for s in &ranked {
        println!("candidate {} {:?} rate {:.2}", s.experience_id, s.level_hint, s.success_rate);
    }
    if ranked.first().map(|s| &s.experience_id) != Some(&both.experience_id) {
        return Err("the experience that succeeded should rank first".into());
    }
    if store::load(root, &both.experience_id)?.metadata.success_count != 1 {
        return Err("success was not counted".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
