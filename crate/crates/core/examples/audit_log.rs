//! Streams a replay's audit records to a JSONL file and reads them back.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::replayer::{read_audit, replay_logged, AuditWriter, StubPlanner, TaskRequest};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("audit.jsonl");
    let mut writer = AuditWriter::create(&path)?;
    let task = TaskRequest::new(demo::TASK_LABEL, [("name", "Ann"), ("date", "2025-08-01")]);
    let result = replay_logged(&task, &exp, &world, &StubPlanner, &mut writer)?;
    print!("{}", std::fs::read_to_string(&path)?);
    let records = read_audit(&path)?;
    println!("{} records, outcome {:?}", records.len(), result.outcome);
    if records != result.audit {
        return Err("persisted audit differs from the in-memory one".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
