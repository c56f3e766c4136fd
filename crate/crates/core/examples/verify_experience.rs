//! Audits an experience against its source traces, then shows the audit
//! catching an edge that no demonstration witnessed.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::summarizer::{summarize_against_world, SummarizeOptions};
use exprr::verifier::{verify_experience, Audit};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let report = verify_experience(&exp, &traces, 6)?;
    println!("{report}");
    if !report.passed() {
        return Err("summarized experience failed verification".into());
    }

    let mut tampered = exp.clone();
    let start = tampered.low.start_node;
    let gate = tampered.low.edge(start, &"Type/gate".parse()?).ok_or("no gate edge")?.to;
    let mut extra = tampered.low.edge(gate, &"Type/name".parse()?).ok_or("no name edge")?.clone();
    extra.template = exp.low.edges.iter().find(|e| e.key().role == "date").ok_or("no date edge")?.template.clone();
    extra.witnesses.clear();
    tampered.low.edges.push(extra);
    let report = verify_experience(&tampered, &traces, 6)?;
    println!("{report}");
    if report.audit(Audit::Witness).passed() {
        return Err("unwitnessed edge went unnoticed".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
