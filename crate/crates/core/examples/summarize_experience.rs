//! Summarizes the two form demonstrations into a two-level experience and
//! prints its automaton and ordering constraints.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    println!("experience {} for `{}`", exp.experience_id, exp.task_label);
    for node in &exp.low.nodes {
        let accept = if exp.low.accept_nodes.contains(&node.id) { " (accept)" } else { "" };
        println!("  {} = {}{accept}", node.id, node.node_signature);
    }
    for edge in &exp.low.edges {
        println!("  {} --{}--> {}  {:?}", edge.from, edge.key(), edge.to, edge.param_constraints);
    }
    for step in &exp.high.steps {
        println!("  step {}: {}", step.step_id, step.description);
    }
    for key in ["Type/date", "Click/submit"] {
        let before: Vec<String> = exp.high.required_before(&key.parse()?).iter().map(|k| k.to_string()).collect();
        println!("  {key} requires {before:?}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
