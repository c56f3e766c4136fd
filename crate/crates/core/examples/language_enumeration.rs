//! Lists every key sequence the form experience accepts, up to a length.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::record;
use exprr::summarizer::{enumerate_language, summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = [
        record(&demo::script_a(), &world, &none)?,
        record(&demo::script_b(), &world, &none)?,
    ];
    let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default())?;
    let language = enumerate_language(&exp.low, 8)?;
    for seq in &language {
        let keys: Vec<String> = seq.iter().map(|k| k.to_string()).collect();
        println!("{}", keys.join(" -> "));
    }
    if language.len() != traces.len() {
        return Err(format!("expected {} sequences, got {}", traces.len(), language.len()).into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
