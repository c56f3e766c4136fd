//! Summarizes cart demonstrations that add two and three items, then shows
//! the monitor refusing a fourth add.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::monitor::{advance, check, CheckKind, Level, MonitorContext};
use exprr::recorder::record;
use exprr::sim::{apply, EnvState};
use exprr::sts::{abstract_trace, signature_of};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::cart_world();
    let none = BTreeSet::new();
    let two = record(&demo::cart_script(&["apple", "pear"]), &world, &none)?;
    let three = record(&demo::cart_script(&["fig", "kiwi", "plum"]), &world, &none)?;
    let exp = summarize_against_world(&[two, three.clone()], &world, &SummarizeOptions::default())?;
    for (id, bound) in &exp.low.loop_bounds {
        let body: Vec<String> = bound.body.iter().map(|k| k.to_string()).collect();
        println!("loop {id}: {body:?} at most {} times", bound.limit);
    }

    let acts = abstract_trace(&three)?;
    let mut state = EnvState::fresh(&world);
    let mut ctx = MonitorContext::new(&exp, Level::Low, signature_of(&state)).without_bypass();
    for round in 1..=4 {
        for action in &acts[..2] {
            let verdict = check(&ctx, action, &exp, Level::Low)?;
            println!("round {round}: {} allowed={}", action.key(), verdict.allowed);
            if !verdict.allowed {
                return if round == 4 && verdict.failed_check == Some(CheckKind::LoopBound) {
                    Ok(())
                } else {
                    Err(format!("unexpected denial: {}", verdict.detail).into())
                };
            }
            state = apply(&state, action, &world)?;
            ctx = advance(&ctx, action, &exp, Level::Low, signature_of(&state))?;
        }
    }
    Err("the fourth iteration was allowed".into())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
