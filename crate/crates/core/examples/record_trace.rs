//! Records a scripted demonstration against the bundled form world and
//! prints the resulting JSONL trace, then shows password masking.

use std::collections::BTreeSet;
use std::error::Error;

use exprr::demo;
use exprr::recorder::{record, DemoScript, RawStep};
use exprr::sim::{ElementKind, ElementSpec, PageSpec, WorldSpec};
use exprr::sts::{abstract_trace, MASK};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world = demo::form_world();
    let trace = record(&demo::script_a(), &world, &BTreeSet::new())?;
    print!("{}", trace.to_jsonl());
    for act in abstract_trace(&trace)? {
        println!("activity {} {:?}", act.key(), act.args);
    }

    let mut go = ElementSpec::new("go", "login", ElementKind::Button);
    go.submits = true;
    let login = WorldSpec {
        pages: vec![PageSpec {
            page_id: "login".into(),
            elements: vec![ElementSpec::new("pw", "password", ElementKind::TextField), go],
            nav_links: Default::default(),
        }],
        start_page: "login".into(),
    };
    let script = DemoScript {
        task_label: "log in".into(),
        steps: vec![RawStep::type_text("pw", "correct horse"), RawStep::click("go")],
    };
    let masked = record(&script, &login, &BTreeSet::new())?.to_jsonl();
    if masked.contains("correct horse") || !masked.contains(MASK) {
        return Err("password was not masked".into());
    }
    println!("password recorded as {MASK}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
