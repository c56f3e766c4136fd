//! Seeded generators for random worlds and demonstrations.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exprr::experience::Experience;
use exprr::recorder::{record, DemoScript, RawStep};
use exprr::replayer::{AuditRecord, ReplayResult};
use exprr::sim::{ElementKind, ElementSpec, PageSpec, WorldSpec};
use exprr::sts::{EventKind, Trace};
use exprr::summarizer::{summarize_against_world, SummarizeOptions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct WorldShape {
    pub max_pages: usize,
    pub max_inputs: usize,
    /// Adds an item field plus an add button that demonstrations may repeat.
    pub repeat_group: bool,
}

impl Default for WorldShape {
    fn default() -> Self {
        Self {
            max_pages: 3,
            max_inputs: 3,
            repeat_group: false,
        }
    }
}

/// Pages `p0..pn` chained by links; the last page has a submit button.
pub fn random_world(rng: &mut ChaCha8Rng, shape: WorldShape) -> WorldSpec {
    let n_pages = rng.gen_range(1..=shape.max_pages);
    let mut pages = Vec::new();
    for p in 0..n_pages {
        let mut elements = Vec::new();
        for j in 0..rng.gen_range(1..=shape.max_inputs) {
            let id = format!("e{p}_{j}");
            let role = format!("r{p}_{j}");
            let mut el = if rng.gen_bool(0.3) {
                let mut s = ElementSpec::new(id, role, ElementKind::Select);
                s.options = (0..rng.gen_range(2..=4)).map(|k| format!("opt{k}")).collect();
                s
            } else {
                ElementSpec::new(id, role, ElementKind::TextField)
            };
            el.required = rng.gen_bool(0.4);
            elements.push(el);
        }
        if shape.repeat_group && p == 0 {
            elements.push(ElementSpec::new(format!("item{p}"), format!("item{p}"), ElementKind::TextField));
            elements.push(ElementSpec::new(format!("add{p}"), format!("add{p}"), ElementKind::Button));
        }
        if rng.gen_bool(0.3) {
            elements.push(ElementSpec::new(format!("help{p}"), format!("help{p}"), ElementKind::Button));
        }
        let mut nav_links = BTreeMap::new();
        if p + 1 < n_pages {
            let link = format!("next{p}");
            elements.push(ElementSpec::new(link.clone(), link.clone(), ElementKind::Link));
            nav_links.insert(link, format!("p{}", p + 1));
        } else {
            let mut submit = ElementSpec::new(format!("send{p}"), format!("send{p}"), ElementKind::Button);
            submit.submits = true;
            if let Some(first_text) = elements.iter().find(|e| e.kind == ElementKind::TextField && e.required) {
                if rng.gen_bool(0.3) {
                    submit.enabled_when =
                        Some([format!("Type/{}", first_text.role).parse().unwrap()].into_iter().collect());
                }
            }
            elements.push(submit);
        }
        pages.push(PageSpec {
            page_id: format!("p{p}"),
            elements,
            nav_links,
        });
    }
    let world = WorldSpec {
        pages,
        start_page: "p0".into(),
    };
    world.validate().expect("generated world is valid");
    world
}

pub fn random_value(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => format!("{}", rng.gen_range(0..1000)),
        1 => format!("2025-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28)),
        2 => format!("u{}@example.org", rng.gen_range(0..100)),
        _ => ["Ada", "Bo", "Cy", "Di", "Ed"].choose(rng).unwrap().to_string(),
    }
}

fn fill_steps(rng: &mut ChaCha8Rng, el: &ElementSpec, value: &str) -> Vec<RawStep> {
    if el.kind == ElementKind::Select {
        return vec![RawStep::new(EventKind::Select, Some(&el.element_id), &[("value", value)])];
    }
    if rng.gen_bool(0.3) {
        let mut steps = vec![RawStep::new(EventKind::Focus, Some(&el.element_id), &[])];
        for c in value.chars() {
            let s = c.to_string();
            steps.push(RawStep::new(EventKind::Keypress, None, &[("key", s.as_str())]));
        }
        steps
    } else {
        vec![RawStep::type_text(&el.element_id, value)]
    }
}

/// A demonstration script plus the role-to-value inputs it used.
#[derive(Debug, Clone)]
pub struct Demo {
    pub script: DemoScript,
    pub inputs: BTreeMap<String, String>,
}

/// Walks the pages in order, filling every required input and a random
/// subset of the optional ones in random order. `repeats` is how many times
/// the repeat group is used (0 skips it). Every key occurs at most once
/// unless `repeats > 1`.
pub fn random_demo(rng: &mut ChaCha8Rng, world: &WorldSpec, task_label: &str, repeats: usize) -> Demo {
    let mut steps = Vec::new();
    let mut inputs = BTreeMap::new();
    for page in &world.pages {
        let mut chosen: Vec<&ElementSpec> = page
            .elements
            .iter()
            .filter(|e| matches!(e.kind, ElementKind::TextField | ElementKind::Select))
            .filter(|e| !e.role.starts_with("item"))
            .filter(|e| e.required || rng.gen_bool(0.6))
            .collect();
        chosen.shuffle(rng);
        for el in chosen {
            let value = match el.kind {
                ElementKind::Select => el.options.choose(rng).unwrap().clone(),
                _ => random_value(rng),
            };
            steps.extend(fill_steps(rng, el, &value));
            inputs.insert(el.role.clone(), value);
        }
        if let Some(item) = page.elements.iter().find(|e| e.role.starts_with("item")) {
            let add = page.elements.iter().find(|e| e.role.starts_with("add")).unwrap();
            for k in 0..repeats {
                let v = format!("thing{k}");
                steps.push(RawStep::type_text(&item.element_id, &v));
                steps.push(RawStep::click(&add.element_id));
                inputs.insert(item.role.clone(), v);
            }
        }
        if let Some(help) = page.elements.iter().find(|e| e.role.starts_with("help")) {
            if rng.gen_bool(0.5) {
                steps.push(RawStep::click(&help.element_id));
            }
        }
        match page.nav_links.iter().next() {
            Some((link, target)) => {
                if rng.gen_bool(0.25) {
                    steps.push(RawStep::new(EventKind::Navigate, None, &[("page", target.as_str())]));
                } else {
                    steps.push(RawStep::click(link));
                }
            }
            None => {
                let submit = page.elements.iter().find(|e| e.submits).unwrap();
                steps.push(RawStep::click(&submit.element_id));
            }
        }
    }
    Demo {
        script: DemoScript {
            task_label: task_label.to_string(),
            steps,
        },
        inputs,
    }
}

/// A small random world with 2 or 3 recorded demonstrations and their
/// experience, sized so every trace has at most `max_activities` activities.
pub fn random_trace_set(seed: u64, max_activities: usize) -> (WorldSpec, Vec<Trace>, Experience) {
    let mut r = rng(seed);
    loop {
        let shape = WorldShape {
            max_pages: 2,
            max_inputs: 2,
            repeat_group: r.gen_bool(0.4),
        };
        let world = random_world(&mut r, shape);
        let n = r.gen_range(2..=3);
        let mut traces = Vec::new();
        for _ in 0..n {
            let repeats = r.gen_range(0..=3);
            let demo = random_demo(&mut r, &world, "random task", repeats);
            traces.push(record(&demo.script, &world, &BTreeSet::new()).expect("demo records"));
        }
        let too_long = traces.iter().any(|t| {
            exprr::sts::abstract_trace(t).map(|a| a.len() > max_activities).unwrap_or(true)
        });
        if too_long {
            continue;
        }
        let exp = summarize_against_world(&traces, &world, &SummarizeOptions::default()).expect("summarizes");
        return (world, traces, exp);
    }
}

/// Every allowed action was executed, every execution was preceded by an
/// allow, and nothing follows a deny.
pub fn mediation_holds(r: &ReplayResult) -> bool {
    let allows = r.audit.iter().filter(|a| a.verdict.allowed).count();
    let executed = r.audit.iter().filter(|a| a.exec_result.is_some()).count();
    let consistent = r
        .audit
        .iter()
        .all(|a: &AuditRecord| a.verdict.allowed == a.exec_result.is_some());
    let halted = match r.audit.iter().position(|a| !a.verdict.allowed) {
        Some(i) => i == r.audit.len() - 1,
        None => true,
    };
    allows == r.applied_actions && executed == r.applied_actions && consistent && halted
}
