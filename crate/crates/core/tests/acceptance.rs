//! Acceptance run: one pass/fail line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::Rng;

use common::{mediation_holds, random_demo, random_trace_set, random_world, rng, WorldShape};
use exprr::demo;
use exprr::experience::Experience;
use exprr::monitor::{self, CheckKind, Level, MonitorContext};
use exprr::recorder::{record, DemoScript, RawStep};
use exprr::replayer::{read_audit, replay, replay_logged, AuditLevel, AuditWriter, Outcome, ReplayResult, StubPlanner, TaskRequest};
use exprr::sim::{self, perturb, ElementKind, ElementSpec, EnvState, PageSpec, PerturbMode, WorldSpec};
use exprr::store;
use exprr::sts::{abstract_trace, mask_sensitive, signature_of, SignatureKey, TemplateKey, Trace};
use exprr::summarizer::{enumerate_language, summarize_against_world, SummarizeOptions};
use exprr::verifier::verify_experience;

type Check = Result<String, String>;

/// Every replay performed by the run, for the mediation criterion.
#[derive(Default)]
struct Replays(Vec<ReplayResult>);

impl Replays {
    fn run(&mut self, task: &TaskRequest, exp: &Experience, world: &WorldSpec) -> ReplayResult {
        let r = replay(task, exp, world, &StubPlanner);
        self.0.push(r.clone());
        r
    }
}

fn opts(created_at: u64) -> SummarizeOptions {
    SummarizeOptions {
        created_at,
        ..SummarizeOptions::default()
    }
}

fn case_study() -> (WorldSpec, Vec<Trace>, Experience) {
    let world = demo::form_world();
    let none = BTreeSet::new();
    let traces = vec![
        record(&demo::script_a(), &world, &none).unwrap(),
        record(&demo::script_b(), &world, &none).unwrap(),
    ];
    let exp = summarize_against_world(&traces, &world, &opts(0)).unwrap();
    (world, traces, exp)
}

fn ground_truth_fidelity(replays: &mut Replays) -> Check {
    let start = Instant::now();
    let mut matched = 0;
    for seed in 0..100u64 {
        let mut r = rng(1_000 + seed);
        let shape = WorldShape {
            repeat_group: r.gen_bool(0.3),
            ..WorldShape::default()
        };
        let world = random_world(&mut r, shape);
        let repeats = r.gen_range(0..=3);
        let demo = random_demo(&mut r, &world, "fidelity", repeats);
        let trace = record(&demo.script, &world, &BTreeSet::new()).map_err(|e| format!("seed {seed}: {e}"))?;
        let exp = summarize_against_world(std::slice::from_ref(&trace), &world, &opts(0))
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let result = replays.run(&TaskRequest::new("fidelity", demo.inputs.clone()), &exp, &world);
        if result.outcome == Outcome::Success && signature_of(&result.final_state) == trace.final_snapshot {
            matched += 1;
        } else {
            return Err(format!("seed {seed}: {:?} {}", result.outcome, result.detail));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(5) {
        return Err(format!("{matched}/100 matched but took {elapsed:?}"));
    }
    Ok(format!("{matched}/100 final signatures match in {:.2}s", elapsed.as_secs_f64()))
}

fn dependency_rejection(replays: &mut Replays) -> Check {
    let (world, _, exp) = case_study();
    let task = TaskRequest::new(demo::TASK_LABEL, [("gate", "B7"), ("date", "2025-07-04")]);
    let result = replays.run(&task, &exp, &world);
    let last = result.audit.last().ok_or("no audit records")?;
    let failed = last.verdict.failed_check;
    if result.outcome == Outcome::Denied
        && failed == Some(CheckKind::DependencyOrder)
        && last.action.key() == "Type/date".parse::<TemplateKey>().unwrap()
    {
        Ok("gate then date denied by DependencyOrder".into())
    } else {
        Err(format!("outcome {:?}, failed check {failed:?}", result.outcome))
    }
}

/// Tandem repeats per trace: leftmost start, then widest coverage, then the
/// shortest body.
fn oracle_loop_bodies(keys: &[TemplateKey]) -> Vec<Vec<TemplateKey>> {
    let n = keys.len();
    let mut bodies = Vec::new();
    let mut i = 0;
    while i < n {
        let mut best: Option<(usize, usize)> = None;
        for len in 1..=n - i {
            for reps in 2..=n {
                if i + len * reps > n {
                    break;
                }
                let body = &keys[i..i + len];
                if (1..reps).all(|k| &keys[i + k * len..i + (k + 1) * len] == body)
                    && best.is_none_or(|(bl, br)| len * reps > bl * br)
                {
                    best = Some((len, reps));
                }
            }
        }
        match best {
            Some((len, reps)) => {
                bodies.push(keys[i..i + len].to_vec());
                i += len * reps;
            }
            None => i += 1,
        }
    }
    bodies
}

/// Largest `k` such that `seq` ends in `k - 1` whole copies of `body`
/// followed by a non-empty prefix of it.
fn oracle_iterations(seq: &[TemplateKey], body: &[TemplateKey]) -> usize {
    let mut best = 0;
    for k in 1..=seq.len() {
        for r in 1..=body.len() {
            let mut tail: Vec<TemplateKey> = Vec::new();
            for _ in 1..k {
                tail.extend_from_slice(body);
            }
            tail.extend_from_slice(&body[..r]);
            if seq.ends_with(&tail) {
                best = best.max(k);
            }
        }
    }
    best
}

/// Every key sequence of length at most `max_len` that walks witnessed
/// signature transitions from the start signature to a recorded final
/// signature without exceeding an observed loop count.
fn oracle_language(world: &WorldSpec, traces: &[Trace], max_len: usize) -> BTreeSet<Vec<TemplateKey>> {
    let mut transitions: BTreeMap<(SignatureKey, TemplateKey), SignatureKey> = BTreeMap::new();
    let start = signature_of(&EnvState::fresh(world)).key();
    let mut accept = BTreeSet::new();
    let mut sequences = Vec::new();
    for trace in traces {
        let mut state = EnvState::fresh(world);
        let mut keys = Vec::new();
        for act in abstract_trace(trace).unwrap() {
            let next = sim::apply(&state, &act, world).unwrap();
            transitions.insert((signature_of(&state).key(), act.key()), signature_of(&next).key());
            keys.push(act.key());
            state = next;
        }
        accept.insert(signature_of(&state).key());
        sequences.push(keys);
    }
    let mut bounds: BTreeMap<Vec<TemplateKey>, usize> = BTreeMap::new();
    for keys in &sequences {
        for body in oracle_loop_bodies(keys) {
            bounds.entry(body).or_insert(0);
        }
    }
    for (body, bound) in bounds.iter_mut() {
        for keys in &sequences {
            for end in 1..=keys.len() {
                *bound = (*bound).max(oracle_iterations(&keys[..end], body));
            }
        }
    }
    let mut out = BTreeSet::new();
    let mut frontier = vec![(start, Vec::<TemplateKey>::new())];
    while let Some((node, path)) = frontier.pop() {
        if accept.contains(&node) {
            out.insert(path.clone());
        }
        if path.len() == max_len {
            continue;
        }
        for ((from, key), to) in &transitions {
            if from != &node {
                continue;
            }
            let mut next = path.clone();
            next.push(key.clone());
            if bounds.iter().all(|(body, b)| oracle_iterations(&next, body) <= *b) {
                frontier.push((to.clone(), next));
            }
        }
    }
    out
}

fn conservativeness() -> Check {
    let max_len = 8;
    let mut sizes = 0;
    for seed in 0..50u64 {
        let (world, traces, exp) = random_trace_set(2_000 + seed, max_len);
        let report = verify_experience(&exp, &traces, max_len).map_err(|e| format!("seed {seed}: {e}"))?;
        if !report.passed() {
            return Err(format!("seed {seed}: {report}"));
        }
        let language = enumerate_language(&exp.low, max_len).map_err(|e| format!("seed {seed}: {e}"))?;
        let oracle = oracle_language(&world, &traces, max_len);
        if language != oracle {
            let extra: Vec<_> = language.difference(&oracle).take(2).collect();
            let missing: Vec<_> = oracle.difference(&language).take(2).collect();
            return Err(format!("seed {seed}: extra {extra:?}, missing {missing:?}"));
        }
        sizes += language.len();
    }
    Ok(format!("50/50 sets verified, {sizes} sequences match the walk oracle"))
}

fn loop_bounds(replays: &mut Replays) -> Check {
    let world = demo::cart_world();
    let none = BTreeSet::new();
    let two = record(&demo::cart_script(&["apple", "pear"]), &world, &none).unwrap();
    let three = record(&demo::cart_script(&["fig", "kiwi", "plum"]), &world, &none).unwrap();
    let traces = vec![two, three.clone()];
    let exp = summarize_against_world(&traces, &world, &opts(0)).map_err(|e| e.to_string())?;
    let body: Vec<TemplateKey> = vec!["Type/item".parse().unwrap(), "Click/add".parse().unwrap()];
    let bound = exp.low.loop_bounds.values().find(|l| l.body == body).map(|l| l.limit);
    if bound != Some(3) {
        return Err(format!("loop bound {bound:?}"));
    }

    let acts = abstract_trace(&three).unwrap();
    let (type_item, click_add) = (acts[0].clone(), acts[1].clone());
    let mut state = EnvState::fresh(&world);
    let mut ctx = MonitorContext::new(&exp, Level::Low, signature_of(&state)).without_bypass();
    for _ in 0..3 {
        for action in [&type_item, &click_add] {
            state = sim::apply(&state, action, &world).unwrap();
            ctx = monitor::advance(&ctx, action, &exp, Level::Low, signature_of(&state))
                .map_err(|e| format!("iteration within bound rejected: {e}"))?;
        }
    }
    let fourth = monitor::check(&ctx, &type_item, &exp, Level::Low).map_err(|e| e.to_string())?;
    if fourth.allowed || fourth.failed_check != Some(CheckKind::LoopBound) {
        return Err(format!("4th iteration verdict {fourth:?}"));
    }

    let task = TaskRequest::new(demo::CART_TASK_LABEL, [("item", "fig")]);
    let result = replays.run(&task, &exp, &world);
    if result.outcome != Outcome::Success {
        return Err(format!("cart replay {:?}", result.outcome));
    }

    let keys: Vec<TemplateKey> = acts.iter().map(|a| a.key()).collect();
    exp.low.accepts(&keys).map_err(|r| format!("3-iteration trace rejected: {}", r.reason))?;
    let report = verify_experience(&exp, &traces, 8).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(report.to_string());
    }
    Ok("bound 3, 4th iteration denied by LoopBound, 3-iteration trace contained".into())
}

fn fallback(replays: &mut Replays) -> Check {
    let mut cases = Vec::new();
    let (world, _, exp) = case_study();
    cases.push((world, exp, TaskRequest::new(demo::TASK_LABEL, demo::fresh_inputs())));
    for seed in 0..20u64 {
        let mut r = rng(3_000 + seed);
        let world = random_world(&mut r, WorldShape::default());
        let d = random_demo(&mut r, &world, "fallback", 0);
        let trace = record(&d.script, &world, &BTreeSet::new()).unwrap();
        let exp = summarize_against_world(&[trace], &world, &opts(0)).unwrap();
        cases.push((world, exp, TaskRequest::new("fallback", d.inputs)));
    }
    for (i, (world, exp, task)) in cases.iter().enumerate() {
        let renamed = perturb(world, PerturbMode::RenameIds);
        let (fp, orig) = (sim::fingerprint(&renamed), &exp.env_fingerprint);
        if fp.digest == orig.digest || fp.role_digest != orig.role_digest {
            return Err(format!("case {i}: rename kept the digest or changed roles"));
        }
        let result = replays.run(task, exp, &renamed);
        let all_high = result.audit.iter().all(|a| a.planner_used && a.level == AuditLevel::High);
        if result.outcome != Outcome::Success || !all_high || result.audit.is_empty() {
            return Err(format!("case {i}: {:?} {}", result.outcome, result.detail));
        }
    }
    Ok(format!("{}/{} renamed worlds succeed at High with the planner on every step", cases.len(), cases.len()))
}

fn mediation(replays: &Replays) -> Check {
    let bad = replays.0.iter().filter(|r| !mediation_holds(r)).count();
    if bad == 0 {
        Ok(format!("{} replays fully mediated", replays.0.len()))
    } else {
        Err(format!("{bad}/{} replays break mediation", replays.0.len()))
    }
}

fn login_world() -> WorldSpec {
    let mut user = ElementSpec::new("user", "username", ElementKind::TextField);
    user.required = true;
    let mut pass = ElementSpec::new("pw", "password", ElementKind::TextField);
    pass.required = true;
    let mut go = ElementSpec::new("go", "login", ElementKind::Button);
    go.submits = true;
    WorldSpec {
        pages: vec![PageSpec {
            page_id: "login".into(),
            elements: vec![user, pass, go],
            nav_links: BTreeMap::new(),
        }],
        start_page: "login".into(),
    }
}

fn masking(replays: &mut Replays) -> Check {
    let secret = "hunter2-s3cret";
    let world = login_world();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut keystrokes = vec![RawStep::type_text("user", "ada"), RawStep::new(exprr::sts::EventKind::Focus, Some("pw"), &[])];
    for c in secret.chars() {
        let s = c.to_string();
        keystrokes.push(RawStep::new(exprr::sts::EventKind::Keypress, None, &[("key", s.as_str())]));
    }
    keystrokes.push(RawStep::click("go"));
    let scripts = [
        vec![RawStep::type_text("pw", secret), RawStep::type_text("user", "ada"), RawStep::click("go")],
        keystrokes,
    ];
    let mut traces = Vec::new();
    for (i, steps) in scripts.into_iter().enumerate() {
        let script = DemoScript {
            task_label: "log in".into(),
            steps,
        };
        let trace = record(&script, &world, &BTreeSet::new()).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("trace{i}.jsonl"));
        trace.write_jsonl(std::fs::File::create(&path).unwrap()).map_err(|e| e.to_string())?;
        if std::fs::read_to_string(&path).unwrap().contains(secret) {
            return Err(format!("trace {i} leaks the secret"));
        }
        let once = mask_sensitive(&trace, &BTreeSet::new());
        if mask_sensitive(&once, &BTreeSet::new()) != once || once != trace {
            return Err(format!("trace {i}: masking is not idempotent"));
        }
        traces.push(trace);
    }
    let exp = summarize_against_world(&traces, &world, &opts(0)).map_err(|e| e.to_string())?;
    let audit_path = dir.path().join("audit.jsonl");
    let mut writer = AuditWriter::create(&audit_path).map_err(|e| e.to_string())?;
    let task = TaskRequest::new("log in", [("username", "ada"), ("password", secret)]);
    let result = replay_logged(&task, &exp, &world, &StubPlanner, &mut writer).map_err(|e| e.to_string())?;
    replays.0.push(result.clone());
    if result.outcome != Outcome::Success {
        return Err(format!("login replay {:?}: {}", result.outcome, result.detail));
    }
    let persisted = [
        std::fs::read_to_string(&audit_path).unwrap(),
        exp.to_json(),
    ];
    if persisted.iter().any(|text| text.contains(secret)) {
        return Err("secret persisted in the audit log or experience".into());
    }
    if read_audit(&audit_path).map_err(|e| e.to_string())?.len() != result.audit.len() {
        return Err("audit log incomplete".into());
    }
    Ok("no raw secret in traces, experience or audit log; masking idempotent".into())
}

fn store_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut saved = Vec::new();
    for seed in 0..50u64 {
        let (world, traces, _) = random_trace_set(4_000 + seed, 8);
        let exp = summarize_against_world(&traces, &world, &opts(seed)).map_err(|e| e.to_string())?;
        store::save(&exp, root).map_err(|e| e.to_string())?;
        saved.push(exp);
    }
    for exp in &saved {
        let loaded = store::load(root, &exp.experience_id).map_err(|e| e.to_string())?;
        if &loaded != exp {
            return Err(format!("{} differs after load", exp.experience_id));
        }
    }
    let ids: BTreeSet<_> = saved.iter().map(|e| &e.experience_id).collect();
    if store::list(root).map_err(|e| e.to_string())?.entries.len() != ids.len() {
        return Err("index size differs from the saved set".into());
    }

    let ranking_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = ranking_dir.path();
    let (world, traces, _) = case_study();
    let renamed = perturb(&world, PerturbMode::RenameIds);
    let exact_low = summarize_against_world(&traces, &world, &opts(1)).unwrap();
    let exact_high = summarize_against_world(&traces[..1], &world, &opts(2)).unwrap();
    let mut role_only = summarize_against_world(&traces[1..], &world, &opts(3)).unwrap();
    role_only.env_fingerprint = sim::fingerprint(&renamed);
    for e in [&exact_low, &exact_high, &role_only] {
        store::save(e, root).map_err(|e| e.to_string())?;
    }
    let outcomes = [(&role_only, true, 5), (&exact_high, true, 3), (&exact_low, true, 1), (&exact_low, false, 3)];
    for (exp, ok, times) in outcomes {
        for _ in 0..times {
            store::record_outcome(root, &exp.experience_id, ok).map_err(|e| e.to_string())?;
        }
    }
    let ranked: Vec<_> = store::select(root, demo::TASK_LABEL, &sim::fingerprint(&world))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| (s.experience_id, s.level_hint))
        .collect();
    let expected = vec![
        (exact_high.experience_id.clone(), Level::Low),
        (exact_low.experience_id.clone(), Level::Low),
        (role_only.experience_id.clone(), Level::High),
    ];
    if ranked != expected {
        return Err(format!("ranking {ranked:?}"));
    }
    Ok(format!("{} experiences round-trip; exact digest and success rate rank first", saved.len()))
}

fn main() {
    let mut replays = Replays::default();
    let results: Vec<(usize, Check)> = vec![
        (1, ground_truth_fidelity(&mut replays)),
        (2, dependency_rejection(&mut replays)),
        (3, conservativeness()),
        (4, loop_bounds(&mut replays)),
        (5, fallback(&mut replays)),
        (7, masking(&mut replays)),
        (8, store_round_trip()),
    ];
    let mut all: BTreeMap<usize, Check> = results.into_iter().collect();
    all.insert(6, mediation(&replays));
    let mut failed = 0;
    for (n, check) in &all {
        match check {
            Ok(msg) => println!("criterion {n}: PASS {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL {msg}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
