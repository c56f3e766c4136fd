//! Runs every bundled example.

#[path = "../examples/audit_log.rs"]
mod audit_log;

#[test]
fn audit_log_runs() {
    audit_log::run_example().unwrap();
}

#[path = "../examples/dependency_denial.rs"]
mod dependency_denial;

#[test]
fn dependency_denial_runs() {
    dependency_denial::run_example().unwrap();
}

#[path = "../examples/experience_store.rs"]
mod experience_store;

#[test]
fn experience_store_runs() {
    experience_store::run_example().unwrap();
}

#[path = "../examples/language_enumeration.rs"]
mod language_enumeration;

#[test]
fn language_enumeration_runs() {
    language_enumeration::run_example().unwrap();
}

#[path = "../examples/loop_bound.rs"]
mod loop_bound;

#[test]
fn loop_bound_runs() {
    loop_bound::run_example().unwrap();
}

#[path = "../examples/record_trace.rs"]
mod record_trace;

#[test]
fn record_trace_runs() {
    record_trace::run_example().unwrap();
}

#[path = "../examples/replay_fallback.rs"]
mod replay_fallback;

#[test]
fn replay_fallback_runs() {
    replay_fallback::run_example().unwrap();
}

#[path = "../examples/replay_low_level.rs"]
mod replay_low_level;

#[test]
fn replay_low_level_runs() {
    replay_low_level::run_example().unwrap();
}

#[path = "../examples/summarize_experience.rs"]
mod summarize_experience;

#[test]
fn summarize_experience_runs() {
    summarize_experience::run_example().unwrap();
}

#[path = "../examples/verify_experience.rs"]
mod verify_experience;

#[test]
fn verify_experience_runs() {
    verify_experience::run_example().unwrap();
}
