//! Record user demonstrations against a simulated world, summarize them into
//! two-level experiences guarded by check functions, and replay new tasks
//! under a runtime reference monitor.
//!
//! The pipeline is: [`recorder::record`] a [`sts::Trace`],
//! [`summarizer::summarize`] one or more traces into an
//! [`experience::Experience`], audit it with [`verifier::verify_experience`],
//! persist it in a [`store`], and execute tasks with [`replayer::replay`].

pub mod demo;
pub mod experience;
pub mod monitor;
pub mod recorder;
pub mod sim;
pub mod sts;
pub mod summarizer;
pub mod replayer;
pub mod store;
pub mod verifier;
