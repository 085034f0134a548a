//! M/G/1 scheduling with job size estimates.
//!
//! A single-server preemptive queue where the scheduler sees, for each job,
//! an estimate `z` of its true size `s` with `z` guaranteed to lie in
//! `[beta * s, alpha * s]`. The crate provides:
//!
//! - [`dist`]: size distributions and joint (size, estimate) models;
//! - [`policy`]: the rank functions defining each scheduling discipline;
//! - [`sim`]: an exact discrete-event simulator for those disciplines;
//! - [`work`]: predicate-restricted work measures and the work-integral
//!   route to mean response time;
//! - [`soap`]: the analytic evaluator (load profiles, tagged-job waiting
//!   and residence formulas, and the closed-form performance bounds);
//! - [`cli`]: experiment configuration, scenario presets, and CSV/JSON
//!   output for the command-line runner.
//!
//! The guide under `book/` walks through the model and each component; its
//! code listings are compiled and run as doc-tests via [`guide`].

pub mod cli;
pub mod dist;
pub mod policy;
pub mod quad;
pub mod sim;
pub mod soap;
pub mod stats;
pub mod work;

pub mod guide;

pub use dist::{EstimateModel, JointSizeModel, SizeDistribution};
pub use policy::{JobState, Policy};
pub use sim::{RunSummary, SimConfig};
pub use soap::AnalyticContext;
pub use work::WorkPredicate;
