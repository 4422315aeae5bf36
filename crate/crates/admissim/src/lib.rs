//! Discrete-event simulation toolkit for studying admission control under
//! overload.
//!
//! The toolkit models a serving host — arrivals, an admission policy, a FIFO
//! queue, and P parallel query engine processes — and ships six policies:
//! an SLO-aware policy ("bouncer") that estimates percentile response times
//! per query, its two starvation-avoidance variants (acceptance allowance
//! and helping-the-underserved), and three baselines (maximum queue length,
//! maximum queue wait time, acceptance fraction). Experiments are described
//! by declarative scenario files and produce per-type rejection, response
//! time, and utilization reports.

pub mod engine;
pub mod histogram;
pub mod policy;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod types;
pub mod window;
pub mod workload;

pub use time::{SimDuration, SimTime};
pub use types::{Decision, Outcome, Query, QueryType, Slo, SloTable, TypeSet};
