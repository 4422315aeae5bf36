//! Admission decision logic.
//!
//! Every policy implements [`AdmissionPolicy`]: an arrival-time decision plus
//! dequeue/completion hooks for the metrics it maintains. Policies own their
//! windows, histograms, and RNG stream; the engine owns the queue and passes
//! a read-only [`QueueView`] into decisions.

mod accept_fraction;
mod allowance;
mod bouncer;
mod maxql;
mod maxqwt;
mod underserved;

pub use accept_fraction::{compute_fraction, AcceptFraction};
pub use allowance::AcceptanceAllowance;
pub use bouncer::{estimate_mean_wait, Bouncer, EmptyHistogramAction, ResponseTimeEstimate};
pub use maxql::MaxQueueLength;
pub use maxqwt::{MaxQueueWait, WaitLimit};
pub use underserved::{override_probability, HelpingUnderserved};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::histogram::{self, BucketScheme, HistogramSet};
use crate::time::{SimDuration, SimTime};
use crate::types::{Decision, Query, QueryType, Slo, SloTable, TypeIdx, TypeSet};
use crate::window::{MovingAverage, SlidingWindowCounts};
use crate::workload::{substream, STREAM_POLICY};

/// What a policy sees of the FIFO queue: its length and per-type counts of
/// the queries currently waiting (queries in service are not queued).
#[derive(Clone, Debug)]
pub struct QueueView {
    total: usize,
    per_type: Vec<usize>,
}

impl QueueView {
    pub fn new(type_count: usize) -> Self {
        QueueView {
            total: 0,
            per_type: vec![0; type_count],
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, qtype: TypeIdx) -> usize {
        self.per_type[qtype]
    }

    pub fn type_count(&self) -> usize {
        self.per_type.len()
    }

    pub fn note_enqueue(&mut self, qtype: TypeIdx) {
        self.total += 1;
        self.per_type[qtype] += 1;
    }

    pub fn note_dequeue(&mut self, qtype: TypeIdx) {
        debug_assert!(self.per_type[qtype] > 0);
        self.total -= 1;
        self.per_type[qtype] -= 1;
    }
}

/// Uniform interface over the admission policies. Hooks map to the metric
/// collection points of the processing pipeline: `on_arrival` decides and
/// records decision-time state, `on_dequeue` fires when a query leaves the
/// queue, and `on_complete` fires after processing finishes.
pub trait AdmissionPolicy: Send {
    fn on_arrival(&mut self, q: &Query, qv: &QueueView, now: SimTime) -> Decision;

    fn on_dequeue(&mut self, _q: &Query, _now: SimTime) {}

    fn on_complete(&mut self, _q: &Query, _now: SimTime) {}
}

#[derive(Debug, thiserror::Error)]
#[error("policy config: {0}")]
pub struct PolicyConfigError(pub String);

/// SLO entry as written in scenario files.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SloCfg {
    pub p50: SimDuration,
    pub p90: SimDuration,
}

/// Histogram tuning knobs shared by the SLO-aware policies.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramCfg {
    pub swap_interval: SimDuration,
    pub min_samples_to_swap: u64,
}

impl Default for HistogramCfg {
    fn default() -> Self {
        HistogramCfg {
            swap_interval: histogram::DEFAULT_SWAP_INTERVAL,
            min_samples_to_swap: histogram::DEFAULT_MIN_SAMPLES_TO_SWAP,
        }
    }
}

/// Sliding-window shape for strategies and moving averages.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WindowCfg {
    pub duration: SimDuration,
    pub step: SimDuration,
}

impl WindowCfg {
    /// Strategy default: D = 1s, step = 10ms.
    pub fn strategy_default() -> Self {
        WindowCfg {
            duration: SimDuration::from_secs(1),
            step: SimDuration::from_millis(10),
        }
    }

    /// Moving-average default: D = 60s, step = 1s.
    pub fn mavg_default() -> Self {
        WindowCfg {
            duration: SimDuration::from_secs(60),
            step: SimDuration::from_secs(1),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BouncerCfg {
    pub slos: HashMap<QueryType, SloCfg>,
    #[serde(default)]
    pub empty_histogram_action: EmptyHistogramAction,
    #[serde(default)]
    pub histogram: HistogramCfg,
}

/// Wait-time limit for the queue-wait policy: one global limit, or one per
/// query type with a required "default" entry for unlisted types.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaitLimitCfg {
    Global(SimDuration),
    PerType(HashMap<QueryType, SimDuration>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcceptFractionCfg {
    pub max_util: f64,
    /// Processing units; defaults to the engine's process count.
    #[serde(default)]
    pub processing_units: Option<u32>,
    #[serde(default = "default_update_interval")]
    pub update_interval: SimDuration,
    #[serde(default = "WindowCfg::mavg_default")]
    pub window: WindowCfg,
    #[serde(default)]
    pub enforce_timeout_rejection: bool,
    #[serde(default)]
    pub expiration: Option<SimDuration>,
}

fn default_update_interval() -> SimDuration {
    SimDuration::from_secs(1)
}

/// Tagged configuration for one of the six policies.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    Bouncer(BouncerCfg),
    BouncerAa {
        bouncer: BouncerCfg,
        #[serde(rename = "A")]
        allowance: f64,
        #[serde(default = "WindowCfg::strategy_default")]
        window: WindowCfg,
    },
    BouncerHu {
        bouncer: BouncerCfg,
        alpha: f64,
        #[serde(default = "WindowCfg::strategy_default")]
        window: WindowCfg,
    },
    #[serde(rename = "maxql")]
    MaxQl {
        queue_length_limit: u64,
    },
    #[serde(rename = "maxqwt")]
    MaxQwt {
        wait_time_limit: WaitLimitCfg,
        #[serde(default = "WindowCfg::mavg_default")]
        window: WindowCfg,
    },
    AcceptFraction(AcceptFractionCfg),
}

impl PolicySpec {
    pub fn policy_name(&self) -> &'static str {
        match self {
            PolicySpec::Bouncer(_) | PolicySpec::BouncerAa { .. } | PolicySpec::BouncerHu { .. } => {
                "bouncer"
            }
            PolicySpec::MaxQl { .. } => "maxql",
            PolicySpec::MaxQwt { .. } => "maxqwt",
            PolicySpec::AcceptFraction(_) => "accept_fraction",
        }
    }

    pub fn strategy_name(&self) -> &'static str {
        match self {
            PolicySpec::Bouncer(_) => "basic",
            PolicySpec::BouncerAa { .. } => "acceptance_allowance",
            PolicySpec::BouncerHu { .. } => "helping_underserved",
            _ => "",
        }
    }

    /// Query type names this policy is configured with (SLO table keys,
    /// per-type limit keys). The run's type set is the union of these and
    /// the workload's types.
    pub fn configured_type_names(&self) -> Vec<QueryType> {
        let mut names = match self {
            PolicySpec::Bouncer(b)
            | PolicySpec::BouncerAa { bouncer: b, .. }
            | PolicySpec::BouncerHu { bouncer: b, .. } => b.slos.keys().cloned().collect(),
            PolicySpec::MaxQwt {
                wait_time_limit: WaitLimitCfg::PerType(m),
                ..
            } => m.keys().cloned().collect(),
            _ => Vec::new(),
        };
        names.sort();
        names
    }

    /// Instantiates the policy for one run.
    pub fn build(
        &self,
        types: &TypeSet,
        p: u32,
        seed: u64,
    ) -> Result<Box<dyn AdmissionPolicy>, PolicyConfigError> {
        if p == 0 {
            return Err(PolicyConfigError("P must be at least 1".into()));
        }
        let rng = substream(seed, STREAM_POLICY);
        Ok(match self {
            PolicySpec::Bouncer(cfg) => Box::new(build_bouncer(cfg, types, p)?),
            PolicySpec::BouncerAa {
                bouncer,
                allowance,
                window,
            } => {
                if !(0.0..=1.0).contains(allowance) {
                    return Err(PolicyConfigError(format!(
                        "acceptance allowance A must be in [0, 1], got {allowance}"
                    )));
                }
                Box::new(AcceptanceAllowance::new(
                    build_bouncer(bouncer, types, p)?,
                    *allowance,
                    SlidingWindowCounts::new(window.duration, window.step, types.len()),
                    rng,
                ))
            }
            PolicySpec::BouncerHu {
                bouncer,
                alpha,
                window,
            } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(PolicyConfigError(format!(
                        "scaling factor alpha must be in (0, 1], got {alpha}"
                    )));
                }
                Box::new(HelpingUnderserved::new(
                    build_bouncer(bouncer, types, p)?,
                    *alpha,
                    SlidingWindowCounts::new(window.duration, window.step, types.len()),
                    rng,
                ))
            }
            PolicySpec::MaxQl { queue_length_limit } => {
                if *queue_length_limit == 0 {
                    return Err(PolicyConfigError("queue length limit must be >= 1".into()));
                }
                Box::new(MaxQueueLength::new(*queue_length_limit))
            }
            PolicySpec::MaxQwt {
                wait_time_limit,
                window,
            } => {
                let limit = resolve_wait_limit(wait_time_limit, types)?;
                Box::new(MaxQueueWait::new(
                    limit,
                    p,
                    MovingAverage::new(window.duration, window.step),
                ))
            }
            PolicySpec::AcceptFraction(cfg) => {
                if !(cfg.max_util > 0.0 && cfg.max_util <= 1.0) {
                    return Err(PolicyConfigError(format!(
                        "max_util must be in (0, 1], got {}",
                        cfg.max_util
                    )));
                }
                let pu = cfg.processing_units.unwrap_or(p);
                if pu == 0 {
                    return Err(PolicyConfigError("processing_units must be >= 1".into()));
                }
                if cfg.enforce_timeout_rejection && cfg.expiration.is_none() {
                    return Err(PolicyConfigError(
                        "enforce_timeout_rejection requires an expiration".into(),
                    ));
                }
                Box::new(AcceptFraction::new(
                    cfg.max_util,
                    pu,
                    cfg.update_interval,
                    MovingAverage::new(cfg.window.duration, cfg.window.step),
                    cfg.enforce_timeout_rejection,
                    cfg.expiration,
                    rng,
                ))
            }
        })
    }
}

fn build_bouncer(
    cfg: &BouncerCfg,
    types: &TypeSet,
    p: u32,
) -> Result<Bouncer, PolicyConfigError> {
    let mut entries = HashMap::new();
    for (name, slo) in &cfg.slos {
        let slo = Slo::new(slo.p50, slo.p90)
            .map_err(|e| PolicyConfigError(format!("SLO for '{name}': {e}")))?;
        entries.insert(name.clone(), slo);
    }
    let table = SloTable::new(entries).map_err(PolicyConfigError)?;
    let hists = HistogramSet::new(
        types.len(),
        BucketScheme::default(),
        cfg.histogram.swap_interval,
        cfg.histogram.min_samples_to_swap,
    );
    Ok(Bouncer::new(
        &table,
        types,
        p,
        hists,
        cfg.empty_histogram_action,
    ))
}

fn resolve_wait_limit(
    cfg: &WaitLimitCfg,
    types: &TypeSet,
) -> Result<WaitLimit, PolicyConfigError> {
    match cfg {
        WaitLimitCfg::Global(d) => {
            if d.is_zero() {
                return Err(PolicyConfigError("wait time limit must be positive".into()));
            }
            Ok(WaitLimit::Global(*d))
        }
        WaitLimitCfg::PerType(map) => {
            let default = *map.get(&QueryType::new("default")).ok_or_else(|| {
                PolicyConfigError(
                    "per-type wait limits require a 'default' entry for unlisted types".into(),
                )
            })?;
            let mut limits = vec![default; types.len()];
            for (name, d) in map {
                if d.is_zero() {
                    return Err(PolicyConfigError(format!(
                        "wait time limit for '{name}' must be positive"
                    )));
                }
                if let Some(idx) = types.resolve(name.name()) {
                    limits[idx] = *d;
                }
            }
            Ok(WaitLimit::PerType(limits))
        }
    }
}
