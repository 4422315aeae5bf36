//! Domain types shared by every other module: query types, query lifecycle
//! records, latency SLOs, and admission decisions.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

/// Name of the catch-all query type. Every SLO table carries an entry for it
/// and lookups of unconfigured types resolve to it.
pub const DEFAULT_TYPE: &str = "default";

/// A short string tag identifying a class of queries (e.g. "fast", "slow").
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryType(Arc<str>);

impl Serialize for QueryType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for QueryType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(QueryType::new(String::deserialize(deserializer)?))
    }
}

impl QueryType {
    pub fn new(name: impl AsRef<str>) -> Self {
        QueryType(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_default(&self) -> bool {
        &*self.0 == DEFAULT_TYPE
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QueryType({})", self.0)
    }
}

impl From<&str> for QueryType {
    fn from(s: &str) -> Self {
        QueryType::new(s)
    }
}

/// Index of a query type within a run's [`TypeSet`]. Dense indices keep the
/// per-decision bookkeeping on vectors instead of string-keyed maps.
pub type TypeIdx = usize;

/// The set of query types one run knows about, in a fixed, deterministic
/// order. The "default" type is always a member.
#[derive(Clone, Debug)]
pub struct TypeSet {
    names: Vec<QueryType>,
    by_name: HashMap<QueryType, TypeIdx>,
    default_idx: TypeIdx,
}

impl TypeSet {
    /// Builds the set from names in declaration order, appending "default"
    /// if absent. Duplicate names are rejected.
    pub fn new<I, T>(names: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = T>,
        T: Into<QueryType>,
    {
        let mut set = TypeSet {
            names: Vec::new(),
            by_name: HashMap::new(),
            default_idx: 0,
        };
        for name in names {
            let qt: QueryType = name.into();
            if qt.name().is_empty() {
                return Err("query type names must be non-empty".into());
            }
            if set.by_name.contains_key(&qt) {
                return Err(format!("duplicate query type '{qt}'"));
            }
            set.by_name.insert(qt.clone(), set.names.len());
            set.names.push(qt);
        }
        let default = QueryType::new(DEFAULT_TYPE);
        set.default_idx = match set.by_name.get(&default) {
            Some(&i) => i,
            None => {
                set.by_name.insert(default.clone(), set.names.len());
                set.names.push(default);
                set.names.len() - 1
            }
        };
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: TypeIdx) -> &QueryType {
        &self.names[idx]
    }

    pub fn resolve(&self, name: &str) -> Option<TypeIdx> {
        self.by_name.get(&QueryType::new(name)).copied()
    }

    pub fn default_idx(&self) -> TypeIdx {
        self.default_idx
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeIdx, &QueryType)> {
        self.names.iter().enumerate()
    }
}

/// Latency objective on percentile response times of serviced queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slo {
    pub p50_target: SimDuration,
    pub p90_target: SimDuration,
}

impl Slo {
    pub fn new(p50_target: SimDuration, p90_target: SimDuration) -> Result<Self, String> {
        if p50_target.is_zero() || p50_target > p90_target {
            return Err(format!(
                "SLO requires 0 < p50 <= p90, got p50={p50_target} p90={p90_target}"
            ));
        }
        Ok(Slo {
            p50_target,
            p90_target,
        })
    }
}

/// Per-type SLO assignments. Lookup of an unconfigured type returns the
/// "default" entry, never fails.
#[derive(Clone, Debug)]
pub struct SloTable {
    entries: HashMap<QueryType, Slo>,
    default: Slo,
}

impl SloTable {
    pub fn new(entries: HashMap<QueryType, Slo>) -> Result<Self, String> {
        let default = *entries
            .get(&QueryType::new(DEFAULT_TYPE))
            .ok_or_else(|| format!("SLO table is missing the required '{DEFAULT_TYPE}' entry"))?;
        Ok(SloTable { entries, default })
    }

    pub fn lookup(&self, qtype: &QueryType) -> Slo {
        self.entries.get(qtype).copied().unwrap_or(self.default)
    }

    pub fn default_slo(&self) -> Slo {
        self.default
    }

    /// Configured type names, in sorted order for determinism.
    pub fn configured_types(&self) -> Vec<QueryType> {
        let mut names: Vec<_> = self.entries.keys().cloned().collect();
        names.sort();
        names
    }
}

/// Why an admission verdict was reached. Labels which rule fired so reports
/// can break rejections down by cause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    SloEstimateExceeded,
    QueueFull,
    WaitLimitExceeded,
    FractionDrop,
    ExpectedTimeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptReason {
    /// Plain acceptance; no override rule was involved.
    None,
    AllowanceOverride,
    UnderservedOverride,
    EmptyHistogramLeniency,
}

/// An admission verdict. The enum shape guarantees the reason matches the
/// verdict: accepts carry accept reasons, rejects carry reject reasons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept(AcceptReason),
    Reject(RejectReason),
}

impl Decision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept(_))
    }
}

/// Final disposition of a query, written exactly once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected(RejectReason),
}

/// One simulated request: type tag, lifecycle timestamps, the pre-drawn
/// processing time it will consume on a server, and its outcome.
#[derive(Clone, Debug)]
pub struct Query {
    pub id: u64,
    pub qtype: TypeIdx,
    pub t_arrival: SimTime,
    pub t_enqueued: Option<SimTime>,
    pub t_dequeued: Option<SimTime>,
    pub t_completed: Option<SimTime>,
    pub service_demand: SimDuration,
    outcome: Option<Outcome>,
}

/// A query operation was attempted before its lifecycle reached the
/// required point; signals a bug in the simulation engine.
#[derive(Debug, thiserror::Error)]
#[error("query {id}: {missing} timestamp missing or query not accepted")]
pub struct LifecycleError {
    pub id: u64,
    pub missing: &'static str,
}

impl Query {
    pub fn new(id: u64, qtype: TypeIdx, t_arrival: SimTime, service_demand: SimDuration) -> Self {
        Query {
            id,
            qtype,
            t_arrival,
            t_enqueued: None,
            t_dequeued: None,
            t_completed: None,
            service_demand,
            outcome: None,
        }
    }

    /// Records the admission outcome. Panics on a second write; the outcome
    /// is written exactly once per query.
    pub fn set_outcome(&mut self, outcome: Outcome) {
        assert!(
            self.outcome.is_none(),
            "outcome written twice for query {}",
            self.id
        );
        self.outcome = Some(outcome);
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Queue wait time: dequeue minus enqueue.
    pub fn wait_time(&self) -> Result<SimDuration, LifecycleError> {
        match (self.t_enqueued, self.t_dequeued) {
            (Some(e), Some(d)) => Ok(d - e),
            _ => Err(LifecycleError {
                id: self.id,
                missing: "enqueue/dequeue",
            }),
        }
    }

    /// Processing time: completion minus dequeue. Equals the pre-drawn
    /// service demand exactly.
    pub fn processing_time(&self) -> Result<SimDuration, LifecycleError> {
        match (self.t_dequeued, self.t_completed) {
            (Some(d), Some(c)) => Ok(c - d),
            _ => Err(LifecycleError {
                id: self.id,
                missing: "dequeue/completion",
            }),
        }
    }

    /// Response time of a completed, accepted query: wait plus processing,
    /// with no additional host time.
    pub fn response_time(&self) -> Result<SimDuration, LifecycleError> {
        if self.outcome != Some(Outcome::Accepted) {
            return Err(LifecycleError {
                id: self.id,
                missing: "accepted outcome",
            });
        }
        Ok(self.wait_time()? + self.processing_time()?)
    }
}
