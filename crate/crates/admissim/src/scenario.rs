//! Declarative experiment input: scenario files, their validation, and the
//! expansion of sweep axes into concrete run points.
//!
//! Scenario files are JSON with durations written as strings carrying
//! explicit units ("18ms", "50ms"), which keeps configs diffable and unit
//! bugs out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::policy::{PolicySpec, WaitLimitCfg};
use crate::time::SimDuration;
use crate::types::{QueryType, TypeSet};
use crate::workload::{full_load_qps, ArrivalProcess, QueryTypeSpec, WorkloadSpec};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario validation: {0}")]
    Validation(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkloadCfg {
    pub types: Vec<QueryTypeSpec>,
    pub rate: RateCfg,
    #[serde(default = "default_arrival")]
    pub arrival: ArrivalProcess,
}

fn default_arrival() -> ArrivalProcess {
    ArrivalProcess::Poisson
}

/// Either an absolute rate or a multiple of the rate that fully utilizes
/// the P engine processes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateCfg {
    Qps(f64),
    FullLoadFactor(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WarmupCfg {
    pub queries: u64,
    pub min_time: SimDuration,
}

impl Default for WarmupCfg {
    fn default() -> Self {
        WarmupCfg {
            queries: 100_000,
            min_time: SimDuration::from_secs(10),
        }
    }
}

/// A named per-type wait-limit assignment for wait-limit sweeps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedLimitSet {
    pub name: String,
    pub limits: WaitLimitCfg,
}

/// Sweep axis: the scenario is run once per axis value, each value run once
/// per seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    QpsFactor(Vec<f64>),
    Allowance(Vec<f64>),
    Alpha(Vec<f64>),
    WaitLimitSets(Vec<NamedLimitSet>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(rename = "P")]
    pub p: u32,
    pub workload: WorkloadCfg,
    pub policy: PolicySpec,
    pub query_count: u64,
    #[serde(default)]
    pub warmup: WarmupCfg,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub queue_cap: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
}

/// One concrete run point after axis expansion.
#[derive(Clone, Debug)]
pub struct RunPoint {
    pub label: String,
    pub qps_factor: f64,
    pub workload: WorkloadSpec,
    pub policy: PolicySpec,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// The run's query type universe: workload types in declared order, then
    /// policy-configured types, then "default".
    pub fn type_set(&self) -> Result<TypeSet, ScenarioError> {
        let mut names: Vec<QueryType> = self.workload.types.iter().map(|t| t.name.clone()).collect();
        for extra in self.policy.configured_type_names() {
            if !names.contains(&extra) {
                names.push(extra);
            }
        }
        TypeSet::new(names).map_err(ScenarioError::Validation)
    }

    fn base_workload(&self, rate_qps: f64) -> WorkloadSpec {
        WorkloadSpec {
            types: self.workload.types.clone(),
            rate_qps,
            arrival: self.workload.arrival,
        }
    }

    /// Resolves the configured rate for a factor multiplier.
    fn rate_for_factor(&self, factor: f64) -> Result<f64, ScenarioError> {
        let probe = self.base_workload(1.0);
        let full = full_load_qps(&probe, self.p).map_err(|e| ScenarioError::Validation(e.to_string()))?;
        Ok(factor * full)
    }

    /// The base (factor, rate) pair when no qps sweep applies.
    fn base_rate(&self) -> Result<(f64, f64), ScenarioError> {
        match self.workload.rate {
            RateCfg::Qps(qps) => {
                let probe = self.base_workload(1.0);
                let full = full_load_qps(&probe, self.p)
                    .map_err(|e| ScenarioError::Validation(e.to_string()))?;
                Ok((qps / full, qps))
            }
            RateCfg::FullLoadFactor(f) => Ok((f, self.rate_for_factor(f)?)),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() {
            return Err(ScenarioError::Validation("scenario name is empty".into()));
        }
        if self.p == 0 {
            return Err(ScenarioError::Validation("P must be at least 1".into()));
        }
        if self.query_count == 0 {
            return Err(ScenarioError::Validation("query_count must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(ScenarioError::Validation("at least one seed required".into()));
        }
        let types = self.type_set()?;
        let (_, base_rate) = self.base_rate()?;
        self.base_workload(base_rate)
            .validate()
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        // Policy parameters are validated by building against the type set.
        self.policy
            .build(&types, self.p, 0)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;

        match &self.sweep {
            None => {}
            Some(SweepAxis::QpsFactor(factors)) => {
                if factors.is_empty() {
                    return Err(ScenarioError::Validation("empty qps_factor axis".into()));
                }
                if !matches!(self.workload.rate, RateCfg::FullLoadFactor(_)) {
                    return Err(ScenarioError::Validation(
                        "qps_factor sweep requires rate.full_load_factor".into(),
                    ));
                }
                if factors.iter().any(|f| !(*f > 0.0)) {
                    return Err(ScenarioError::Validation(
                        "qps factors must be positive".into(),
                    ));
                }
            }
            Some(SweepAxis::Allowance(values)) => {
                if !matches!(self.policy, PolicySpec::BouncerAa { .. }) {
                    return Err(ScenarioError::Validation(
                        "allowance sweep requires the bouncer_aa policy".into(),
                    ));
                }
                if values.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(ScenarioError::Validation(
                        "allowance values must be in [0, 1]".into(),
                    ));
                }
            }
            Some(SweepAxis::Alpha(values)) => {
                if !matches!(self.policy, PolicySpec::BouncerHu { .. }) {
                    return Err(ScenarioError::Validation(
                        "alpha sweep requires the bouncer_hu policy".into(),
                    ));
                }
                if values.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
                    return Err(ScenarioError::Validation(
                        "alpha values must be in (0, 1]".into(),
                    ));
                }
            }
            Some(SweepAxis::WaitLimitSets(sets)) => {
                if !matches!(self.policy, PolicySpec::MaxQwt { .. }) {
                    return Err(ScenarioError::Validation(
                        "wait-limit sweep requires the maxqwt policy".into(),
                    ));
                }
                if sets.is_empty() {
                    return Err(ScenarioError::Validation("empty wait-limit axis".into()));
                }
                for set in sets {
                    let mut probe = self.clone();
                    probe.policy = PolicySpec::MaxQwt {
                        wait_time_limit: set.limits.clone(),
                        window: crate::policy::WindowCfg::mavg_default(),
                    };
                    probe.policy.build(&types, self.p, 0).map_err(|e| {
                        ScenarioError::Validation(format!("limit set '{}': {e}", set.name))
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Expands the sweep axis (or the single base point) into run points.
    pub fn run_points(&self) -> Result<Vec<RunPoint>, ScenarioError> {
        let (base_factor, base_rate) = self.base_rate()?;
        let mut points = Vec::new();
        match &self.sweep {
            None => points.push(RunPoint {
                label: "baseline".into(),
                qps_factor: base_factor,
                workload: self.base_workload(base_rate),
                policy: self.policy.clone(),
            }),
            Some(SweepAxis::QpsFactor(factors)) => {
                for &f in factors {
                    points.push(RunPoint {
                        label: format!("qps_factor={f}"),
                        qps_factor: f,
                        workload: self.base_workload(self.rate_for_factor(f)?),
                        policy: self.policy.clone(),
                    });
                }
            }
            Some(SweepAxis::Allowance(values)) => {
                for &a in values {
                    let mut policy = self.policy.clone();
                    if let PolicySpec::BouncerAa { allowance, .. } = &mut policy {
                        *allowance = a;
                    }
                    points.push(RunPoint {
                        label: format!("A={a}"),
                        qps_factor: base_factor,
                        workload: self.base_workload(base_rate),
                        policy,
                    });
                }
            }
            Some(SweepAxis::Alpha(values)) => {
                for &a in values {
                    let mut policy = self.policy.clone();
                    if let PolicySpec::BouncerHu { alpha, .. } = &mut policy {
                        *alpha = a;
                    }
                    points.push(RunPoint {
                        label: format!("alpha={a}"),
                        qps_factor: base_factor,
                        workload: self.base_workload(base_rate),
                        policy,
                    });
                }
            }
            Some(SweepAxis::WaitLimitSets(sets)) => {
                for set in sets {
                    let mut policy = self.policy.clone();
                    if let PolicySpec::MaxQwt {
                        wait_time_limit, ..
                    } = &mut policy
                    {
                        *wait_time_limit = set.limits.clone();
                    }
                    points.push(RunPoint {
                        label: format!("limits={}", set.name),
                        qps_factor: base_factor,
                        workload: self.base_workload(base_rate),
                        policy,
                    });
                }
            }
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "name": "demo",
            "P": 4,
            "workload": {
                "rate": { "qps": 100.0 },
                "types": [
                    { "name": "only", "proportion": 1.0,
                      "dist": { "constant": { "value": "5ms" } } }
                ]
            },
            "policy": { "maxql": { "queue_length_limit": 10 } },
            "query_count": 1000,
            "warmup": { "queries": 0, "min_time": "0s" },
            "seeds": [1]
        })
    }

    #[test]
    fn parses_and_validates_minimal_scenario() {
        let s: Scenario = serde_json::from_value(minimal_json()).unwrap();
        s.validate().unwrap();
        let points = s.run_points().unwrap();
        assert_eq!(points.len(), 1);
        assert!((points[0].workload.rate_qps - 100.0).abs() < 1e-9);
        // Full load for constant 5ms x 4 processes = 800 qps; factor 0.125.
        assert!((points[0].qps_factor - 0.125).abs() < 1e-9);
    }

    #[test]
    fn missing_default_slo_names_the_key() {
        let mut v = minimal_json();
        v["policy"] = serde_json::json!({
            "bouncer": { "slos": { "fast": { "p50": "18ms", "p90": "50ms" } } }
        });
        let s: Scenario = serde_json::from_value(v).unwrap();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("default"), "error was: {err}");
    }

    #[test]
    fn proportions_must_sum() {
        let mut v = minimal_json();
        v["workload"]["types"][0]["proportion"] = serde_json::json!(0.9);
        let s: Scenario = serde_json::from_value(v).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn qps_sweep_requires_factor_rate() {
        let mut v = minimal_json();
        v["sweep"] = serde_json::json!({ "qps_factor": [1.0, 1.1] });
        let s: Scenario = serde_json::from_value(v.clone()).unwrap();
        assert!(s.validate().is_err());

        v["workload"]["rate"] = serde_json::json!({ "full_load_factor": 1.0 });
        let s: Scenario = serde_json::from_value(v).unwrap();
        s.validate().unwrap();
        let pts = s.run_points().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].label, "qps_factor=1");
        // factor 1.1 of 800 qps full load
        assert!((pts[1].workload.rate_qps - 880.0).abs() < 1e-9);
    }

    #[test]
    fn axis_point_expansion_for_parameters() {
        let mut v = minimal_json();
        v["policy"] = serde_json::json!({
            "bouncer_aa": {
                "bouncer": { "slos": { "default": { "p50": "18ms", "p90": "50ms" } } },
                "A": 0.05
            }
        });
        v["sweep"] = serde_json::json!({ "allowance": [0.01, 0.1, 0.3] });
        let s: Scenario = serde_json::from_value(v).unwrap();
        s.validate().unwrap();
        let pts = s.run_points().unwrap();
        assert_eq!(pts.len(), 3);
        match &pts[2].policy {
            PolicySpec::BouncerAa { allowance, .. } => assert_eq!(*allowance, 0.3),
            other => panic!("unexpected policy {other:?}"),
        }
    }

    #[test]
    fn type_set_unions_workload_and_policy_types() {
        let mut v = minimal_json();
        v["policy"] = serde_json::json!({
            "bouncer": { "slos": {
                "default": { "p50": "18ms", "p90": "50ms" },
                "premium": { "p50": "5ms", "p90": "20ms" }
            } }
        });
        let s: Scenario = serde_json::from_value(v).unwrap();
        let types = s.type_set().unwrap();
        assert_eq!(types.len(), 3); // only, premium, default
        assert!(types.resolve("premium").is_some());
    }
}
