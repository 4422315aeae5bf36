//! Workload generation: query mixes, service-demand distributions,
//! exponential inter-arrival times, and full-load rate arithmetic.
//!
//! Generation is deterministic per seed. The generator runs independent
//! ChaCha sub-streams for inter-arrival gaps, type selection, and service
//! demands, so consumers drawing from their own streams (e.g. policy coin
//! flips) never perturb the workload. Arrival gaps are drawn as unit
//! exponentials and scaled by the configured rate, which keeps the arrival
//! pattern of a seed comparable across rate factors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};
use crate::types::{Query, QueryType, TypeSet};

/// Standard-normal 90th percentile, used to cross-check lognormal fits.
const Z_P90: f64 = 1.2815515655446004;

/// RNG sub-stream identifiers. Policies use [`STREAM_POLICY`]; the generator
/// owns the first three.
pub const STREAM_ARRIVALS: u64 = 0;
pub const STREAM_TYPE_SELECT: u64 = 1;
pub const STREAM_DEMANDS: u64 = 2;
pub const STREAM_POLICY: u64 = 3;

/// A seeded RNG on an independent sub-stream of the run seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Service-demand distribution for one query type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceDist {
    /// Lognormal with explicit parameters (times in seconds).
    Lognormal { mu: f64, sigma: f64 },
    /// Lognormal fitted from a mean and median.
    FromStats { mean: SimDuration, p50: SimDuration },
    /// Exponential with the given rate per second. Test workloads only.
    Exponential { rate: f64 },
    /// Fixed demand. Test workloads only.
    Constant { value: SimDuration },
}

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("lognormal fit requires mean > p50 > 0, got mean={mean} p50={p50}")]
    Fit { mean: SimDuration, p50: SimDuration },
    #[error("invalid workload: {0}")]
    Invalid(String),
}

/// Parameters of the unique lognormal matching a given median and mean:
/// `mu = ln(p50)`, `sigma = sqrt(2 (ln mean - ln p50))`.
#[derive(Clone, Copy, Debug)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
}

impl LognormalFit {
    /// The p90 implied by the fit, for consistency checks against an
    /// independently known p90.
    pub fn implied_p90(&self) -> SimDuration {
        SimDuration::from_secs_f64((self.mu + Z_P90 * self.sigma).exp())
    }

    pub fn mean(&self) -> SimDuration {
        SimDuration::from_secs_f64((self.mu + self.sigma * self.sigma / 2.0).exp())
    }
}

pub fn fit_lognormal(mean: SimDuration, p50: SimDuration) -> Result<LognormalFit, WorkloadError> {
    if p50.is_zero() || mean <= p50 {
        return Err(WorkloadError::Fit { mean, p50 });
    }
    let mean_s = mean.as_secs_f64();
    let p50_s = p50.as_secs_f64();
    Ok(LognormalFit {
        mu: p50_s.ln(),
        sigma: (2.0 * (mean_s.ln() - p50_s.ln())).sqrt(),
    })
}

impl ServiceDist {
    /// Analytic mean of the distribution, in seconds.
    pub fn mean_secs(&self) -> Result<f64, WorkloadError> {
        Ok(match self {
            ServiceDist::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            ServiceDist::FromStats { mean, .. } => {
                // Validate the fit even though the mean is given directly.
                let _ = self.fit()?;
                mean.as_secs_f64()
            }
            ServiceDist::Exponential { rate } => 1.0 / rate,
            ServiceDist::Constant { value } => value.as_secs_f64(),
        })
    }

    fn fit(&self) -> Result<Option<LognormalFit>, WorkloadError> {
        Ok(match self {
            ServiceDist::Lognormal { mu, sigma } => Some(LognormalFit {
                mu: *mu,
                sigma: *sigma,
            }),
            ServiceDist::FromStats { mean, p50 } => Some(fit_lognormal(*mean, *p50)?),
            _ => None,
        })
    }
}

/// One query type's share of the mix and its demand distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryTypeSpec {
    pub name: QueryType,
    pub proportion: f64,
    pub dist: ServiceDist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival gaps (bursty open-loop traffic).
    Poisson,
    /// Fixed gaps of 1/rate. Test workloads only.
    Constant,
}

/// The traffic one run generates.
#[derive(Clone, Debug)]
pub struct WorkloadSpec {
    pub types: Vec<QueryTypeSpec>,
    pub rate_qps: f64,
    pub arrival: ArrivalProcess,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.types.is_empty() {
            return Err(WorkloadError::Invalid("no query types".into()));
        }
        if !(self.rate_qps > 0.0) {
            return Err(WorkloadError::Invalid(format!(
                "rate_qps must be positive, got {}",
                self.rate_qps
            )));
        }
        let sum: f64 = self.types.iter().map(|t| t.proportion).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::Invalid(format!(
                "query mix proportions sum to {sum}, expected 1"
            )));
        }
        for t in &self.types {
            if t.proportion < 0.0 {
                return Err(WorkloadError::Invalid(format!(
                    "negative proportion for '{}'",
                    t.name
                )));
            }
            if let ServiceDist::Lognormal { sigma, .. } = t.dist {
                if sigma <= 0.0 {
                    return Err(WorkloadError::Invalid(format!(
                        "lognormal sigma must be positive for '{}'",
                        t.name
                    )));
                }
            }
            t.dist.mean_secs()?;
        }
        Ok(())
    }

    /// Weighted mean processing time of the mix, in seconds.
    pub fn pt_wmean_secs(&self) -> Result<f64, WorkloadError> {
        let mut acc = 0.0;
        for t in &self.types {
            acc += t.proportion * t.dist.mean_secs()?;
        }
        Ok(acc)
    }
}

/// The arrival rate that fully utilizes `p` query engine processes:
/// `p / pt_wmean`.
pub fn full_load_qps(spec: &WorkloadSpec, p: u32) -> Result<f64, WorkloadError> {
    Ok(p as f64 / spec.pt_wmean_secs()?)
}

enum Sampler {
    LogNormal(LogNormal<f64>),
    Exponential { rate: f64 },
    Constant(SimDuration),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> SimDuration {
        match self {
            Sampler::LogNormal(d) => {
                let secs = d.sample(rng);
                // Lognormal support is (0, inf); clamp below to 1ns.
                SimDuration::from_nanos(((secs * 1e9).round() as u64).max(1))
            }
            Sampler::Exponential { rate } => {
                let unit: f64 = rng.sample(Exp1);
                SimDuration::from_nanos(((unit / rate * 1e9).round() as u64).max(1))
            }
            Sampler::Constant(d) => *d,
        }
    }
}

/// Deterministic stream of queries with strictly increasing arrival times
/// and sequential ids starting at 0.
pub struct Generator {
    arrival: ArrivalProcess,
    rate: f64,
    cumulative: Vec<f64>,
    type_indices: Vec<usize>,
    samplers: Vec<Sampler>,
    arrivals_rng: ChaCha8Rng,
    select_rng: ChaCha8Rng,
    demand_rng: ChaCha8Rng,
    next_id: u64,
    remaining: u64,
    clock_nanos: u64,
    started: bool,
}

impl Generator {
    pub fn new(
        spec: &WorkloadSpec,
        types: &TypeSet,
        count: u64,
        seed: u64,
    ) -> Result<Self, WorkloadError> {
        spec.validate()?;
        let mut cumulative = Vec::with_capacity(spec.types.len());
        let mut type_indices = Vec::with_capacity(spec.types.len());
        let mut samplers = Vec::with_capacity(spec.types.len());
        let mut acc = 0.0;
        for t in &spec.types {
            acc += t.proportion;
            cumulative.push(acc);
            type_indices.push(types.resolve(t.name.name()).ok_or_else(|| {
                WorkloadError::Invalid(format!("query type '{}' not in type set", t.name))
            })?);
            samplers.push(match t.dist.fit()? {
                Some(f) => Sampler::LogNormal(
                    LogNormal::new(f.mu, f.sigma)
                        .map_err(|e| WorkloadError::Invalid(e.to_string()))?,
                ),
                None => match &t.dist {
                    ServiceDist::Exponential { rate } => Sampler::Exponential { rate: *rate },
                    ServiceDist::Constant { value } => Sampler::Constant(*value),
                    _ => unreachable!(),
                },
            });
        }
        *cumulative.last_mut().unwrap() = f64::INFINITY;
        Ok(Generator {
            arrival: spec.arrival,
            rate: spec.rate_qps,
            cumulative,
            type_indices,
            samplers,
            arrivals_rng: substream(seed, STREAM_ARRIVALS),
            select_rng: substream(seed, STREAM_TYPE_SELECT),
            demand_rng: substream(seed, STREAM_DEMANDS),
            next_id: 0,
            remaining: count,
            clock_nanos: 0,
            started: false,
        })
    }

    fn next_gap_nanos(&mut self) -> u64 {
        let unit: f64 = match self.arrival {
            ArrivalProcess::Poisson => self.arrivals_rng.sample(Exp1),
            ArrivalProcess::Constant => 1.0,
        };
        (unit / self.rate * 1e9).round() as u64
    }
}

impl Iterator for Generator {
    type Item = Query;

    fn next(&mut self) -> Option<Query> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;

        let gap = self.next_gap_nanos();
        let t = if self.started {
            // Ties collapse to +1ns so arrival order is total.
            self.clock_nanos + gap.max(1)
        } else {
            self.started = true;
            gap
        };
        self.clock_nanos = t;

        let u: f64 = self.select_rng.random();
        let mix_slot = self.cumulative.partition_point(|&c| c <= u);
        let qtype = self.type_indices[mix_slot];
        let demand = self.samplers[mix_slot].sample(&mut self.demand_rng);

        let id = self.next_id;
        self.next_id += 1;
        Some(Query::new(id, qtype, SimTime::from_nanos(t), demand))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{BucketScheme, Histogram};

    fn ms(v: f64) -> SimDuration {
        SimDuration::from_nanos((v * 1e6).round() as u64)
    }

    /// The four-type mix used by the standard scenarios.
    pub(crate) fn standard_mix() -> Vec<QueryTypeSpec> {
        let entry = |name: &str, prop: f64, mean: f64, p50: f64| QueryTypeSpec {
            name: QueryType::new(name),
            proportion: prop,
            dist: ServiceDist::FromStats {
                mean: ms(mean),
                p50: ms(p50),
            },
        };
        vec![
            entry("fast", 0.40, 1.16, 0.38),
            entry("medium_fast", 0.20, 2.53, 2.22),
            entry("medium_slow", 0.30, 12.13, 7.40),
            entry("slow", 0.10, 20.05, 12.51),
        ]
    }

    fn standard_spec(rate: f64) -> WorkloadSpec {
        WorkloadSpec {
            types: standard_mix(),
            rate_qps: rate,
            arrival: ArrivalProcess::Poisson,
        }
    }

    #[test]
    fn fit_slow_type() {
        let f = fit_lognormal(ms(20.05), ms(12.51)).unwrap();
        assert!((f.mu - (0.01251f64).ln()).abs() < 1e-9);
        assert!((f.sigma - 0.971).abs() < 0.001, "sigma={}", f.sigma);
        // Implied p90 must land within 5% of the independently known p90.
        let p90 = f.implied_p90().as_secs_f64();
        assert!((p90 - 0.04426).abs() / 0.04426 < 0.05, "p90={p90}");
    }

    #[test]
    fn fit_fast_type() {
        let f = fit_lognormal(ms(1.16), ms(0.38)).unwrap();
        assert!((f.sigma - 1.494).abs() < 0.001, "sigma={}", f.sigma);
        let p90 = f.implied_p90().as_secs_f64();
        assert!((p90 - 0.00270).abs() / 0.00270 < 0.05, "p90={p90}");
        assert!((f.mean().as_secs_f64() - 0.00116).abs() / 0.00116 < 1e-6);
    }

    #[test]
    fn fit_degenerate_errors() {
        assert!(fit_lognormal(ms(5.0), ms(5.0)).is_err());
        assert!(fit_lognormal(ms(4.0), ms(5.0)).is_err());
    }

    #[test]
    fn weighted_mean_of_standard_mix() {
        let spec = standard_spec(1000.0);
        let wmean = spec.pt_wmean_secs().unwrap();
        assert!((wmean - 0.006614).abs() < 1e-12, "wmean={wmean}");
    }

    #[test]
    fn full_load_examples() {
        let spec = standard_spec(1000.0);
        let qps = full_load_qps(&spec, 100).unwrap();
        assert!((qps - 15119.4).abs() < 0.1, "qps={qps}");

        let single = WorkloadSpec {
            types: vec![QueryTypeSpec {
                name: QueryType::new("only"),
                proportion: 1.0,
                dist: ServiceDist::Constant { value: ms(10.0) },
            }],
            rate_qps: 1.0,
            arrival: ArrivalProcess::Constant,
        };
        assert!((full_load_qps(&single, 1).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn constant_arrivals_at_10_qps() {
        let spec = WorkloadSpec {
            types: vec![QueryTypeSpec {
                name: QueryType::new("only"),
                proportion: 1.0,
                dist: ServiceDist::Constant { value: ms(1.0) },
            }],
            rate_qps: 10.0,
            arrival: ArrivalProcess::Constant,
        };
        let types = TypeSet::new(["only"]).unwrap();
        let arrivals: Vec<u64> = Generator::new(&spec, &types, 3, 7)
            .unwrap()
            .map(|q| q.t_arrival.as_nanos())
            .collect();
        assert_eq!(arrivals, vec![100_000_000, 200_000_000, 300_000_000]);
    }

    #[test]
    fn mix_proportions_within_tolerance() {
        let spec = standard_spec(15119.0);
        let types = TypeSet::new(["fast", "medium_fast", "medium_slow", "slow"]).unwrap();
        let mut counts = [0u64; 5];
        let n = 1_500_000u64;
        for q in Generator::new(&spec, &types, n, 42).unwrap() {
            counts[q.qtype] += 1;
        }
        let expected = [0.40, 0.20, 0.30, 0.10];
        for (i, &e) in expected.iter().enumerate() {
            let got = counts[i] as f64 / n as f64;
            assert!((got - e).abs() < 0.002, "type {i}: {got} vs {e}");
        }
    }

    #[test]
    fn slow_demand_mean_and_histogram_agree_with_fit() {
        let spec = WorkloadSpec {
            types: vec![QueryTypeSpec {
                name: QueryType::new("slow"),
                proportion: 1.0,
                dist: ServiceDist::FromStats {
                    mean: ms(20.05),
                    p50: ms(12.51),
                },
            }],
            rate_qps: 1000.0,
            arrival: ArrivalProcess::Poisson,
        };
        let types = TypeSet::new(["slow"]).unwrap();
        let mut hist = Histogram::new(BucketScheme::default());
        let mut sum = 0.0;
        let n = 1_000_000u64;
        for q in Generator::new(&spec, &types, n, 11).unwrap() {
            sum += q.service_demand.as_secs_f64();
            hist.record(q.service_demand);
        }
        let mean = sum / n as f64;
        assert!((mean - 0.02005).abs() / 0.02005 < 0.02, "mean={mean}");
        let hist_mean = hist.mean().unwrap().as_secs_f64();
        assert!((hist_mean - 0.02005).abs() / 0.02005 < 0.02);
    }

    #[test]
    fn exponential_gap_mean_within_one_percent() {
        let spec = standard_spec(10_000.0);
        let types = TypeSet::new(["fast", "medium_fast", "medium_slow", "slow"]).unwrap();
        let n = 1_000_000u64;
        let last = Generator::new(&spec, &types, n, 3)
            .unwrap()
            .last()
            .unwrap();
        let mean_gap = last.t_arrival.as_secs_f64() / n as f64;
        assert!((mean_gap - 1e-4).abs() / 1e-4 < 0.01, "mean gap {mean_gap}");
    }

    #[test]
    fn generation_is_deterministic_and_increasing() {
        let spec = standard_spec(15119.0);
        let types = TypeSet::new(["fast", "medium_fast", "medium_slow", "slow"]).unwrap();
        let run = |seed| -> Vec<(u64, usize, u64, u64)> {
            Generator::new(&spec, &types, 20_000, seed)
                .unwrap()
                .map(|q| (q.id, q.qtype, q.t_arrival.as_nanos(), q.service_demand.as_nanos()))
                .collect()
        };
        let a = run(99);
        assert_eq!(a, run(99));
        assert_ne!(a, run(100));
        for w in a.windows(2) {
            assert!(w[1].2 > w[0].2, "arrival times must strictly increase");
        }
    }

    #[test]
    fn demands_match_lognormal_cdf_by_ks_test() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let fit = fit_lognormal(ms(20.05), ms(12.51)).unwrap();
        let spec = WorkloadSpec {
            types: vec![QueryTypeSpec {
                name: QueryType::new("slow"),
                proportion: 1.0,
                dist: ServiceDist::FromStats {
                    mean: ms(20.05),
                    p50: ms(12.51),
                },
            }],
            rate_qps: 1000.0,
            arrival: ArrivalProcess::Poisson,
        };
        let types = TypeSet::new(["slow"]).unwrap();
        let n = 100_000usize;
        let mut samples: Vec<f64> = Generator::new(&spec, &types, n as u64, 5)
            .unwrap()
            .map(|q| q.service_demand.as_secs_f64())
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let norm = Normal::new(0.0, 1.0).unwrap();
        let mut d = 0.0f64;
        for (i, &x) in samples.iter().enumerate() {
            let cdf = norm.cdf((x.ln() - fit.mu) / fit.sigma);
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Large-sample critical value at significance 0.01.
        let crit = 1.62762 / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn proportions_must_sum_to_one() {
        let mut spec = standard_spec(1000.0);
        spec.types[0].proportion = 0.5;
        assert!(spec.validate().is_err());
    }
}
