//! SLO-aware admission control.
//!
//! For each incoming query the policy estimates the mean queue wait from the
//! per-type queue counts and recent mean processing times, adds the type's
//! recent p50/p90 processing times to form percentile response-time
//! estimates, and rejects the query if either estimate exceeds its SLO
//! target. Estimates are deliberately cheap: they read bucketed histogram
//! snapshots, not exact distributions.

use serde::{Deserialize, Serialize};

use crate::histogram::HistogramSet;
use crate::time::{SimDuration, SimTime};
use crate::types::{AcceptReason, Decision, Query, RejectReason, Slo, SloTable, TypeSet};

use super::{AdmissionPolicy, QueueView};

/// How to treat a query whose type has an empty read-side histogram.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyHistogramAction {
    /// Admit it; processing it is what fills the histogram.
    #[default]
    AcceptLeniently,
    /// Estimate from the type-agnostic general histogram and judge against
    /// the default SLO.
    UseGeneralHistogram,
}

/// The per-query estimates behind a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResponseTimeEstimate {
    pub ewt_mean: SimDuration,
    pub ert_p50: SimDuration,
    pub ert_p90: SimDuration,
}

/// Estimated mean queue wait: queued work, by type counts and per-type mean
/// processing times, divided by the number of query engine processes. Types
/// with empty histograms contribute via the general histogram's mean, or
/// nothing if that is empty too.
pub fn estimate_mean_wait(qv: &QueueView, hists: &HistogramSet, p: u32) -> SimDuration {
    debug_assert!(p >= 1);
    let mut acc: u128 = 0;
    for qtype in 0..qv.type_count() {
        let count = qv.count(qtype) as u128;
        if count == 0 {
            continue;
        }
        let mean = hists
            .read(qtype)
            .mean()
            .or_else(|_| hists.general_read().mean())
            .unwrap_or(SimDuration::ZERO);
        acc += count * mean.as_nanos() as u128;
    }
    SimDuration::from_nanos((acc / p as u128) as u64)
}

pub struct Bouncer {
    slos: Vec<Slo>,
    default_slo: Slo,
    p: u32,
    hists: HistogramSet,
    empty_action: EmptyHistogramAction,
}

impl Bouncer {
    pub fn new(
        slo_table: &SloTable,
        types: &TypeSet,
        p: u32,
        hists: HistogramSet,
        empty_action: EmptyHistogramAction,
    ) -> Self {
        let slos = types.iter().map(|(_, name)| slo_table.lookup(name)).collect();
        Bouncer {
            slos,
            default_slo: slo_table.default_slo(),
            p,
            hists,
            empty_action,
        }
    }

    pub fn histograms(&self) -> &HistogramSet {
        &self.hists
    }

    pub fn histograms_mut(&mut self) -> &mut HistogramSet {
        &mut self.hists
    }

    /// Advances histogram swaps to the current time.
    pub fn tick(&mut self, now: SimTime) {
        self.hists.maybe_swap_all(now);
    }

    /// The admission rule: estimate, compare against the SLO, reject on
    /// either percentile exceeding its target.
    pub fn decide(&self, q: &Query, qv: &QueueView) -> (Decision, ResponseTimeEstimate) {
        let ewt_mean = estimate_mean_wait(qv, &self.hists, self.p);

        let read = self.hists.read(q.qtype);
        let (pt_p50, pt_p90, slo) = if read.is_empty() {
            match self.empty_action {
                EmptyHistogramAction::AcceptLeniently => {
                    let est = ResponseTimeEstimate {
                        ewt_mean,
                        ert_p50: ewt_mean,
                        ert_p90: ewt_mean,
                    };
                    return (Decision::Accept(AcceptReason::EmptyHistogramLeniency), est);
                }
                EmptyHistogramAction::UseGeneralHistogram => {
                    let general = self.hists.general_read();
                    if general.is_empty() {
                        // Nothing to estimate from anywhere; only admitting
                        // can break the blank-state deadlock.
                        let est = ResponseTimeEstimate {
                            ewt_mean,
                            ert_p50: ewt_mean,
                            ert_p90: ewt_mean,
                        };
                        return (Decision::Accept(AcceptReason::EmptyHistogramLeniency), est);
                    }
                    (
                        general.percentile(0.5).unwrap(),
                        general.percentile(0.9).unwrap(),
                        self.default_slo,
                    )
                }
            }
        } else {
            (
                read.percentile(0.5).unwrap(),
                read.percentile(0.9).unwrap(),
                self.slos[q.qtype],
            )
        };

        let est = ResponseTimeEstimate {
            ewt_mean,
            ert_p50: ewt_mean + pt_p50,
            ert_p90: ewt_mean + pt_p90,
        };
        let decision = if est.ert_p50 > slo.p50_target || est.ert_p90 > slo.p90_target {
            Decision::Reject(RejectReason::SloEstimateExceeded)
        } else {
            Decision::Accept(AcceptReason::None)
        };
        (decision, est)
    }
}

impl AdmissionPolicy for Bouncer {
    fn on_arrival(&mut self, q: &Query, qv: &QueueView, now: SimTime) -> Decision {
        self.tick(now);
        self.decide(q, qv).0
    }

    fn on_complete(&mut self, q: &Query, now: SimTime) {
        let pt = q.processing_time().expect("completed query");
        self.hists.record(q.qtype, pt);
        self.tick(now);
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::histogram::BucketScheme;
    use crate::types::QueryType;

    fn ms(v: f64) -> SimDuration {
        SimDuration::from_nanos((v * 1e6).round() as u64)
    }

    fn slo_18_50_table() -> SloTable {
        SloTable::new(HashMap::from([(
            QueryType::new("default"),
            Slo::new(ms(18.0), ms(50.0)).unwrap(),
        )]))
        .unwrap()
    }

    fn types() -> TypeSet {
        TypeSet::new(["fast", "medium_fast", "medium_slow", "slow"]).unwrap()
    }

    /// Histogram set with the read sides pre-filled so means/percentiles are
    /// exact point masses at the given per-type values.
    fn seeded_hists(types: &TypeSet, values: &[(usize, f64, u64)]) -> HistogramSet {
        let mut h = HistogramSet::new(
            types.len(),
            BucketScheme::default(),
            SimDuration::from_secs(1),
            1,
        );
        for &(idx, v, n) in values {
            for _ in 0..n {
                h.record(idx, ms(v));
            }
        }
        h.maybe_swap_all(SimTime::from_nanos(1_000_000_000));
        h
    }

    fn query(qtype: usize) -> Query {
        Query::new(1, qtype, SimTime::ZERO, ms(1.0))
    }

    #[test]
    fn mean_wait_empty_queue_is_zero() {
        let t = types();
        let hists = seeded_hists(&t, &[(3, 20.05, 10)]);
        let qv = QueueView::new(t.len());
        assert_eq!(estimate_mean_wait(&qv, &hists, 100), SimDuration::ZERO);
    }

    #[test]
    fn mean_wait_hundred_slow_queries() {
        let t = types();
        let hists = seeded_hists(&t, &[(3, 20.05, 10)]);
        let mut qv = QueueView::new(t.len());
        for _ in 0..100 {
            qv.note_enqueue(3);
        }
        assert_eq!(estimate_mean_wait(&qv, &hists, 100), ms(20.05));
    }

    #[test]
    fn mean_wait_mixed_queue() {
        // (40 * 1.16ms + 30 * 12.13ms) / 100 = 4.103ms, exact in nanoseconds.
        let t = types();
        let hists = seeded_hists(&t, &[(0, 1.16, 5), (2, 12.13, 5)]);
        let mut qv = QueueView::new(t.len());
        for _ in 0..40 {
            qv.note_enqueue(0);
        }
        for _ in 0..30 {
            qv.note_enqueue(2);
        }
        assert_eq!(estimate_mean_wait(&qv, &hists, 100), ms(4.103));
    }

    #[test]
    fn mean_wait_uses_general_for_empty_type() {
        let t = types();
        // Only the "fast" type has data; the general histogram mirrors it.
        let hists = seeded_hists(&t, &[(0, 10.0, 10)]);
        let mut qv = QueueView::new(t.len());
        for _ in 0..100 {
            qv.note_enqueue(3);
        }
        assert_eq!(estimate_mean_wait(&qv, &hists, 100), ms(10.0));
    }

    #[test]
    fn accepts_fast_query_on_empty_queue() {
        let t = types();
        let hists = seeded_hists(&t, &[(0, 0.38, 50), (0, 2.70, 50)]);
        let b = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            hists,
            EmptyHistogramAction::AcceptLeniently,
        );
        let qv = QueueView::new(t.len());
        let (d, est) = b.decide(&query(0), &qv);
        assert_eq!(d, Decision::Accept(AcceptReason::None));
        assert!(est.ert_p50 <= ms(18.0));
        assert!(est.ert_p90 <= ms(50.0));
    }

    #[test]
    fn rejects_slow_query_behind_slow_backlog() {
        // ewt = 100 * 20.05ms / 100 = 20.05ms; ert_p50 >= 20.05 + 12.51
        // already exceeds the 18ms target.
        let t = types();
        let hists = seeded_hists(&t, &[(3, 20.05, 60), (3, 12.51, 40)]);
        let b = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            hists,
            EmptyHistogramAction::AcceptLeniently,
        );
        let mut qv = QueueView::new(t.len());
        for _ in 0..100 {
            qv.note_enqueue(3);
        }
        let (d, est) = b.decide(&query(3), &qv);
        assert_eq!(d, Decision::Reject(RejectReason::SloEstimateExceeded));
        assert!(est.ert_p50 >= ms(18.0), "ert_p50 = {}", est.ert_p50);
    }

    #[test]
    fn empty_histogram_lenient_accept() {
        let t = types();
        let hists = seeded_hists(&t, &[]);
        let b = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            hists,
            EmptyHistogramAction::AcceptLeniently,
        );
        let qv = QueueView::new(t.len());
        let (d, _) = b.decide(&query(2), &qv);
        assert_eq!(d, Decision::Accept(AcceptReason::EmptyHistogramLeniency));
    }

    #[test]
    fn empty_histogram_general_fallback() {
        let t = types();
        // "slow" has no data of its own; the general histogram holds cheap
        // samples, so the estimate passes the default SLO.
        let hists = seeded_hists(&t, &[(0, 1.0, 100)]);
        let b = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            hists,
            EmptyHistogramAction::UseGeneralHistogram,
        );
        let qv = QueueView::new(t.len());
        let (d, est) = b.decide(&query(3), &qv);
        assert_eq!(d, Decision::Accept(AcceptReason::None));
        assert!(est.ert_p50 <= ms(1.1));

        // With both the type and general histograms empty, leniency applies.
        let blank = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            seeded_hists(&t, &[]),
            EmptyHistogramAction::UseGeneralHistogram,
        );
        let (d, _) = blank.decide(&query(3), &qv);
        assert_eq!(d, Decision::Accept(AcceptReason::EmptyHistogramLeniency));
    }

    #[test]
    fn never_accepts_past_slo_without_override_reason() {
        // Sweep queue depths; every accept must have estimates within SLO.
        let t = types();
        let hists = seeded_hists(&t, &[(3, 12.51, 100), (2, 7.40, 100)]);
        let b = Bouncer::new(
            &slo_18_50_table(),
            &t,
            100,
            hists,
            EmptyHistogramAction::AcceptLeniently,
        );
        let mut qv = QueueView::new(t.len());
        for depth in 0..400 {
            let (d, est) = b.decide(&query(3), &qv);
            match d {
                Decision::Accept(AcceptReason::None) => {
                    assert!(est.ert_p50 <= ms(18.0) && est.ert_p90 <= ms(50.0));
                }
                Decision::Reject(RejectReason::SloEstimateExceeded) => {
                    assert!(est.ert_p50 > ms(18.0) || est.ert_p90 > ms(50.0));
                }
                other => panic!("unexpected decision {other:?} at depth {depth}"),
            }
            qv.note_enqueue(2);
        }
    }
}
