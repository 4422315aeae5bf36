//! Helping-the-underserved starvation avoidance.
//!
//! When the SLO policy rejects a query whose type has a windowed acceptance
//! ratio below the average across all types, the rejection is overridden
//! with probability `p = alpha * x / (1 + x)`, where
//! `x = (AAR - AR) / AAR`. The sigmoid damps the help: with `AR >= 0`,
//! `x <= 1`, so `p` never exceeds `alpha / 2`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::time::SimTime;
use crate::types::{AcceptReason, Decision, Query};
use crate::window::SlidingWindowCounts;

use super::{AdmissionPolicy, Bouncer, QueueView};

/// Probability of overriding a rejection for a type with acceptance ratio
/// `ar` against average ratio `aar`. Caller ensures `ar < aar`.
pub fn override_probability(ar: f64, aar: f64, alpha: f64) -> f64 {
    debug_assert!(ar < aar);
    let x = (aar - ar) / aar;
    alpha * x / (1.0 + x)
}

pub struct HelpingUnderserved {
    inner: Bouncer,
    alpha: f64,
    window: SlidingWindowCounts,
    rng: ChaCha8Rng,
    type_count: usize,
    max_observed_p: f64,
}

impl HelpingUnderserved {
    pub fn new(
        inner: Bouncer,
        alpha: f64,
        window: SlidingWindowCounts,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0);
        HelpingUnderserved {
            inner,
            alpha,
            window,
            rng,
            type_count: 0,
            max_observed_p: 0.0,
        }
    }

    /// Largest override probability computed so far; bounded by `alpha / 2`.
    pub fn max_observed_override_probability(&self) -> f64 {
        self.max_observed_p
    }
}

impl AdmissionPolicy for HelpingUnderserved {
    fn on_arrival(&mut self, q: &Query, qv: &QueueView, now: SimTime) -> Decision {
        self.inner.tick(now);
        self.window.advance(now);
        self.type_count = qv.type_count();
        let qtype = q.qtype;

        let mut decision = self.inner.decide(q, qv).0;

        if !decision.is_accept() {
            let ar = self.window.acceptance_ratio(qtype);
            // Average acceptance ratio over every configured type, including
            // zero-traffic ones (their ratio reads 0 via the max clamp).
            let mut aar = 0.0;
            for t in 0..self.type_count {
                aar += self.window.acceptance_ratio(t);
            }
            aar /= self.type_count.max(1) as f64;

            if ar < aar {
                let p = override_probability(ar, aar, self.alpha);
                assert!(
                    p <= self.alpha / 2.0 + 1e-12,
                    "override probability {p} exceeds alpha/2"
                );
                if p > self.max_observed_p {
                    self.max_observed_p = p;
                }
                if self.rng.random::<f64>() < p {
                    decision = Decision::Accept(AcceptReason::UnderservedOverride);
                }
            }
        }

        if decision.is_accept() {
            self.window.increment_accepted(qtype);
        }
        self.window.increment_received(qtype);
        decision
    }

    fn on_dequeue(&mut self, q: &Query, now: SimTime) {
        self.inner.on_dequeue(q, now);
    }

    fn on_complete(&mut self, q: &Query, now: SimTime) {
        self.inner.on_complete(q, now);
    }
}
