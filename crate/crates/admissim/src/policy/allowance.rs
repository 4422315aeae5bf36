//! Acceptance-allowance starvation avoidance.
//!
//! Guarantees each query type a small admission floor `A` over a sliding
//! window. A query is admitted outright while its type's windowed acceptance
//! ratio sits below `A` (or the window holds no queries of the type yet);
//! otherwise the SLO policy decides, and a rejection is still overridden on
//! the spot with probability `A`. Window counts update after every decision:
//! accepted on accept, received always, received last.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::time::SimTime;
use crate::types::{AcceptReason, Decision, Query};
use crate::window::SlidingWindowCounts;

use super::{AdmissionPolicy, Bouncer, QueueView};

pub struct AcceptanceAllowance {
    inner: Bouncer,
    allowance: f64,
    window: SlidingWindowCounts,
    rng: ChaCha8Rng,
}

impl AcceptanceAllowance {
    pub fn new(
        inner: Bouncer,
        allowance: f64,
        window: SlidingWindowCounts,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!((0.0..=1.0).contains(&allowance));
        AcceptanceAllowance {
            inner,
            allowance,
            window,
            rng,
        }
    }
}

impl AdmissionPolicy for AcceptanceAllowance {
    fn on_arrival(&mut self, q: &Query, qv: &QueueView, now: SimTime) -> Decision {
        self.inner.tick(now);
        self.window.advance(now);
        let qtype = q.qtype;

        let aqc = self.window.accepted_count(qtype);
        let rqc = self.window.received_count(qtype);

        let mut decision = if rqc == 0 || (aqc as f64 / rqc as f64) < self.allowance {
            Decision::Accept(AcceptReason::AllowanceOverride)
        } else {
            self.inner.decide(q, qv).0
        };

        if !decision.is_accept() && self.rng.random::<f64>() < self.allowance {
            decision = Decision::Accept(AcceptReason::AllowanceOverride);
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
