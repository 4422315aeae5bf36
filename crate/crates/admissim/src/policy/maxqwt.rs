//! Maximum queue wait time policy.
//!
//! Admits a query while the estimated mean queue wait,
//! `ewt_mean = l * pt_mavg / P`, stays within a configured limit. The
//! processing-time moving average is type-blind; the limit is either global
//! or assigned per query type.

use crate::time::{SimDuration, SimTime};
use crate::types::{AcceptReason, Decision, Query, RejectReason, TypeIdx};
use crate::window::MovingAverage;

use super::{AdmissionPolicy, QueueView};

#[derive(Clone, Debug)]
pub enum WaitLimit {
    Global(SimDuration),
    /// Resolved per type index; built from a name-keyed map with a
    /// required default.
    PerType(Vec<SimDuration>),
}

impl WaitLimit {
    fn for_type(&self, qtype: TypeIdx) -> SimDuration {
        match self {
            WaitLimit::Global(d) => *d,
            WaitLimit::PerType(v) => v[qtype],
        }
    }
}

pub struct MaxQueueWait {
    limit: WaitLimit,
    p: u32,
    window: MovingAverage,
}

impl MaxQueueWait {
    pub fn new(limit: WaitLimit, p: u32, window: MovingAverage) -> Self {
        assert!(p >= 1);
        MaxQueueWait { limit, p, window }
    }

    fn estimated_wait(&self, queue_len: usize) -> SimDuration {
        let work = queue_len as u128 * self.window.pt_mavg().as_nanos() as u128;
        SimDuration::from_nanos((work / self.p as u128) as u64)
    }
}

impl AdmissionPolicy for MaxQueueWait {
    fn on_arrival(&mut self, q: &Query, qv: &QueueView, now: SimTime) -> Decision {
        self.window.advance(now);
        // An empty moving average reads 0, which admits unconditionally.
        if self.estimated_wait(qv.len()) <= self.limit.for_type(q.qtype) {
            Decision::Accept(AcceptReason::None)
        } else {
            Decision::Reject(RejectReason::WaitLimitExceeded)
        }
    }

    fn on_complete(&mut self, q: &Query, now: SimTime) {
        self.window.advance(now);
        self.window
            .record_completion(q.processing_time().expect("completed query"));
    }
}
