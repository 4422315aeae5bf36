//! Maximum queue length policy: admit while the FIFO queue is shorter than
//! a configured limit. Oblivious to query types.

use crate::time::SimTime;
use crate::types::{AcceptReason, Decision, Query, RejectReason};

use super::{AdmissionPolicy, QueueView};

pub struct MaxQueueLength {
    limit: u64,
}

impl MaxQueueLength {
    pub fn new(limit: u64) -> Self {
        assert!(limit >= 1);
        MaxQueueLength { limit }
    }
}

impl AdmissionPolicy for MaxQueueLength {
    fn on_arrival(&mut self, _q: &Query, qv: &QueueView, _now: SimTime) -> Decision {
        if (qv.len() as u64) < self.limit {
            Decision::Accept(AcceptReason::None)
        } else {
            Decision::Reject(RejectReason::QueueFull)
        }
    }
}
