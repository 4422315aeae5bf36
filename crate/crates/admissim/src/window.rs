//! Sliding-window counters over simulated time.
//!
//! A window of duration `D` is a ring of `D/Δ` slots advanced by the
//! simulation clock; slots older than `D` are zeroed before reuse. Totals are
//! maintained incrementally so reads are O(1). Window membership is quantized
//! to whole slots: at slot-aligned instants the live slots hold exactly the
//! events with timestamps in `(now - D, now]`.

use crate::time::{SimDuration, SimTime};
use crate::types::TypeIdx;

#[derive(Clone, Copy, Debug, Default)]
struct PairCounts {
    received: u64,
    accepted: u64,
}

/// Per-type accepted/received counts over a sliding window.
#[derive(Clone, Debug)]
pub struct SlidingWindowCounts {
    step_nanos: u64,
    slots: Vec<Vec<PairCounts>>,
    totals: Vec<PairCounts>,
    current_epoch: u64,
}

fn slot_count(duration: SimDuration, step: SimDuration) -> usize {
    assert!(!step.is_zero(), "window step must be positive");
    assert!(
        duration.as_nanos() % step.as_nanos() == 0,
        "window duration {duration} must be an exact multiple of step {step}"
    );
    let n = (duration.as_nanos() / step.as_nanos()) as usize;
    assert!(n >= 10, "window must span at least 10 steps (D >> delta)");
    n
}

impl SlidingWindowCounts {
    pub fn new(duration: SimDuration, step: SimDuration, type_count: usize) -> Self {
        let n = slot_count(duration, step);
        SlidingWindowCounts {
            step_nanos: step.as_nanos(),
            slots: vec![vec![PairCounts::default(); type_count]; n],
            totals: vec![PairCounts::default(); type_count],
            current_epoch: 0,
        }
    }

    /// Moves the current slot to the one containing `now`, zeroing every slot
    /// that fell out of the window. Idempotent at a fixed time.
    pub fn advance(&mut self, now: SimTime) {
        let target = now.as_nanos() / self.step_nanos;
        debug_assert!(target >= self.current_epoch, "window advanced backwards");
        if target == self.current_epoch {
            return;
        }
        let n = self.slots.len() as u64;
        if target - self.current_epoch >= n {
            for slot in &mut self.slots {
                slot.fill(PairCounts::default());
            }
            self.totals.fill(PairCounts::default());
        } else {
            for epoch in self.current_epoch + 1..=target {
                let slot = &mut self.slots[(epoch % n) as usize];
                for (t, c) in slot.iter_mut().enumerate() {
                    self.totals[t].received -= c.received;
                    self.totals[t].accepted -= c.accepted;
                    *c = PairCounts::default();
                }
            }
        }
        self.current_epoch = target;
    }

    fn current_slot(&mut self) -> &mut Vec<PairCounts> {
        let n = self.slots.len() as u64;
        let idx = (self.current_epoch % n) as usize;
        &mut self.slots[idx]
    }

    pub fn increment_received(&mut self, qtype: TypeIdx) {
        self.current_slot()[qtype].received += 1;
        self.totals[qtype].received += 1;
    }

    pub fn increment_accepted(&mut self, qtype: TypeIdx) {
        self.current_slot()[qtype].accepted += 1;
        self.totals[qtype].accepted += 1;
    }

    pub fn received_count(&self, qtype: TypeIdx) -> u64 {
        self.totals[qtype].received
    }

    pub fn accepted_count(&self, qtype: TypeIdx) -> u64 {
        self.totals[qtype].accepted
    }

    /// Accepted over received with the denominator clamped to at least 1,
    /// so a type with no traffic reads as ratio 0.
    pub fn acceptance_ratio(&self, qtype: TypeIdx) -> f64 {
        let c = self.totals[qtype];
        debug_assert!(c.accepted <= c.received);
        c.accepted as f64 / c.received.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct AverageSlot {
    pt_sum: u64,
    completions: u64,
    arrivals: u64,
}

/// Moving averages of processing time and incoming traffic rate over a
/// sliding window.
#[derive(Clone, Debug)]
pub struct MovingAverage {
    step_nanos: u64,
    slots: Vec<AverageSlot>,
    total: AverageSlot,
    current_epoch: u64,
    /// Last advance time. The traffic-rate divisor is the elapsed time until
    /// the ring fills, so the rate does not read artificially low while the
    /// window is starting up.
    now_nanos: u64,
}

impl MovingAverage {
    pub fn new(duration: SimDuration, step: SimDuration) -> Self {
        let n = slot_count(duration, step);
        MovingAverage {
            step_nanos: step.as_nanos(),
            slots: vec![AverageSlot::default(); n],
            total: AverageSlot::default(),
            current_epoch: 0,
            now_nanos: 0,
        }
    }

    pub fn advance(&mut self, now: SimTime) {
        debug_assert!(now.as_nanos() >= self.now_nanos, "window advanced backwards");
        self.now_nanos = now.as_nanos();
        let target = now.as_nanos() / self.step_nanos;
        if target == self.current_epoch {
            return;
        }
        let n = self.slots.len() as u64;
        if target - self.current_epoch >= n {
            self.slots.fill(AverageSlot::default());
            self.total = AverageSlot::default();
        } else {
            for epoch in self.current_epoch + 1..=target {
                let slot = &mut self.slots[(epoch % n) as usize];
                self.total.pt_sum -= slot.pt_sum;
                self.total.completions -= slot.completions;
                self.total.arrivals -= slot.arrivals;
                *slot = AverageSlot::default();
            }
        }
        self.current_epoch = target;
    }

    pub fn record_completion(&mut self, pt: SimDuration) {
        let n = self.slots.len() as u64;
        let slot = &mut self.slots[(self.current_epoch % n) as usize];
        slot.pt_sum += pt.as_nanos();
        slot.completions += 1;
        self.total.pt_sum += pt.as_nanos();
        self.total.completions += 1;
    }

    pub fn record_arrival(&mut self) {
        let n = self.slots.len() as u64;
        self.slots[(self.current_epoch % n) as usize].arrivals += 1;
        self.total.arrivals += 1;
    }

    /// Mean processing time over the window; zero with no completions.
    pub fn pt_mavg(&self) -> SimDuration {
        if self.total.completions == 0 {
            return SimDuration::ZERO;
        }
        SimDuration::from_nanos(self.total.pt_sum / self.total.completions)
    }

    /// Incoming traffic rate in queries/second: window arrivals over the
    /// window span, where the span is the elapsed time until the ring has
    /// filled once. Zero traffic (or a zero span) reads as rate 0.
    pub fn qps_mavg(&self) -> f64 {
        let duration = self.slots.len() as u64 * self.step_nanos;
        let span = self.now_nanos.min(duration);
        if span == 0 {
            return 0.0;
        }
        self.total.arrivals as f64 / (span as f64 / 1e9)
    }
}
