//! Discrete-event simulation of the processing pipeline: arrival ->
//! admission decision -> FIFO queue -> P parallel query engine processes ->
//! completion.
//!
//! The event loop is strictly sequential in simulated time. Completions are
//! ordered before arrivals at equal timestamps (a freed server is visible to
//! the next admission decision), with query ids breaking remaining ties, so
//! a run is a deterministic function of its inputs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use crate::policy::{AdmissionPolicy, QueueView};
use crate::time::{SimDuration, SimTime};
use crate::types::{AcceptReason, Decision, Outcome, Query, RejectReason, TypeIdx};

/// Engine knobs independent of workload and policy.
#[derive(Clone, Debug)]
pub struct EngineParams {
    /// Number of query engine processes.
    pub p: u32,
    /// Hard cap on queue length, enforced ahead of the policy. Off by
    /// default: the standard scenarios let policies own all rejections.
    pub queue_cap: Option<usize>,
    /// Queries excluded from metrics at the head of the run.
    pub warmup_queries: u64,
    /// Minimum simulated time excluded from metrics.
    pub warmup_min_time: SimDuration,
}

impl EngineParams {
    pub fn new(p: u32) -> Self {
        EngineParams {
            p,
            queue_cap: None,
            warmup_queries: 0,
            warmup_min_time: SimDuration::ZERO,
        }
    }
}

/// Per-type tallies of measured (post-warm-up) decisions.
#[derive(Clone, Debug, Default)]
pub struct TypeTally {
    pub received: u64,
    pub accepted: u64,
    pub rejected: u64,
}

/// Measured response/wait/processing times of completed queries of one type.
#[derive(Clone, Debug, Default)]
pub struct TypeSamples {
    pub rt: Vec<u64>,
    pub wt: Vec<u64>,
    pub pt: Vec<u64>,
}

/// Counts of decision reasons over measured queries.
#[derive(Clone, Debug, Default)]
pub struct ReasonCounts {
    pub accept_plain: u64,
    pub allowance_override: u64,
    pub underserved_override: u64,
    pub empty_histogram_leniency: u64,
    pub slo_estimate_exceeded: u64,
    pub queue_full: u64,
    pub wait_limit_exceeded: u64,
    pub fraction_drop: u64,
    pub expected_timeout: u64,
}

impl ReasonCounts {
    fn count(&mut self, decision: &Decision) {
        match decision {
            Decision::Accept(AcceptReason::None) => self.accept_plain += 1,
            Decision::Accept(AcceptReason::AllowanceOverride) => self.allowance_override += 1,
            Decision::Accept(AcceptReason::UnderservedOverride) => self.underserved_override += 1,
            Decision::Accept(AcceptReason::EmptyHistogramLeniency) => {
                self.empty_histogram_leniency += 1
            }
            Decision::Reject(RejectReason::SloEstimateExceeded) => self.slo_estimate_exceeded += 1,
            Decision::Reject(RejectReason::QueueFull) => self.queue_full += 1,
            Decision::Reject(RejectReason::WaitLimitExceeded) => self.wait_limit_exceeded += 1,
            Decision::Reject(RejectReason::FractionDrop) => self.fraction_drop += 1,
            Decision::Reject(RejectReason::ExpectedTimeout) => self.expected_timeout += 1,
        }
    }
}

/// Everything one run produced, before aggregation into a report.
#[derive(Clone, Debug)]
pub struct RawRunData {
    pub tallies: Vec<TypeTally>,
    pub samples: Vec<TypeSamples>,
    pub reasons: ReasonCounts,
    /// Start of the measurement window (end of warm-up).
    pub window_start: SimTime,
    /// End of the run: the clock after the last event drained.
    pub drain_end: SimTime,
    pub last_arrival: SimTime,
    /// Server busy time clipped to the measurement window.
    pub busy_in_window: SimDuration,
    pub p: u32,
    /// Wall-clock nanoseconds spent inside each policy decision call.
    pub decision_latencies_ns: Vec<u64>,
    /// Whole-run conservation counters (warm-up included).
    pub total_received: u64,
    pub total_accepted: u64,
    pub total_rejected: u64,
    pub total_completed: u64,
    /// Time integral of queue length over the whole run.
    pub queue_len_time_integral: f64,
    /// Mean wait of all completed queries over the whole run, in seconds.
    pub whole_run_mean_wait_secs: f64,
}

impl RawRunData {
    /// Busy fraction of the P processes over the measurement window.
    pub fn utilization(&self) -> f64 {
        if self.drain_end <= self.window_start {
            return 0.0;
        }
        let window = (self.drain_end - self.window_start).as_nanos() as f64;
        self.busy_in_window.as_nanos() as f64 / (self.p as f64 * window)
    }

    /// Time-averaged queue length over the whole run.
    pub fn mean_queue_len(&self) -> f64 {
        if self.drain_end == SimTime::ZERO {
            return 0.0;
        }
        self.queue_len_time_integral / self.drain_end.as_secs_f64()
    }
}

struct CompletionEvent {
    time: SimTime,
    query: Query,
}

impl PartialEq for CompletionEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.query.id == other.query.id
    }
}
impl Eq for CompletionEvent {}
impl PartialOrd for CompletionEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CompletionEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        (other.time, other.query.id).cmp(&(self.time, self.query.id))
    }
}

/// Where the measurement window starts. The boundary is the arrival time of
/// the last excluded query or the minimum warm-up time, whichever is later;
/// it is unknown until the warm-up query prefix has arrived.
#[derive(Clone, Copy, Debug)]
enum WarmupBoundary {
    /// No warm-up configured: every query is measured.
    MeasureAll,
    /// Warm-up prefix still arriving.
    Pending,
    /// Queries arriving strictly after this instant are measured.
    After(SimTime),
}

struct Engine {
    params: EngineParams,
    policy: Box<dyn AdmissionPolicy>,
    queue: VecDeque<Query>,
    queue_view: QueueView,
    completions: BinaryHeap<CompletionEvent>,
    busy: u32,
    clock: SimTime,

    warmup_boundary: WarmupBoundary,
    arrivals_seen: u64,
    last_arrival: SimTime,

    tallies: Vec<TypeTally>,
    samples: Vec<TypeSamples>,
    reasons: ReasonCounts,
    busy_in_window: u64,
    decision_latencies_ns: Vec<u64>,

    total_received: u64,
    total_accepted: u64,
    total_rejected: u64,
    total_completed: u64,

    queue_integral: f64,
    last_queue_change: SimTime,
    wait_sum_secs: f64,
}

impl Engine {
    fn new(params: EngineParams, policy: Box<dyn AdmissionPolicy>, type_count: usize) -> Self {
        assert!(params.p >= 1, "engine requires at least one process");
        let warmup_boundary = if params.warmup_queries > 0 {
            WarmupBoundary::Pending
        } else if params.warmup_min_time.is_zero() {
            WarmupBoundary::MeasureAll
        } else {
            WarmupBoundary::After(SimTime::ZERO + params.warmup_min_time)
        };
        Engine {
            params,
            policy,
            queue: VecDeque::new(),
            queue_view: QueueView::new(type_count),
            completions: BinaryHeap::new(),
            busy: 0,
            clock: SimTime::ZERO,
            warmup_boundary,
            arrivals_seen: 0,
            last_arrival: SimTime::ZERO,
            tallies: vec![TypeTally::default(); type_count],
            samples: vec![TypeSamples::default(); type_count],
            reasons: ReasonCounts::default(),
            busy_in_window: 0,
            decision_latencies_ns: Vec::new(),
            total_received: 0,
            total_accepted: 0,
            total_rejected: 0,
            total_completed: 0,
            queue_integral: 0.0,
            last_queue_change: SimTime::ZERO,
            wait_sum_secs: 0.0,
        }
    }

    fn measured(&self, t_arrival: SimTime) -> bool {
        match self.warmup_boundary {
            WarmupBoundary::MeasureAll => true,
            WarmupBoundary::Pending => false,
            WarmupBoundary::After(w) => t_arrival > w,
        }
    }

    /// Left edge of the busy-time measurement window, once known.
    fn window_left_edge(&self) -> Option<SimTime> {
        match self.warmup_boundary {
            WarmupBoundary::MeasureAll => Some(SimTime::ZERO),
            WarmupBoundary::Pending => None,
            WarmupBoundary::After(w) => Some(w),
        }
    }

    fn note_queue_change(&mut self) {
        let dt = (self.clock - self.last_queue_change).as_secs_f64();
        self.queue_integral += self.queue_view.len() as f64 * dt;
        self.last_queue_change = self.clock;
    }

    /// Puts a query on a server, scheduling its completion.
    fn start_service(&mut self, mut q: Query, qtype: TypeIdx) {
        debug_assert!(self.busy < self.params.p);
        q.t_dequeued = Some(self.clock);
        self.policy.on_dequeue(&q, self.clock);
        self.busy += 1;
        let done = self.clock + q.service_demand;
        debug_assert_eq!(q.qtype, qtype);
        self.completions.push(CompletionEvent {
            time: done,
            query: q,
        });
    }

    fn handle_arrival(&mut self, mut q: Query) {
        self.clock = q.t_arrival;
        self.last_arrival = q.t_arrival;
        self.arrivals_seen += 1;
        if matches!(self.warmup_boundary, WarmupBoundary::Pending)
            && self.arrivals_seen == self.params.warmup_queries
        {
            // End of the warm-up prefix: whichever of the query-count and
            // minimum-time boundaries is later.
            let floor = SimTime::ZERO + self.params.warmup_min_time;
            let w = if q.t_arrival > floor { q.t_arrival } else { floor };
            self.warmup_boundary = WarmupBoundary::After(w);
        }
        self.total_received += 1;

        let at_cap = self
            .params
            .queue_cap
            .is_some_and(|cap| self.queue_view.len() >= cap);
        let decision = if at_cap {
            Decision::Reject(RejectReason::QueueFull)
        } else {
            let t0 = Instant::now();
            let d = self.policy.on_arrival(&q, &self.queue_view, self.clock);
            self.decision_latencies_ns
                .push(t0.elapsed().as_nanos() as u64);
            d
        };

        let measured = self.measured(q.t_arrival);
        if measured {
            self.reasons.count(&decision);
            self.tallies[q.qtype].received += 1;
        }

        match decision {
            Decision::Accept(_) => {
                self.total_accepted += 1;
                if measured {
                    self.tallies[q.qtype].accepted += 1;
                }
                q.set_outcome(Outcome::Accepted);
                q.t_enqueued = Some(self.clock);
                if self.busy < self.params.p && self.queue.is_empty() {
                    let qtype = q.qtype;
                    self.start_service(q, qtype);
                } else {
                    self.note_queue_change();
                    self.queue_view.note_enqueue(q.qtype);
                    self.queue.push_back(q);
                }
            }
            Decision::Reject(reason) => {
                // Rejected queries never reach the queue; drop the token.
                self.total_rejected += 1;
                if measured {
                    self.tallies[q.qtype].rejected += 1;
                }
                q.set_outcome(Outcome::Rejected(reason));
            }
        }
    }

    fn handle_completion(&mut self) {
        let CompletionEvent { time, mut query } = self.completions.pop().unwrap();
        self.clock = time;
        query.t_completed = Some(time);
        self.busy -= 1;
        self.total_completed += 1;
        self.policy.on_complete(&query, self.clock);

        let wt = query.wait_time().expect("completed query");
        self.wait_sum_secs += wt.as_secs_f64();

        if let Some(w) = self.window_left_edge() {
            // Busy-time overlap with [window_start, drain): clipped at the
            // left edge only, since the clock has not passed the right edge.
            // While the boundary is still pending it lies beyond the current
            // clock, so this completion cannot overlap the window.
            let deq = query.t_dequeued.unwrap();
            let from = if deq > w { deq } else { w };
            if time > from {
                self.busy_in_window += (time - from).as_nanos();
            }
        }
        if self.measured(query.t_arrival) {
            let s = &mut self.samples[query.qtype];
            s.rt.push(query.response_time().expect("completed").as_nanos());
            s.wt.push(wt.as_nanos());
            s.pt.push(query.processing_time().expect("completed").as_nanos());
        }

        if let Some(mut next) = self.queue.pop_front() {
            self.note_queue_change();
            self.queue_view.note_dequeue(next.qtype);
            next.t_dequeued = Some(self.clock);
            self.policy.on_dequeue(&next, self.clock);
            self.busy += 1;
            let done = self.clock + next.service_demand;
            self.completions.push(CompletionEvent {
                time: done,
                query: next,
            });
        }
        // Work conservation: a server never idles while the queue holds work.
        debug_assert!(self.busy == self.params.p || self.queue.is_empty());
    }

    fn into_raw(self) -> RawRunData {
        assert_eq!(
            self.total_received,
            self.total_accepted + self.total_rejected,
            "conservation: received != accepted + rejected"
        );
        assert_eq!(
            self.total_accepted, self.total_completed,
            "conservation: accepted != completed after drain"
        );
        let window_start = self.window_left_edge().unwrap_or(self.clock);
        let mean_wait = if self.total_completed > 0 {
            self.wait_sum_secs / self.total_completed as f64
        } else {
            0.0
        };
        RawRunData {
            tallies: self.tallies,
            samples: self.samples,
            reasons: self.reasons,
            window_start,
            drain_end: self.clock,
            last_arrival: self.last_arrival,
            busy_in_window: SimDuration::from_nanos(self.busy_in_window),
            p: self.params.p,
            decision_latencies_ns: self.decision_latencies_ns,
            total_received: self.total_received,
            total_accepted: self.total_accepted,
            total_rejected: self.total_rejected,
            total_completed: self.total_completed,
            queue_len_time_integral: self.queue_integral,
            whole_run_mean_wait_secs: mean_wait,
        }
    }
}

/// Runs the event loop over a stream of arrivals until every admitted query
/// has drained, returning the raw per-run records.
pub fn run(
    arrivals: impl Iterator<Item = Query>,
    policy: Box<dyn AdmissionPolicy>,
    params: EngineParams,
    type_count: usize,
) -> RawRunData {
    let mut engine = Engine::new(params, policy, type_count);
    let mut arrivals = arrivals;
    let mut next_arrival = arrivals.next();

    loop {
        let completion_first = match (engine.completions.peek(), &next_arrival) {
            // Equal timestamps: completions before arrivals, freeing servers
            // ahead of new admission decisions.
            (Some(c), Some(a)) => c.time <= a.t_arrival,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if completion_first {
            engine.handle_completion();
        } else {
            engine.handle_arrival(next_arrival.take().unwrap());
            next_arrival = arrivals.next();
        }
    }
    engine.into_raw()
}
