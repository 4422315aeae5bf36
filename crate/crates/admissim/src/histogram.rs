//! Per-query-type processing-time statistics.
//!
//! A log-bucketed histogram supplies conservative percentile estimates and an
//! exact mean. Each query type owns a dual-buffer pair: admission estimates
//! read one side while recorded processing times fill the other, and the
//! sides swap on a fixed cadence. A swap is skipped while the filling side
//! holds fewer samples than a threshold, so sparse types keep serving stale
//! data instead of none. A type-agnostic general histogram accumulates every
//! recorded processing time as a fallback for types with no data of their own.

use std::sync::Arc;

use crate::time::{SimDuration, SimTime};
use crate::types::TypeIdx;

/// Log-spaced bucket boundaries shared by all histograms of a run.
///
/// Boundary `i` is `lower_bound * growth^i`. A value `v` lands in the
/// underflow bucket when `v <= lower_bound`, in bucket `i` when
/// `bound[i-1] < v <= bound[i]`, and in the overflow bucket past the last
/// boundary. The defaults span roughly 1us to 40s with 5% relative width.
#[derive(Clone, Debug)]
pub struct BucketScheme {
    bounds: Arc<[u64]>,
    growth: f64,
}

pub const DEFAULT_LOWER_BOUND: SimDuration = SimDuration::from_micros(1);
pub const DEFAULT_GROWTH: f64 = 1.05;
pub const DEFAULT_BUCKET_COUNT: usize = 360;

impl BucketScheme {
    pub fn new(lower_bound: SimDuration, growth: f64, bucket_count: usize) -> Self {
        assert!(growth > 1.0, "bucket growth must exceed 1");
        assert!(bucket_count >= 1);
        assert!(lower_bound.as_nanos() >= 1);
        let mut bounds = Vec::with_capacity(bucket_count + 1);
        let base = lower_bound.as_nanos() as f64;
        for i in 0..=bucket_count {
            let b = (base * growth.powi(i as i32)).round() as u64;
            if let Some(&prev) = bounds.last() {
                assert!(b > prev, "bucket boundaries must be strictly increasing");
            }
            bounds.push(b);
        }
        BucketScheme {
            bounds: bounds.into(),
            growth,
        }
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// Largest boundary tracked; values beyond it land in the overflow
    /// bucket and report this boundary.
    pub fn max_bound(&self) -> SimDuration {
        SimDuration::from_nanos(*self.bounds.last().unwrap())
    }

    fn bucket_index(&self, value: SimDuration) -> usize {
        let v = value.as_nanos();
        self.bounds.partition_point(|&b| b < v)
    }

    fn upper_bound(&self, bucket: usize) -> SimDuration {
        let i = bucket.min(self.bounds.len() - 1);
        SimDuration::from_nanos(self.bounds[i])
    }

    fn bucket_slots(&self) -> usize {
        self.bounds.len() + 1
    }
}

impl Default for BucketScheme {
    fn default() -> Self {
        BucketScheme::new(DEFAULT_LOWER_BOUND, DEFAULT_GROWTH, DEFAULT_BUCKET_COUNT)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("histogram is empty")]
pub struct EmptyHistogram;

/// Bucketed tallies plus an exact running sum. Percentiles are bucket
/// approximations; the mean is not.
#[derive(Clone, Debug)]
pub struct Histogram {
    scheme: BucketScheme,
    counts: Vec<u64>,
    total: u64,
    sum: u128,
}

impl Histogram {
    pub fn new(scheme: BucketScheme) -> Self {
        let slots = scheme.bucket_slots();
        Histogram {
            scheme,
            counts: vec![0; slots],
            total: 0,
            sum: 0,
        }
    }

    pub fn record(&mut self, value: SimDuration) {
        let idx = self.scheme.bucket_index(value);
        self.counts[idx] += 1;
        self.total += 1;
        self.sum += value.as_nanos() as u128;
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Exact mean of recorded values, floored to whole nanoseconds.
    pub fn mean(&self) -> Result<SimDuration, EmptyHistogram> {
        if self.total == 0 {
            return Err(EmptyHistogram);
        }
        Ok(SimDuration::from_nanos((self.sum / self.total as u128) as u64))
    }

    /// Upper boundary of the first bucket whose cumulative count reaches
    /// `ceil(q * total)`. Over-estimates the exact empirical quantile by at
    /// most one bucket width (a factor of `growth`).
    pub fn percentile(&self, q: f64) -> Result<SimDuration, EmptyHistogram> {
        assert!(q > 0.0 && q < 1.0, "percentile fraction must be in (0,1)");
        if self.total == 0 {
            return Err(EmptyHistogram);
        }
        let rank = ((q * self.total as f64).ceil() as u64).clamp(1, self.total);
        let mut cum = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            cum += c;
            if cum >= rank {
                return Ok(self.scheme.upper_bound(i));
            }
        }
        unreachable!("cumulative count below total");
    }

    fn reset(&mut self) {
        self.counts.fill(0);
        self.total = 0;
        self.sum = 0;
    }
}

/// Read/write histogram pair with periodic swapping.
#[derive(Clone, Debug)]
pub struct DualHistogram {
    read_side: Histogram,
    write_side: Histogram,
    swap_interval: SimDuration,
    min_samples_to_swap: u64,
    last_swap: SimTime,
}

pub const DEFAULT_SWAP_INTERVAL: SimDuration = SimDuration::from_secs(1);
pub const DEFAULT_MIN_SAMPLES_TO_SWAP: u64 = 10;

impl DualHistogram {
    pub fn new(scheme: BucketScheme, swap_interval: SimDuration, min_samples_to_swap: u64) -> Self {
        assert!(!swap_interval.is_zero());
        DualHistogram {
            read_side: Histogram::new(scheme.clone()),
            write_side: Histogram::new(scheme),
            swap_interval,
            min_samples_to_swap,
            last_swap: SimTime::ZERO,
        }
    }

    /// Estimates read only this side; it changes only at swaps.
    pub fn read(&self) -> &Histogram {
        &self.read_side
    }

    pub fn record(&mut self, pt: SimDuration) {
        self.write_side.record(pt);
    }

    /// Swaps the sides once the interval has elapsed, unless the write side
    /// is still under the sample threshold — then the read side is retained
    /// (stale data over no data) and the write side keeps accumulating.
    pub fn maybe_swap(&mut self, now: SimTime) -> bool {
        debug_assert!(now >= self.last_swap);
        if now - self.last_swap < self.swap_interval {
            return false;
        }
        if self.write_side.total_count() < self.min_samples_to_swap {
            self.last_swap = now;
            return false;
        }
        std::mem::swap(&mut self.read_side, &mut self.write_side);
        self.write_side.reset();
        self.last_swap = now;
        true
    }
}

/// One dual histogram per query type plus the type-agnostic general one.
/// Every recorded processing time updates both.
#[derive(Clone, Debug)]
pub struct HistogramSet {
    per_type: Vec<DualHistogram>,
    general: DualHistogram,
}

impl HistogramSet {
    pub fn new(
        type_count: usize,
        scheme: BucketScheme,
        swap_interval: SimDuration,
        min_samples_to_swap: u64,
    ) -> Self {
        let proto = DualHistogram::new(scheme, swap_interval, min_samples_to_swap);
        HistogramSet {
            per_type: vec![proto.clone(); type_count],
            general: proto,
        }
    }

    pub fn record(&mut self, qtype: TypeIdx, pt: SimDuration) {
        self.per_type[qtype].record(pt);
        self.general.record(pt);
    }

    pub fn maybe_swap_all(&mut self, now: SimTime) {
        for h in &mut self.per_type {
            h.maybe_swap(now);
        }
        self.general.maybe_swap(now);
    }

    pub fn read(&self, qtype: TypeIdx) -> &Histogram {
        self.per_type[qtype].read()
    }

    pub fn general_read(&self) -> &Histogram {
        self.general.read()
    }
}
