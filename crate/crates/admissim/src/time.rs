//! Simulated-time primitives.
//!
//! Timestamps and durations are 64-bit counts of nanoseconds of simulated
//! time. Integer nanoseconds keep event ordering and response-time arithmetic
//! exact; millisecond-scale workload parameters are exactly representable.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An instant of simulated time, measured from the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

/// A span of simulated time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Duration since an earlier instant. Panics if `earlier` is later;
    /// that would be a lifecycle bug in the caller.
    pub fn since(self, earlier: SimTime) -> SimDuration {
        assert!(
            earlier.0 <= self.0,
            "time went backwards: {earlier} > {self}"
        );
        SimDuration(self.0 - earlier.0)
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimDuration(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimDuration(s * 1_000_000_000)
    }

    /// Converts from seconds, rounding to the nearest nanosecond.
    /// Negative and non-finite inputs are clamped to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !s.is_finite() || s <= 0.0 {
            return SimDuration(0);
        }
        SimDuration((s * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn saturating_sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0.saturating_sub(rhs.0))
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub<SimTime> for SimTime {
    type Output = SimDuration;
    fn sub(self, rhs: SimTime) -> SimDuration {
        self.since(rhs)
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl AddAssign for SimDuration {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        assert!(rhs.0 <= self.0, "negative duration: {self} - {rhs}");
        SimDuration(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimDuration {
    type Output = SimDuration;
    fn mul(self, rhs: u64) -> SimDuration {
        SimDuration(self.0 * rhs)
    }
}

impl Div<u64> for SimDuration {
    type Output = SimDuration;
    fn div(self, rhs: u64) -> SimDuration {
        SimDuration(self.0 / rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_nanos(self.0))
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_nanos(self.0))
    }
}

/// Renders a nanosecond count with the largest unit that keeps it exact.
fn format_nanos(ns: u64) -> String {
    if ns == 0 {
        return "0s".to_string();
    }
    for (div, unit) in [(1_000_000_000, "s"), (1_000_000, "ms"), (1_000, "us")] {
        if ns % div == 0 {
            return format!("{}{}", ns / div, unit);
        }
    }
    format!("{ns}ns")
}

/// Parses a duration string with an explicit unit: "18ms", "1.5s", "500us",
/// "250ns". Unit suffixes are required to prevent unit bugs in config files.
pub fn parse_duration(s: &str) -> Result<SimDuration, String> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("ns") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("us").or_else(|| s.strip_suffix("µs")) {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e6)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1e9)
    } else {
        return Err(format!("duration '{s}' is missing a unit (ns/us/ms/s)"));
    };
    let num = num.trim();
    // Integers stay exact at any magnitude; only fractional values go
    // through floating point.
    if let Ok(whole) = num.parse::<u64>() {
        return whole
            .checked_mul(scale as u64)
            .map(SimDuration)
            .ok_or_else(|| format!("duration '{s}' overflows"));
    }
    let value: f64 = num
        .parse()
        .map_err(|_| format!("invalid duration number in '{s}'"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("duration '{s}' must be finite and non-negative"));
    }
    Ok(SimDuration((value * scale).round() as u64))
}

impl Serialize for SimDuration {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_nanos(self.0))
    }
}

impl<'de> Deserialize<'de> for SimDuration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_duration(&s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_units() {
        assert_eq!(parse_duration("18ms").unwrap(), SimDuration::from_millis(18));
        assert_eq!(parse_duration("1.5s").unwrap(), SimDuration::from_millis(1500));
        assert_eq!(parse_duration("500us").unwrap(), SimDuration::from_micros(500));
        assert_eq!(parse_duration("250ns").unwrap(), SimDuration::from_nanos(250));
        assert_eq!(parse_duration("0.38ms").unwrap(), SimDuration::from_nanos(380_000));
        assert!(parse_duration("18").is_err());
        assert!(parse_duration("-4ms").is_err());
        assert!(parse_duration("xms").is_err());
    }

    #[test]
    fn arithmetic() {
        let t0 = SimTime::from_nanos(5);
        let t1 = t0 + SimDuration::from_nanos(12);
        assert_eq!(t1 - t0, SimDuration::from_nanos(12));
        assert_eq!(SimDuration::from_millis(3) * 4, SimDuration::from_millis(12));
        assert_eq!(SimDuration::from_millis(12) / 4, SimDuration::from_millis(3));
    }

    #[test]
    #[should_panic(expected = "time went backwards")]
    fn negative_elapsed_panics() {
        let _ = SimTime::from_nanos(1).since(SimTime::from_nanos(2));
    }

    proptest! {
        #[test]
        fn format_parse_roundtrip(ns in 0u64..u64::MAX / 2) {
            let d = SimDuration::from_nanos(ns);
            prop_assert_eq!(parse_duration(&format_nanos(ns)).unwrap(), d);
        }
    }
}
