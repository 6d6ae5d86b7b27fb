use serde::{Deserialize, Serialize};

use crate::error::{Coord, Error, Result};
use crate::model::{LatencyDist, TransitIndicator};

/// Per-slot delivery probability into one `(m, j)` queue, counted from the
/// snapshot slot. Slots past the transient part use `tail` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalHazardSchedule {
    transient: Vec<f64>,
    tail: Option<f64>,
}

impl ArrivalHazardSchedule {
    pub fn new(transient: Vec<f64>, tail: Option<f64>) -> Result<Self> {
        for (s, &a) in transient.iter().chain(tail.iter()).enumerate() {
            if !(0.0..=1.0).contains(&a) || a.is_nan() {
                return Err(Error::invariant(format!("hazard {a} at slot {s} outside [0,1]"), Coord::default()));
            }
        }
        Ok(Self { transient, tail })
    }

    /// The same hazard forever.
    pub fn constant(a: f64) -> Result<Self> {
        Self::new(Vec::new(), Some(a))
    }

    /// Covers exactly `transient.len()` slots.
    pub fn finite(transient: Vec<f64>) -> Result<Self> {
        Self::new(transient, None)
    }

    pub fn hazard(&self, s: usize) -> Option<f64> {
        self.transient.get(s).copied().or(self.tail)
    }

    pub fn transient(&self) -> &[f64] {
        &self.transient
    }

    pub fn tail(&self) -> Option<f64> {
        self.tail
    }

    /// Number of slots covered, `None` if unbounded.
    pub fn coverage(&self) -> Option<usize> {
        self.tail.is_none().then_some(self.transient.len())
    }

    /// Schedule as seen `n` slots later.
    pub fn shifted(&self, n: usize) -> Self {
        let transient = self.transient.get(n..).map(<[f64]>::to_vec).unwrap_or_default();
        Self { transient, tail: self.tail }
    }
}

/// A Bernoulli stream dispatched toward one server during the slots
/// `[start, end)`; `end = None` keeps it open forever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamWindow {
    pub rate: f64,
    pub start: usize,
    pub end: Option<usize>,
}

impl StreamWindow {
    pub fn always(rate: f64) -> Self {
        Self { rate, start: 0, end: None }
    }

    /// Probability that a job from this stream lands in slot `s`.
    fn delivery(&self, dist: &LatencyDist, s: usize) -> f64 {
        if s < self.start {
            return 0.0;
        }
        let s = s as i64;
        let upto = dist.cdf(s - self.start as i64);
        let before = self.end.map_or(0.0, |end| dist.cdf(s - end as i64));
        self.rate * (upto - before)
    }

    /// First slot from which `delivery` no longer changes.
    fn settles(&self, dist: &LatencyDist) -> usize {
        self.end.unwrap_or(self.start) + dist.max_latency() + 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Source<'a> {
    Known { dist: &'a LatencyDist, age: usize, count: u16 },
    Stream { dist: &'a LatencyDist, window: StreamWindow },
}

impl Source<'_> {
    fn probability_none(&self, s: usize) -> f64 {
        match *self {
            Source::Known { dist, age, count } => {
                let alive = dist.survival(age);
                let p = if alive <= 0.0 {
                    // Older than the support allows: lands at once.
                    if s == 0 { 1.0 } else { 0.0 }
                } else {
                    dist.pmf(age + s) / alive
                };
                (1.0 - p).powi(i32::from(count))
            }
            Source::Stream { dist, window } => 1.0 - window.delivery(dist, s),
        }
    }

    fn settles(&self) -> usize {
        match *self {
            Source::Known { dist, age, .. } => (dist.max_latency() + 1).saturating_sub(age).max(1),
            Source::Stream { dist, window } => window.settles(dist),
        }
    }
}

/// Collects delivery sources for one queue and combines them as
/// `a_s = 1 − Π (1 − p_source(s))`.
#[derive(Debug, Clone, Default)]
pub struct HazardBuilder<'a> {
    sources: Vec<Source<'a>>,
}

impl<'a> HazardBuilder<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Jobs already uploading, by age.
    pub fn known_jobs(&mut self, dist: &'a LatencyDist, transit: &TransitIndicator) -> &mut Self {
        for (age, count) in transit.occupied() {
            self.sources.push(Source::Known { dist, age, count });
        }
        self
    }

    pub fn known_job(&mut self, dist: &'a LatencyDist, age: usize) -> &mut Self {
        self.sources.push(Source::Known { dist, age, count: 1 });
        self
    }

    pub fn stream(&mut self, dist: &'a LatencyDist, window: StreamWindow) -> &mut Self {
        if window.rate > 0.0 && window.end.is_none_or(|end| end > window.start) {
            self.sources.push(Source::Stream { dist, window });
        }
        self
    }

    fn hazard_at(&self, s: usize) -> f64 {
        let none: f64 = self.sources.iter().map(|src| src.probability_none(s)).product();
        (1.0 - none).clamp(0.0, 1.0)
    }

    /// Schedule with a stationary tail from open-ended streams.
    pub fn build(&self) -> ArrivalHazardSchedule {
        let len = self.sources.iter().map(Source::settles).max().unwrap_or(0);
        let transient = (0..len).map(|s| self.hazard_at(s)).collect();
        let tail_none: f64 = self
            .sources
            .iter()
            .map(|src| match src {
                Source::Stream { window, .. } if window.end.is_none() => 1.0 - window.rate,
                _ => 1.0,
            })
            .product();
        ArrivalHazardSchedule { transient, tail: Some((1.0 - tail_none).clamp(0.0, 1.0)) }
    }

    /// Schedule covering exactly `slots` slots, no tail.
    pub fn build_truncated(&self, slots: usize) -> ArrivalHazardSchedule {
        ArrivalHazardSchedule { transient: (0..slots).map(|s| self.hazard_at(s)).collect(), tail: None }
    }
}
