use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// What happened during one broadcast interval. `cost` and
/// `jobs_in_system` describe the snapshot taken at the interval start;
/// the counters cover the interval's slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub t: u64,
    pub cost: f64,
    pub jobs_in_system: u64,
    pub arrivals: u64,
    pub completions: u64,
    pub drops: u64,
    /// Interval index of completion minus interval index of arrival, per
    /// job completed in this interval.
    #[serde(skip)]
    pub response_intervals: Vec<u32>,
    #[serde(skip)]
    pub response_slots: Vec<u32>,
}

/// Output of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub intervals: Vec<IntervalMetrics>,
    /// Jobs in system after the last slot.
    pub final_jobs_in_system: u64,
    /// Calls made to the policy.
    pub decisions: u64,
}

impl RunOutput {
    pub fn costs(&self) -> Vec<f64> {
        self.intervals.iter().map(|m| m.cost).collect()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::from_intervals(&self.intervals)
    }

    /// One row per interval: `t,cost,jobs_in_system,arrivals,completions,drops`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["t", "cost", "jobs_in_system", "arrivals", "completions", "drops"])?;
        for m in &self.intervals {
            writer.write_record([
                m.t.to_string(),
                format!("{}", m.cost),
                m.jobs_in_system.to_string(),
                m.arrivals.to_string(),
                m.completions.to_string(),
                m.drops.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// `Σ_{t<T} γ^t g(t)` over the recorded cost stream.
pub fn discounted_cost(metrics: &[IntervalMetrics], gamma: f64, horizon: usize) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for m in metrics.iter().take(horizon) {
        total += weight * m.cost;
        weight *= gamma;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVar {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut n = 0.0;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1.0;
            let delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
        }
        if n == 0.0 {
            return Self::default();
        }
        let variance = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Self { mean, variance }
    }
}

/// JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub intervals: u64,
    pub cost: MeanVar,
    pub jobs_in_system: MeanVar,
    pub total_arrivals: u64,
    pub total_completions: u64,
    pub total_drops: u64,
    /// Drops over (completions + drops).
    pub drop_rate: f64,
    pub response_intervals: MeanVar,
    pub response_slots: MeanVar,
    /// Completed jobs by response time in intervals.
    pub response_histogram: BTreeMap<u32, u64>,
    /// Number of intervals observing each jobs-in-system count.
    pub jobs_in_system_histogram: BTreeMap<u64, u64>,
}

impl RunSummary {
    pub fn from_intervals(intervals: &[IntervalMetrics]) -> Self {
        let total_arrivals = intervals.iter().map(|m| m.arrivals).sum();
        let total_completions: u64 = intervals.iter().map(|m| m.completions).sum();
        let total_drops: u64 = intervals.iter().map(|m| m.drops).sum();
        let finished = total_completions + total_drops;
        let mut response_histogram = BTreeMap::new();
        for r in intervals.iter().flat_map(|m| m.response_intervals.iter()) {
            *response_histogram.entry(*r).or_insert(0) += 1;
        }
        let mut jobs_in_system_histogram = BTreeMap::new();
        for m in intervals {
            *jobs_in_system_histogram.entry(m.jobs_in_system).or_insert(0) += 1;
        }
        Self {
            intervals: intervals.len() as u64,
            cost: MeanVar::of(intervals.iter().map(|m| m.cost)),
            jobs_in_system: MeanVar::of(intervals.iter().map(|m| m.jobs_in_system as f64)),
            total_arrivals,
            total_completions,
            total_drops,
            drop_rate: if finished == 0 { 0.0 } else { total_drops as f64 / finished as f64 },
            response_intervals: MeanVar::of(
                intervals.iter().flat_map(|m| m.response_intervals.iter()).map(|&r| f64::from(r)),
            ),
            response_slots: MeanVar::of(intervals.iter().flat_map(|m| m.response_slots.iter()).map(|&r| f64::from(r))),
            response_histogram,
            jobs_in_system_histogram,
        }
    }
}
