//! Stage cost, the baseline-policy value approximation and its transit and
//! queue terms, and the forward prediction used to score candidate actions.

mod hazard;
mod queue;

pub use hazard::{ArrivalHazardSchedule, HazardBuilder, StreamWindow};
pub use queue::{queue_value, QueueDistribution, QueueValueEvaluator};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    DispatchActionTable, GlobalState, LatencyDist, ObservableState, SystemConfig, TransitIndicator, ValidatedInstance,
};

/// `g(S) = Σ_{m,j} (Σ_k ‖R^{(k)}_{m,j}‖₁ + Q_{m,j} + β·I[Q_{m,j} = L_max])`.
pub fn stage_cost(gsi: &GlobalState, config: &SystemConfig) -> f64 {
    let transit: u64 = gsi.aps.iter().map(|a| u64::from(a.in_flight())).sum();
    let queues: f64 = gsi
        .servers
        .iter()
        .flat_map(|s| s.queue_len.iter())
        .map(|&q| q as f64 + if q == config.max_queue_len { config.overflow_penalty } else { 0.0 })
        .sum();
    transit as f64 + queues
}

/// `Σ_{b≥1} γ^b E[jobs in flight on (k, m, j) at boundary b]` for the jobs
/// already uploading plus the given dispatch windows.
pub fn transit_value(
    dist: &LatencyDist,
    in_flight: &TransitIndicator,
    streams: &[StreamWindow],
    config: &SystemConfig,
) -> f64 {
    let gamma = config.discount;
    let t_b = config.slots_per_interval;
    let max = dist.max_latency();
    let mut total = 0.0;

    for (age, count) in in_flight.occupied() {
        let alive = dist.survival(age);
        if alive <= 0.0 {
            continue;
        }
        let mut weight = 1.0;
        let mut b = 1;
        while age + b * t_b <= max {
            weight *= gamma;
            total += f64::from(count) * weight * dist.survival(age + b * t_b) / alive;
            b += 1;
        }
    }

    for w in streams {
        if w.rate <= 0.0 || w.end.is_some_and(|end| end <= w.start) {
            continue;
        }
        let cum = |n: i64| dist.cum_survival(n);
        let mut weight = 1.0;
        let mut b = 1usize;
        loop {
            let boundary = b * t_b;
            weight *= gamma;
            match w.end {
                None if boundary >= w.start + max => {
                    total += w.rate * dist.mean() * weight / (1.0 - gamma);
                    break;
                }
                Some(end) if boundary >= end + max => break,
                _ => {}
            }
            if boundary > w.start {
                let upper = w.end.map_or(boundary, |end| end.min(boundary));
                total += w.rate * weight * (cum((boundary - w.start) as i64) - cum((boundary - upper) as i64));
            }
            b += 1;
        }
    }
    total
}

/// Decomposed `W_Π`: `total = Σ transit + Σ queue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    /// `transit[k][m][j]`, zero off the candidate sets.
    pub transit: Vec<Vec<Vec<f64>>>,
    /// `queue[m][j]`.
    pub queue: Vec<Vec<f64>>,
    pub total: f64,
}

/// Discounted cost of holding `actions` forever from the snapshot `gsi`.
pub fn approx_value(gsi: &GlobalState, actions: &DispatchActionTable, instance: &ValidatedInstance) -> Result<ValueEstimate> {
    let cfg = instance.config();
    let topo = instance.topology();
    let servers = cfg.num_processing_servers();
    let mut evaluator = QueueValueEvaluator::new(cfg);
    let mut transit = vec![vec![vec![0.0; cfg.num_job_types]; servers]; cfg.num_aps];
    let mut queue = vec![vec![0.0; cfg.num_job_types]; servers];
    let mut total = 0.0;
    for m in 0..servers {
        for j in 0..cfg.num_job_types {
            let mut builder = HazardBuilder::new();
            for &k in &topo.potential_aps[m] {
                let dist = instance.latency(k, m, j);
                let indicator = gsi.aps[k].transit(m, j).expect("potential AP has an indicator");
                builder.known_jobs(dist, indicator);
                let streams: &[StreamWindow] = if actions.target(k, j) == m {
                    &[StreamWindow::always(instance.arrival_rate(k, j))][..]
                } else {
                    &[]
                };
                for &w in streams {
                    builder.stream(dist, w);
                }
                let w_t = transit_value(dist, indicator, streams, cfg);
                transit[k][m][j] = w_t;
                total += w_t;
            }
            let init = QueueDistribution::point_mass(gsi.queue_len(m, j), cfg.max_queue_len);
            let w_q = evaluator.value(&init, &builder.build(), instance.service().completion_prob(m, j))?;
            queue[m][j] = w_q;
            total += w_q;
        }
    }
    Ok(ValueEstimate { transit, queue, total })
}

/// AP `k`'s own dispatch windows toward `m` when it moves from `previous`
/// to `candidate` at slot `delay`.
pub fn switch_windows(previous: usize, candidate: usize, m: usize, rate: f64, delay: usize) -> Vec<StreamWindow> {
    match (previous == m, candidate == m) {
        (true, true) => vec![StreamWindow::always(rate)],
        (true, false) => vec![StreamWindow { rate, start: 0, end: Some(delay) }],
        (false, true) => vec![StreamWindow { rate, start: delay, end: None }],
        (false, false) => Vec::new(),
    }
}

/// Delivery hazards into `(m, j)` as AP `osi.ap` sees them: every observed
/// in-flight job, every other observed AP holding its action, plus the
/// caller's own windows.
pub fn local_hazards<'a>(
    osi: &ObservableState,
    instance: &'a ValidatedInstance,
    m: usize,
    j: usize,
    own: &[StreamWindow],
) -> HazardBuilder<'a> {
    let mut builder = HazardBuilder::new();
    for lsi in &osi.aps {
        let Some(indicator) = lsi.transit(m, j) else { continue };
        let dist = instance.latency(lsi.ap, m, j);
        builder.known_jobs(dist, indicator);
        if lsi.ap == osi.ap {
            for &w in own {
                builder.stream(dist, w);
            }
        } else if lsi.actions[j] == m {
            builder.stream(dist, StreamWindow::always(instance.arrival_rate(lsi.ap, j)));
        }
    }
    builder
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedQueue {
    pub server: usize,
    pub job_type: usize,
    /// Distribution at the next boundary.
    pub queue: QueueDistribution,
    /// Hazards counted from the next boundary.
    pub hazards: ArrivalHazardSchedule,
}

/// Rolls each observed queue in `ℳ_k` forward to the next boundary, with
/// `candidate` switched in at slot `delay` of the current interval.
pub fn predict_local_state(
    osi: &ObservableState,
    delay: usize,
    candidate: &[usize],
    instance: &ValidatedInstance,
) -> Vec<PredictedQueue> {
    let cfg = instance.config();
    let k = osi.ap;
    let previous = &osi.own().actions;
    let mut out = Vec::new();
    for &m in instance.topology().candidates(k) {
        for j in 0..cfg.num_job_types {
            let own = switch_windows(previous[j], candidate[j], m, instance.arrival_rate(k, j), delay);
            let schedule = local_hazards(osi, instance, m, j, &own).build();
            let mut queue = QueueDistribution::point_mass(osi.queue_len(m, j).unwrap_or(0), cfg.max_queue_len);
            let death = instance.service().completion_prob(m, j);
            for s in 0..cfg.slots_per_interval {
                queue.step(schedule.hazard(s).unwrap_or(0.0), death);
            }
            out.push(PredictedQueue {
                server: m,
                job_type: j,
                queue,
                hazards: schedule.shifted(cfg.slots_per_interval),
            });
        }
    }
    out
}
