use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hazard::ArrivalHazardSchedule;
use crate::error::{Coord, Error, Result};
use crate::model::SystemConfig;

/// Distribution of one queue length over `0..=L_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueDistribution {
    probs: Vec<f64>,
}

impl QueueDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| p < 0.0 || p.is_nan()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invariant(format!("queue distribution sums to {total}"), Coord::default()));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(q: usize, max_queue_len: usize) -> Self {
        let mut probs = vec![0.0; max_queue_len + 1];
        probs[q.min(max_queue_len)] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_queue_len(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(q, p)| q as f64 * p).sum()
    }

    /// `E[Q + β·I[Q = L_max]]`.
    pub fn expected_cost(&self, overflow_penalty: f64) -> f64 {
        self.mean() + overflow_penalty * self.probs[self.max_queue_len()]
    }

    /// One slot of the birth-death chain: at most one delivery (probability
    /// `birth`), then a completion with probability `death` if the queue was
    /// nonempty when the slot began. A delivery into a full queue is lost.
    pub fn step(&mut self, birth: f64, death: f64) {
        let mut next = vec![0.0; self.probs.len()];
        step_into(&self.probs, &mut next, birth, death);
        self.probs = next;
    }
}

pub(crate) fn step_into(p: &[f64], out: &mut [f64], a: f64, mu: f64) {
    let cap = p.len() - 1;
    out.fill(0.0);
    out[1.min(cap)] += p[0] * a;
    out[0] += p[0] * (1.0 - a);
    for q in 1..=cap {
        let mass = p[q];
        if mass == 0.0 {
            continue;
        }
        let up = (q + 1).min(cap);
        out[up - 1] += mass * a * mu;
        out[up] += mass * a * (1.0 - mu);
        out[q - 1] += mass * (1.0 - a) * mu;
        out[q] += mass * (1.0 - a) * (1.0 - mu);
    }
}

/// Discounted queue cost `Σ_{b≥1} γ^b E[Q_b + β·I[Q_b = L_max]]` sampled at
/// interval boundaries.
///
/// When the schedule has a stationary tail the sum is closed exactly with
/// `(I − γ P^{t_B})^{-1} f`; otherwise it is truncated after the configured
/// horizon. Stationary solutions are cached per `(a, μ)`.
#[derive(Debug, Clone)]
pub struct QueueValueEvaluator {
    slots_per_interval: usize,
    max_queue_len: usize,
    overflow_penalty: f64,
    discount: f64,
    horizon: usize,
    cost: Vec<f64>,
    cache: HashMap<(u64, u64), Arc<DVector<f64>>>,
}

impl QueueValueEvaluator {
    pub fn new(config: &SystemConfig) -> Self {
        let cost = (0..=config.max_queue_len)
            .map(|q| q as f64 + if q == config.max_queue_len { config.overflow_penalty } else { 0.0 })
            .collect();
        Self {
            slots_per_interval: config.slots_per_interval,
            max_queue_len: config.max_queue_len,
            overflow_penalty: config.overflow_penalty,
            discount: config.discount,
            horizon: config.horizon_intervals,
            cost,
            cache: HashMap::new(),
        }
    }

    pub fn value(&mut self, init: &QueueDistribution, hazards: &ArrivalHazardSchedule, death: f64) -> Result<f64> {
        if init.max_queue_len() != self.max_queue_len {
            return Err(Error::invariant("queue distribution length does not match L_max", Coord::default()));
        }
        let t_b = self.slots_per_interval;
        let (intervals, closing) = match hazards.tail() {
            Some(a) => (hazards.transient().len().div_ceil(t_b).max(1), Some(a)),
            None => {
                let need = self.horizon * t_b;
                if hazards.transient().len() < need {
                    return Err(Error::ScheduleTooShort { have: hazards.transient().len(), need });
                }
                (self.horizon, None)
            }
        };

        let mut p = init.probs.clone();
        let mut scratch = vec![0.0; p.len()];
        let mut total = 0.0;
        let mut weight = 1.0;
        let mut s = 0;
        for b in 1..=intervals {
            for _ in 0..t_b {
                let a = hazards.hazard(s).expect("schedule coverage checked above");
                step_into(&p, &mut scratch, a, death);
                std::mem::swap(&mut p, &mut scratch);
                s += 1;
            }
            weight *= self.discount;
            if b < intervals || closing.is_none() {
                total += weight * dot(&p, &self.cost);
            }
        }
        if let Some(a) = closing {
            let h = self.stationary(a, death);
            total += weight * dot(&p, h.as_slice());
        }
        Ok(total)
    }

    /// `h = Σ_{i≥0} γ^i P_B^i f` for constant hazard `a`.
    fn stationary(&mut self, a: f64, death: f64) -> Arc<DVector<f64>> {
        let key = (a.to_bits(), death.to_bits());
        if let Some(h) = self.cache.get(&key) {
            return Arc::clone(h);
        }
        let n = self.max_queue_len + 1;
        // Row q of P_B is the interval-ahead distribution from point mass q.
        let mut p_b = DMatrix::<f64>::zeros(n, n);
        let mut row = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for q in 0..n {
            row.fill(0.0);
            row[q] = 1.0;
            for _ in 0..self.slots_per_interval {
                step_into(&row, &mut scratch, a, death);
                std::mem::swap(&mut row, &mut scratch);
            }
            for (q2, &v) in row.iter().enumerate() {
                p_b[(q, q2)] = v;
            }
        }
        let system = DMatrix::<f64>::identity(n, n) - p_b * self.discount;
        let f = DVector::from_vec(self.cost.clone());
        let h = system.lu().solve(&f).expect("I − γP is nonsingular for γ < 1");
        // Clear round-off below zero.
        let h = Arc::new(h.map(|x| x.max(0.0)));
        self.cache.insert(key, Arc::clone(&h));
        h
    }

    pub fn overflow_penalty(&self) -> f64 {
        self.overflow_penalty
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-shot [`QueueValueEvaluator::value`] with death probability `1/c`.
pub fn queue_value(
    init: &QueueDistribution,
    hazards: &ArrivalHazardSchedule,
    mean_proc: f64,
    config: &SystemConfig,
) -> Result<f64> {
    QueueValueEvaluator::new(config).value(init, hazards, 1.0 / mean_proc)
}
