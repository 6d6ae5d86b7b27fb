//! Reference estimators: replicated simulation, a Monte-Carlo single-queue
//! chain, and exact enumeration of the joint state for tiny instances.
//! Nothing here calls into `valuefn` or `policy` scoring.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DispatchActionTable, GlobalState, SystemConfig, ValidatedInstance};
use crate::policy::Policy;
use crate::sim::rng::{derive_seed, stream, StreamKind};
use crate::sim::{discounted_cost, run};
use crate::valuefn::{ArrivalHazardSchedule, QueueDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub num_samples: u64,
}

impl OracleEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, standard_error: (var / n).sqrt(), num_samples: samples.len() as u64 }
    }

    /// Whether `value` lies within `k` standard errors (and an absolute
    /// floor `atol`) of the mean.
    pub fn brackets(&self, value: f64, k: f64, atol: f64) -> bool {
        (value - self.mean).abs() <= k * self.standard_error + atol
    }
}

/// Intervals needed so that `γ^T · g_max / (1 − γ)` drops below `tol`.
pub fn intervals_for_tail(config: &SystemConfig, g_max: f64, tol: f64) -> usize {
    let gamma = config.discount;
    let mut t = 0usize;
    let mut w = g_max / (1.0 - gamma);
    while w >= tol {
        w *= gamma;
        t += 1;
    }
    t
}

/// `Σ_{t<T} γ^t g(t)` averaged over independent runs from the empty state.
/// Replication `r` uses seed `derive(seed, r)`.
pub fn mc_discounted_cost(
    instance: &ValidatedInstance,
    make_policy: &(dyn Fn() -> Box<dyn Policy> + Sync),
    intervals: usize,
    replications: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    let gamma = instance.config().discount;
    let samples: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut policy = make_policy();
            let out = run(instance, policy.as_mut(), intervals, derive_seed(seed, StreamKind::Replication, r as u64))?;
            Ok(discounted_cost(&out.intervals, gamma, intervals))
        })
        .collect::<Result<_>>()?;
    Ok(OracleEstimate::from_samples(&samples))
}

/// Monte-Carlo of one queue driven by `hazards`, death probability `1/c`,
/// sampled at boundaries over the configured horizon.
pub fn mc_queue_value(
    init: &QueueDistribution,
    hazards: &ArrivalHazardSchedule,
    mean_proc: f64,
    config: &SystemConfig,
    samples: usize,
    seed: u64,
) -> OracleEstimate {
    let death = 1.0 / mean_proc;
    let cap = config.max_queue_len;
    let t_b = config.slots_per_interval;
    let horizon = match hazards.coverage() {
        Some(len) => (len / t_b).min(config.horizon_intervals),
        None => config.horizon_intervals,
    };
    let init_cdf: Vec<f64> = init
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(derive_seed(seed, StreamKind::Replication, i as u64), StreamKind::Service, 0);
            let u: f64 = rng.random();
            let mut q = init_cdf.iter().position(|&c| u < c).unwrap_or(cap);
            let mut total = 0.0;
            let mut weight = 1.0;
            let mut s = 0;
            for _ in 0..horizon {
                for _ in 0..t_b {
                    let start = q;
                    let a = hazards.hazard(s).unwrap_or(0.0);
                    if rng.random::<f64>() < a && q < cap {
                        q += 1;
                    }
                    if rng.random::<f64>() < death && start > 0 {
                        q -= 1;
                    }
                    s += 1;
                }
                weight *= config.discount;
                total += weight * (q as f64 + if q == cap { config.overflow_penalty } else { 0.0 });
            }
            total
        })
        .collect();
    OracleEstimate::from_samples(&values)
}

/// Reference for the transit term: enumerates every latency outcome of
/// every job (known ages, then each dispatch slot of each window) and
/// counts the boundaries at which it is still uploading, up to
/// `boundaries`.
pub fn enumerate_transit_value(
    pmf: &[f64],
    ages: &[usize],
    windows: &[(f64, usize, Option<usize>)],
    slots_per_interval: usize,
    discount: f64,
    boundaries: usize,
) -> f64 {
    let in_flight_value = |dispatched: i64, latency: usize| -> f64 {
        // Uploading at boundary B iff dispatched < B <= dispatched + latency.
        let t_b = slots_per_interval as i64;
        let mut total = 0.0;
        let mut b = (dispatched.div_euclid(t_b) + 1).max(1);
        while b as usize <= boundaries && b * t_b <= dispatched + latency as i64 {
            total += discount.powi(b as i32);
            b += 1;
        }
        total
    };
    let mut total = 0.0;
    for &age in ages {
        let alive: f64 = pmf.iter().skip(age).sum();
        if alive <= 0.0 {
            continue;
        }
        for (latency, &p) in pmf.iter().enumerate().skip(age) {
            total += p / alive * in_flight_value(-(age as i64), latency);
        }
    }
    let last = (boundaries * slots_per_interval) as i64;
    for &(rate, start, end) in windows {
        let stop = end.map_or(last, |e| (e as i64).min(last));
        for dispatched in start as i64..stop {
            for (latency, &p) in pmf.iter().enumerate() {
                total += rate * p * in_flight_value(dispatched, latency);
            }
        }
    }
    total
}

/// Exact joint state: queue lengths and in-flight counts by age, flattened.
type Key = Vec<u8>;

/// Enumerates the exact slot dynamics of a tiny instance.
#[derive(Debug, Clone)]
pub struct ExactChain<'a> {
    instance: &'a ValidatedInstance,
    /// `(k, m, j)` per in-flight block, in a fixed order.
    lanes: Vec<(usize, usize, usize)>,
    lane_of: HashMap<(usize, usize, usize), usize>,
    ages: usize,
    queues: usize,
    budget: usize,
    cache: HashMap<DispatchActionTable, HashMap<Key, f64>>,
}

impl<'a> ExactChain<'a> {
    /// `budget` bounds the number of distinct states held at once.
    pub fn new(instance: &'a ValidatedInstance, budget: usize) -> Self {
        let cfg = instance.config();
        let topo = instance.topology();
        let mut lanes = Vec::new();
        for k in 0..cfg.num_aps {
            for &m in topo.candidates(k) {
                for j in 0..cfg.num_job_types {
                    lanes.push((k, m, j));
                }
            }
        }
        let lane_of = lanes.iter().enumerate().map(|(i, &lane)| (lane, i)).collect();
        Self {
            instance,
            lanes,
            lane_of,
            ages: cfg.max_upload_latency + 1,
            queues: cfg.num_processing_servers() * cfg.num_job_types,
            budget,
            cache: HashMap::new(),
        }
    }

    pub fn encode(&self, gsi: &GlobalState) -> Key {
        let cfg = self.instance.config();
        let mut key = Vec::with_capacity(self.queues + self.lanes.len() * self.ages);
        for m in 0..cfg.num_processing_servers() {
            for j in 0..cfg.num_job_types {
                key.push(gsi.queue_len(m, j) as u8);
            }
        }
        for &(k, m, j) in &self.lanes {
            let indicator = gsi.aps[k].transit(m, j).expect("lane has an indicator");
            key.extend(indicator.counts().iter().map(|&c| c as u8));
        }
        key
    }

    fn cost(&self, key: &Key) -> f64 {
        let cfg = self.instance.config();
        let queued: f64 = key[..self.queues]
            .iter()
            .map(|&q| f64::from(q) + if usize::from(q) == cfg.max_queue_len { cfg.overflow_penalty } else { 0.0 })
            .sum();
        let flying: f64 = key[self.queues..].iter().map(|&c| f64::from(c)).sum();
        queued + flying
    }

    fn guard(&self, size: usize) -> Result<()> {
        if size > self.budget {
            return Err(Error::BudgetExceeded { size, budget: self.budget });
        }
        Ok(())
    }

    /// Distribution after one slot under `actions`.
    fn step(&self, dist: HashMap<Key, f64>, actions: &DispatchActionTable) -> Result<HashMap<Key, f64>> {
        let inst = self.instance;
        let cfg = inst.config();
        let jobs = cfg.num_job_types;
        let q_off = |m: usize, j: usize| m * jobs + j;
        let f_off = |lane: usize, age: usize| self.queues + lane * self.ages + age;

        // Scratch tail of the key: one served flag per queue.
        let mut cur: HashMap<Key, f64> = dist
            .into_iter()
            .map(|(mut k, p)| {
                k.extend(std::iter::repeat_n(0u8, self.queues));
                (k, p)
            })
            .collect();
        let flag = |q: usize| self.queues + self.lanes.len() * self.ages + q;
        let branch = |cur: HashMap<Key, f64>, f: &dyn Fn(&Key) -> Vec<(Key, f64)>| -> Result<HashMap<Key, f64>> {
            let mut next: HashMap<Key, f64> = HashMap::with_capacity(cur.len() * 2);
            for (key, p) in cur {
                for (k2, w) in f(&key) {
                    if w > 0.0 {
                        *next.entry(k2).or_insert(0.0) += p * w;
                    }
                }
            }
            self.guard(next.len())?;
            Ok(next)
        };

        // Service coins depend only on the length at slot start.
        for m in 0..cfg.num_processing_servers() {
            for j in 0..jobs {
                let mu = inst.service().completion_prob(m, j);
                cur = branch(cur, &|key| {
                    if key[q_off(m, j)] == 0 {
                        return vec![(key.clone(), 1.0)];
                    }
                    let mut served = key.clone();
                    served[q_off(m, j)] -= 1;
                    served[flag(q_off(m, j))] = 1;
                    vec![(served, mu), (key.clone(), 1.0 - mu)]
                })?;
            }
        }
        // Arrivals start at age 0.
        for k in 0..cfg.num_aps {
            for j in 0..jobs {
                let lambda = inst.arrival_rate(k, j);
                if lambda <= 0.0 {
                    continue;
                }
                let lane = self.lane_of[&(k, actions.target(k, j), j)];
                cur = branch(cur, &|key| {
                    let mut arrived = key.clone();
                    arrived[f_off(lane, 0)] += 1;
                    vec![(arrived, lambda), (key.clone(), 1.0 - lambda)]
                })?;
            }
        }
        // Deliveries by age hazard; survivors age by one.
        for (lane, &(k, m, j)) in self.lanes.iter().enumerate() {
            let dist = inst.latency(k, m, j);
            let q = q_off(m, j);
            for age in (0..self.ages).rev() {
                let h = dist.delivery_hazard(age);
                cur = branch(cur, &|key| {
                    let c = key[f_off(lane, age)];
                    if c == 0 {
                        return vec![(key.clone(), 1.0)];
                    }
                    let mut out = Vec::with_capacity(usize::from(c) + 1);
                    for d in 0..=c {
                        let w = binomial(c, d, h);
                        if w == 0.0 {
                            continue;
                        }
                        let mut k2 = key.clone();
                        k2[f_off(lane, age)] = 0;
                        if c > d {
                            debug_assert!(age + 1 < self.ages, "job outlived the latency support");
                            k2[f_off(lane, (age + 1).min(self.ages - 1))] += c - d;
                        }
                        let room = cfg.max_queue_len - usize::from(k2[flag(q)]);
                        k2[q] = (usize::from(k2[q]) + usize::from(d)).min(room) as u8;
                        out.push((k2, w));
                    }
                    out
                })?;
            }
        }
        let mut next: HashMap<Key, f64> = HashMap::with_capacity(cur.len());
        for (mut key, p) in cur {
            key.truncate(self.queues + self.lanes.len() * self.ages);
            *next.entry(key).or_insert(0.0) += p;
        }
        Ok(next)
    }

    /// Distribution one interval ahead; `switch_to` replaces `before` from
    /// slot `switch_slot` on.
    pub fn interval(
        &self,
        start: &Key,
        before: &DispatchActionTable,
        switch_to: &DispatchActionTable,
        switch_slot: usize,
    ) -> Result<HashMap<Key, f64>> {
        let mut dist = HashMap::from([(start.clone(), 1.0)]);
        for s in 0..self.instance.config().slots_per_interval {
            let actions = if s < switch_slot { before } else { switch_to };
            dist = self.step(dist, actions)?;
        }
        Ok(dist)
    }

    /// `Σ_{b≥1} γ^b E[g(S_b)]` from `start` holding `actions` forever,
    /// solved exactly over the reachable closure.
    pub fn hold_value(&mut self, start: &Key, actions: &DispatchActionTable) -> Result<f64> {
        if let Some(v) = self.cache.get(actions).and_then(|vals| vals.get(start)) {
            return Ok(*v);
        }
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut states: Vec<Key> = Vec::new();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let known = self.cache.get(actions).cloned().unwrap_or_default();
        index.insert(start.clone(), 0);
        states.push(start.clone());
        let mut frontier = 0;
        while frontier < states.len() {
            let key = states[frontier].clone();
            let mut row = Vec::new();
            if !known.contains_key(&key) {
                for (next, p) in self.interval(&key, actions, actions, 0)? {
                    let id = *index.entry(next.clone()).or_insert_with(|| {
                        states.push(next);
                        states.len() - 1
                    });
                    row.push((id, p));
                }
            }
            rows.push(row);
            frontier += 1;
            self.guard(states.len())?;
        }
        // V = γ T (g + V); states already solved enter as constants.
        let n = states.len();
        let gamma = self.instance.config().discount;
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if let Some(v) = known.get(&states[i]) {
                rhs[i] = *v;
                continue;
            }
            for &(id, p) in row {
                rhs[i] += gamma * p * self.cost(&states[id]);
                a[(i, id)] -= gamma * p;
            }
        }
        let v = a.lu().solve(&rhs).expect("I − γT is nonsingular");
        let entry = self.cache.entry(actions.clone()).or_default();
        for (i, key) in states.into_iter().enumerate() {
            entry.insert(key, v[i]);
        }
        Ok(v[0])
    }

    /// Exact value of holding the snapshot's own actions.
    pub fn baseline_value(&mut self, gsi: &GlobalState) -> Result<f64> {
        let key = self.encode(gsi);
        self.hold_value(&key, &gsi.actions())
    }

    /// For each candidate row of AP `ap`, switched in at slot `delay`:
    /// `γ E[g(S_1) + W(S_1)]` with `S_1` enumerated exactly and `W` the
    /// exact hold value of the resulting table.
    pub fn lookahead(
        &mut self,
        gsi: &GlobalState,
        ap: usize,
        delay: usize,
        candidates: &[Vec<usize>],
    ) -> Result<Vec<f64>> {
        let start = self.encode(gsi);
        let before = gsi.actions();
        let gamma = self.instance.config().discount;
        candidates
            .iter()
            .map(|row| {
                let mut after = before.clone();
                after.set_ap(ap, row.clone());
                let next = self.interval(&start, &before, &after, delay)?;
                let mut total = 0.0;
                for (key, p) in &next {
                    total += p * (self.cost(key) + self.hold_value(key, &after)?);
                }
                Ok(gamma * total)
            })
            .collect()
    }
}

fn binomial(n: u8, k: u8, p: f64) -> f64 {
    let mut coeff = 1.0;
    for i in 0..k {
        coeff = coeff * f64::from(n - i) / f64::from(i + 1);
    }
    coeff * p.powi(i32::from(k)) * (1.0 - p).powi(i32::from(n - k))
}

/// Default cap on enumerated states.
pub const DEFAULT_BUDGET: usize = 20_000;

/// Per-candidate exact one-interval lookahead with exact continuation.
pub fn exhaustive_lookahead(
    instance: &ValidatedInstance,
    gsi: &GlobalState,
    ap: usize,
    delay: usize,
    candidates: &[Vec<usize>],
) -> Result<Vec<f64>> {
    ExactChain::new(instance, DEFAULT_BUDGET).lookahead(gsi, ap, delay, candidates)
}

/// Exact discounted cost of holding the snapshot's actions.
pub fn exact_baseline_value(instance: &ValidatedInstance, gsi: &GlobalState) -> Result<f64> {
    ExactChain::new(instance, DEFAULT_BUDGET).baseline_value(gsi)
}

#[cfg(test)]
mod tests;
