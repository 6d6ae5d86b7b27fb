//! Slot-level simulation of arrivals, uploads, FCFS queues and the periodic
//! broadcast with delayed OSI delivery.

mod engine;
mod metrics;
pub mod rng;

pub use engine::{CompletedJob, InFlightJob, QueueLedger, QueuedJob, SimState, SlotOutcome};
pub use metrics::{discounted_cost, IntervalMetrics, MeanVar, RunOutput, RunSummary};

use crate::error::Result;
use crate::model::{project_osi, validate_ap_actions, DispatchActionTable, ValidatedInstance};
use crate::policy::{selfish_actions, Policy, PolicyDecisionInput};

/// A decision waiting for its AP's signaling delay to elapse.
#[derive(Debug, Clone)]
struct Pending {
    ap: usize,
    due: usize,
    actions: Vec<usize>,
}

/// Drives a [`SimState`] interval by interval under a policy.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    instance: &'a ValidatedInstance,
    state: SimState,
    actions: DispatchActionTable,
    decisions: u64,
}

impl<'a> Simulator<'a> {
    /// Empty system; every AP starts on the selfish actions.
    pub fn new(instance: &'a ValidatedInstance, seed: u64) -> Self {
        Self::with_actions(instance, seed, selfish_actions(instance))
    }

    pub fn with_actions(instance: &'a ValidatedInstance, seed: u64, actions: DispatchActionTable) -> Self {
        Self { instance, state: SimState::new(instance, seed), actions, decisions: 0 }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn actions(&self) -> &DispatchActionTable {
        &self.actions
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    /// Simulates one broadcast interval.
    ///
    /// At the boundary every AP draws a signaling delay `d`; scheduled APs
    /// are handed their OSI and the policy's answer is switched in at slot
    /// `d` of this interval (`d = t_B` means just before the next boundary).
    pub fn step_interval(&mut self, policy: &mut dyn Policy) -> Result<IntervalMetrics> {
        let instance = self.instance;
        let cfg = instance.config();
        let t_b = cfg.slots_per_interval;
        let (t, n) = self.state.clock();
        debug_assert_eq!(n, 0);

        let gsi = self.state.snapshot(instance, &self.actions);
        let mut metrics = IntervalMetrics {
            t,
            cost: self.state.cost(instance),
            jobs_in_system: self.state.jobs_in_system(),
            arrivals: 0,
            completions: 0,
            drops: 0,
            response_intervals: Vec::new(),
            response_slots: Vec::new(),
        };

        let mut pending = Vec::new();
        for k in 0..cfg.num_aps {
            let delay = self.state.sample_signaling(instance, k);
            if !policy.is_scheduled(k, t) {
                continue;
            }
            let osi = project_osi(&gsi, instance.topology(), k);
            let input = PolicyDecisionInput {
                ap: k,
                osi: &osi,
                signaling_latency: delay,
                previous: self.actions.ap(k),
                interval: t,
            };
            let actions = policy.decide(&input)?;
            self.decisions += 1;
            validate_ap_actions(instance.topology(), k, &actions, cfg.num_job_types)?;
            pending.push(Pending { ap: k, due: delay, actions });
        }

        for slot in 0..=t_b {
            for p in pending.iter().filter(|p| p.due == slot) {
                self.actions.set_ap(p.ap, p.actions.clone());
            }
            if slot == t_b {
                break;
            }
            let out = self.state.step_slot(instance, &self.actions);
            metrics.arrivals += out.arrivals;
            metrics.drops += out.drops.len() as u64;
            metrics.completions += out.completed.len() as u64;
            for job in &out.completed {
                let arrived = job.arrival_slot / t_b as u64;
                let done = job.completion_slot / t_b as u64;
                metrics.response_intervals.push((done - arrived) as u32);
                metrics.response_slots.push((job.completion_slot - job.arrival_slot) as u32);
            }
        }
        Ok(metrics)
    }
}

/// Runs `num_intervals` broadcast intervals from an empty system. The
/// policy is reset with `seed` first, so the output is a pure function of
/// the arguments.
pub fn run(
    instance: &ValidatedInstance,
    policy: &mut dyn Policy,
    num_intervals: usize,
    seed: u64,
) -> Result<RunOutput> {
    policy.reset(seed);
    let mut sim = Simulator::new(instance, seed);
    let mut intervals = Vec::with_capacity(num_intervals);
    for _ in 0..num_intervals {
        intervals.push(sim.step_interval(policy)?);
    }
    Ok(RunOutput { intervals, final_jobs_in_system: sim.state.jobs_in_system(), decisions: sim.decisions })
}
