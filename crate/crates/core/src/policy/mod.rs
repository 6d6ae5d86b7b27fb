//! Dispatching policies. Every policy maps one AP's OSI and signaling delay
//! to that AP's next per-type targets.

mod mdp;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use mdp::MdpPolicy;

use crate::error::{Error, Result};
use crate::model::{DispatchActionTable, ObservableState, ValidatedInstance};
use crate::sim::rng::{stream, StreamKind};

pub const POLICY_NAMES: [&str; 5] = ["static", "random", "selfish", "queue_aware", "mdp"];

#[derive(Debug, Clone, Copy)]
pub struct PolicyDecisionInput<'a> {
    pub ap: usize,
    pub osi: &'a ObservableState,
    /// Slots into the interval at which the OSI arrived.
    pub signaling_latency: usize,
    /// `𝒜_k(t)`, one target per job type.
    pub previous: &'a [usize],
    pub interval: u64,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Re-seeds any private randomness before a run.
    fn reset(&mut self, _seed: u64) {}

    /// Whether AP `ap` recomputes in interval `t`. Unscheduled APs keep
    /// their previous actions.
    fn is_scheduled(&self, _ap: usize, _interval: u64) -> bool {
        true
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>>;
}

/// Lowest-index minimizer. A later candidate wins only if it is better by
/// more than a relative 1e-9.
pub fn argmin_by(candidates: &[usize], mut score: impl FnMut(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_value = score(best);
    for &m in &candidates[1..] {
        let value = score(m);
        if value < best_value - 1e-9 * (1.0 + best_value.abs()) {
            best = m;
            best_value = value;
        }
    }
    best
}

fn selfish_target(instance: &ValidatedInstance, k: usize, j: usize) -> usize {
    argmin_by(instance.topology().candidates(k), |m| instance.mean_upload(k, m, j) + instance.mean_proc(m, j))
}

/// `argmin_m (u_{k,m,j} + c_{m,j})` for every AP and job type. Used as the
/// starting actions of every run.
pub fn selfish_actions(instance: &ValidatedInstance) -> DispatchActionTable {
    let cfg = instance.config();
    DispatchActionTable::from_fn(cfg.num_aps, cfg.num_job_types, |k, j| selfish_target(instance, k, j))
}

/// Keeps whatever the AP did last interval.
#[derive(Debug, Clone, Default)]
pub struct StaticPolicy;

impl Policy for StaticPolicy {
    fn name(&self) -> &'static str {
        "static"
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        Ok(input.previous.to_vec())
    }
}

/// Uniform over the candidate set, per job type, every interval.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    instance: Arc<ValidatedInstance>,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(instance: Arc<ValidatedInstance>, seed: u64) -> Self {
        Self { instance, rng: stream(seed, StreamKind::Policy, 0) }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed, StreamKind::Policy, 0);
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        let candidates = self.instance.topology().candidates(input.ap);
        Ok((0..self.instance.config().num_job_types).map(|_| candidates[self.rng.random_range(0..candidates.len())]).collect())
    }
}

/// Shortest expected upload plus processing time, ignoring queues.
#[derive(Debug, Clone)]
pub struct SelfishPolicy {
    instance: Arc<ValidatedInstance>,
}

impl SelfishPolicy {
    pub fn new(instance: Arc<ValidatedInstance>) -> Self {
        Self { instance }
    }
}

impl Policy for SelfishPolicy {
    fn name(&self) -> &'static str {
        "selfish"
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        Ok((0..self.instance.config().num_job_types).map(|j| selfish_target(&self.instance, input.ap, j)).collect())
    }
}

/// Selfish plus an observed-queue waiting estimate `Q_{m,j}·c_{m,j}`.
#[derive(Debug, Clone)]
pub struct QueueAwarePolicy {
    instance: Arc<ValidatedInstance>,
}

impl QueueAwarePolicy {
    pub fn new(instance: Arc<ValidatedInstance>) -> Self {
        Self { instance }
    }
}

impl Policy for QueueAwarePolicy {
    fn name(&self) -> &'static str {
        "queue_aware"
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        let inst = &self.instance;
        let k = input.ap;
        Ok((0..inst.config().num_job_types)
            .map(|j| {
                argmin_by(inst.topology().candidates(k), |m| {
                    let q = input.osi.queue_len(m, j).unwrap_or(0) as f64;
                    let c = inst.mean_proc(m, j);
                    inst.mean_upload(k, m, j) + c + q * c
                })
            })
            .collect())
    }
}

/// Builds a policy by its CLI name.
pub fn make_policy(name: &str, instance: Arc<ValidatedInstance>, seed: u64) -> Result<Box<dyn Policy>> {
    Ok(match name {
        "static" => Box::new(StaticPolicy),
        "random" => Box::new(RandomPolicy::new(instance, seed)),
        "selfish" => Box::new(SelfishPolicy::new(instance)),
        "queue_aware" => Box::new(QueueAwarePolicy::new(instance)),
        "mdp" => Box::new(MdpPolicy::new(instance)),
        other => return Err(Error::UnknownPolicy(other.to_string())),
    })
}
