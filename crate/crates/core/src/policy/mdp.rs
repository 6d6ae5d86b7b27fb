use std::sync::Arc;

use super::{argmin_by, Policy, PolicyDecisionInput};
use crate::error::Result;
use crate::model::{TransitIndicator, ValidatedInstance};
use crate::partition::{greedy_partition, SubsetPartition};
use crate::valuefn::{local_hazards, switch_windows, transit_value, QueueDistribution, QueueValueEvaluator};

/// Stands in for "some server other than `m`".
const NOWHERE: usize = usize::MAX;

/// Scored candidates for one job type: `(server, objective)` in candidate
/// order.
pub type CandidateScores = Vec<(usize, f64)>;

/// Approximate-MDP dispatcher. Only the APs of the subset scheduled in the
/// current interval recompute; each scores every candidate server per job
/// type against the baseline value of its predicted local state and keeps
/// the minimizer.
#[derive(Debug, Clone)]
pub struct MdpPolicy {
    instance: Arc<ValidatedInstance>,
    partition: SubsetPartition,
    evaluator: QueueValueEvaluator,
    evaluations: u64,
}

impl MdpPolicy {
    pub fn new(instance: Arc<ValidatedInstance>) -> Self {
        let partition = greedy_partition(instance.topology());
        Self::with_partition(instance, partition)
    }

    pub fn with_partition(instance: Arc<ValidatedInstance>, partition: SubsetPartition) -> Self {
        let evaluator = QueueValueEvaluator::new(instance.config());
        Self { instance, partition, evaluator, evaluations: 0 }
    }

    pub fn partition(&self) -> &SubsetPartition {
        &self.partition
    }

    /// Candidate evaluations since construction.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Local objective of the AP's own transit to `m` plus queue `(m, j)`,
    /// with or without the AP's type-`j` stream moved to `m`.
    fn term(&mut self, input: &PolicyDecisionInput<'_>, m: usize, j: usize, candidate: usize) -> Result<f64> {
        let inst = Arc::clone(&self.instance);
        let cfg = inst.config();
        let k = input.ap;
        let own = switch_windows(input.previous[j], candidate, m, inst.arrival_rate(k, j), input.signaling_latency);
        let schedule = local_hazards(input.osi, &inst, m, j, &own).build();
        let init = QueueDistribution::point_mass(input.osi.queue_len(m, j).unwrap_or(0), cfg.max_queue_len);
        let queue = self.evaluator.value(&init, &schedule, inst.service().completion_prob(m, j))?;
        let empty = TransitIndicator::new(cfg.max_upload_latency);
        let in_flight = input.osi.own().transit(m, j).unwrap_or(&empty);
        Ok(queue + transit_value(inst.latency(k, m, j), in_flight, &own, cfg))
    }

    /// Objective of every `(j, m)` pair: the local value with type `j`
    /// moved to `m` and every other type left on its incumbent server.
    pub fn score(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<CandidateScores>> {
        let inst = Arc::clone(&self.instance);
        let candidates = inst.topology().candidates(input.ap);
        let num_types = inst.config().num_job_types;
        // on[j][i]: term for server candidates[i] when it receives type j.
        let mut on = vec![vec![0.0; candidates.len()]; num_types];
        let mut off = vec![vec![0.0; candidates.len()]; num_types];
        for j in 0..num_types {
            for (i, &m) in candidates.iter().enumerate() {
                on[j][i] = self.term(input, m, j, m)?;
                off[j][i] = self.term(input, m, j, NOWHERE)?;
                self.evaluations += 1;
            }
        }
        let incumbent_total: Vec<f64> = (0..num_types)
            .map(|j| {
                candidates
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| if m == input.previous[j] { on[j][i] } else { off[j][i] })
                    .sum()
            })
            .collect();
        let all_incumbent: f64 = incumbent_total.iter().sum();
        Ok((0..num_types)
            .map(|j| {
                let off_sum: f64 = off[j].iter().sum();
                let rest = all_incumbent - incumbent_total[j];
                candidates.iter().enumerate().map(|(i, &m)| (m, rest + off_sum - off[j][i] + on[j][i])).collect()
            })
            .collect())
    }
}

impl Policy for MdpPolicy {
    fn name(&self) -> &'static str {
        "mdp"
    }

    fn is_scheduled(&self, ap: usize, interval: u64) -> bool {
        self.partition.is_scheduled(ap, interval)
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        let scores = self.score(input)?;
        Ok(scores
            .iter()
            .map(|per_type| {
                let servers: Vec<usize> = per_type.iter().map(|&(m, _)| m).collect();
                argmin_by(&servers, |m| per_type.iter().find(|&&(s, _)| s == m).map_or(f64::INFINITY, |&(_, v)| v))
            })
            .collect())
    }
}
