use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GlobalState, ServerLsi, TransitIndicator, ValidatedInstance};
use crate::oracle::{
    enumerate_transit_value, intervals_for_tail, mc_discounted_cost, mc_queue_value, ExactChain, OracleEstimate,
    DEFAULT_BUDGET,
};
use crate::policy::{selfish_actions, MdpPolicy, Policy, PolicyDecisionInput, StaticPolicy};
use crate::sim::Simulator;
use crate::valuefn::{approx_value, transit_value, HazardBuilder, QueueDistribution, QueueValueEvaluator, StreamWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub replications: usize,
    pub queue_samples: usize,
    pub seed: u64,
    /// Bound on the truncated tail of the Monte-Carlo horizon.
    pub tail_tolerance: f64,
    /// Intervals of the decoupling audit; 0 skips it.
    pub audit_intervals: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { replications: 100_000, queue_samples: 20_000, seed: 1, tail_tolerance: 1e-3, audit_intervals: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CertifyReport {
    pub checks: Vec<CheckResult>,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult { name: name.to_string(), passed, detail });
    }
}

/// Largest stage cost any reachable state can have under Bernoulli arrivals.
pub fn max_stage_cost(instance: &ValidatedInstance) -> f64 {
    let cfg = instance.config();
    let queues = (cfg.num_processing_servers() * cfg.num_job_types) as f64;
    let flying = (cfg.num_aps * cfg.num_job_types * cfg.max_upload_latency) as f64;
    queues * (cfg.max_queue_len as f64 + cfg.overflow_penalty) + flying
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueCheck {
    pub approx: f64,
    pub estimate: OracleEstimate,
    pub intervals: usize,
    pub z: f64,
}

/// `approx_value` of the empty state under the selfish table against the
/// simulated discounted cost of holding that table.
pub fn check_value_function(instance: &ValidatedInstance, opts: &CertifyOptions) -> Result<ValueCheck> {
    let actions = selfish_actions(instance);
    let approx = approx_value(&GlobalState::empty(instance, &actions), &actions, instance)?.total;
    let intervals = intervals_for_tail(instance.config(), max_stage_cost(instance), opts.tail_tolerance);
    let make = || -> Box<dyn Policy> { Box::new(StaticPolicy) };
    let estimate = mc_discounted_cost(instance, &make, intervals, opts.replications, opts.seed)?;
    let z = (approx - estimate.mean).abs() / estimate.standard_error.max(f64::MIN_POSITIVE);
    Ok(ValueCheck { approx, estimate, intervals, z })
}

/// Value check passes within 3 SE after allowing for the truncated tail.
pub fn value_check_passes(check: &ValueCheck, tail: f64) -> bool {
    check.estimate.brackets(check.approx, 3.0, tail)
}

/// Every queue fed by the selfish table, started empty and half full.
fn check_queues(instance: &ValidatedInstance, opts: &CertifyOptions) -> Result<(bool, String)> {
    let cfg = instance.config();
    let actions = selfish_actions(instance);
    let mut evaluator = QueueValueEvaluator::new(cfg);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut cases = 0;
    for m in 0..cfg.num_processing_servers() {
        for j in 0..cfg.num_job_types {
            let mut builder = HazardBuilder::new();
            for k in 0..cfg.num_aps {
                if actions.target(k, j) == m {
                    builder.stream(instance.latency(k, m, j), StreamWindow::always(instance.arrival_rate(k, j)));
                }
            }
            let hazards = builder.build();
            let death = instance.service().completion_prob(m, j);
            for q0 in [0, cfg.max_queue_len / 2] {
                let init = QueueDistribution::point_mass(q0, cfg.max_queue_len);
                let exact = evaluator.value(&init, &hazards, death)?;
                let seed = opts.seed ^ ((m * cfg.num_job_types + j) as u64) << 8 ^ q0 as u64;
                let mc = mc_queue_value(&init, &hazards, instance.mean_proc(m, j), cfg, opts.queue_samples, seed);
                let gap = (exact - mc.mean).abs();
                let allowed = (0.02 * exact.abs()).max(3.0 * mc.standard_error) + cfg.tail_bound();
                worst = worst.max(gap / allowed.max(f64::MIN_POSITIVE));
                cases += 1;
                if gap > allowed {
                    failures += 1;
                }
            }
        }
    }
    Ok((failures == 0, format!("{cases} cases, {failures} outside tolerance, worst gap/tolerance {worst:.3}")))
}

/// Transit term of every lane carrying a stream, against enumeration.
fn check_transit(instance: &ValidatedInstance) -> (bool, String) {
    let cfg = instance.config();
    let actions = selfish_actions(instance);
    let boundaries = ((1e-13f64).ln() / cfg.discount.ln()).ceil() as usize + cfg.max_upload_latency / cfg.slots_per_interval + 2;
    let mut worst = 0.0f64;
    let mut lanes = 0;
    for k in 0..cfg.num_aps {
        for j in 0..cfg.num_job_types {
            let m = actions.target(k, j);
            let rate = instance.arrival_rate(k, j);
            let dist = instance.latency(k, m, j);
            // One known job at the largest age still in flight.
            let age = dist.max_latency().min(cfg.max_upload_latency).saturating_sub(1);
            let mut ind = TransitIndicator::new(cfg.max_upload_latency);
            ind.increment(age);
            let v = transit_value(dist, &ind, &[StreamWindow::always(rate)], cfg);
            let brute = enumerate_transit_value(dist.pmf_slice(), &[age], &[(rate, 0, None)], cfg.slots_per_interval, cfg.discount, boundaries);
            worst = worst.max((v - brute).abs());
            lanes += 1;
        }
    }
    (worst <= 1e-9, format!("{lanes} lanes, max abs gap {worst:.3e}"))
}

/// Outcome of replaying the decoupled policy against exact lookahead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditResult {
    pub decisions: u64,
    pub agreements: u64,
    /// Largest excess of the chosen row's exact value over the exact minimum.
    pub max_regret: f64,
}

struct Audited<'a> {
    inner: MdpPolicy,
    chain: ExactChain<'a>,
    instance: &'a ValidatedInstance,
    result: AuditResult,
}

fn rows(instance: &ValidatedInstance, ap: usize) -> Vec<Vec<usize>> {
    let candidates = instance.topology().candidates(ap);
    let mut out = vec![Vec::new()];
    for _ in 0..instance.config().num_job_types {
        out = out.into_iter().flat_map(|row| candidates.iter().map(move |&m| [row.clone(), vec![m]].concat())).collect();
    }
    out
}

impl Policy for Audited<'_> {
    fn name(&self) -> &'static str {
        "mdp"
    }

    fn is_scheduled(&self, ap: usize, interval: u64) -> bool {
        self.inner.is_scheduled(ap, interval)
    }

    fn decide(&mut self, input: &PolicyDecisionInput<'_>) -> Result<Vec<usize>> {
        let chosen = self.inner.decide(input)?;
        let cfg = self.instance.config();
        let servers = (0..cfg.num_processing_servers())
            .map(|m| match input.osi.server_lsi(m) {
                Some(s) => Arc::new(s.clone()),
                None => Arc::new(ServerLsi { server: m, queue_len: vec![0; cfg.num_job_types] }),
            })
            .collect();
        let gsi = GlobalState { aps: input.osi.aps.clone(), servers };
        let rows = rows(self.instance, input.ap);
        let values = self.chain.lookahead(&gsi, input.ap, input.signaling_latency, &rows)?;
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mine = values[rows.iter().position(|r| *r == chosen).expect("decision is a candidate row")];
        self.result.decisions += 1;
        if mine <= best + 1e-9 * (1.0 + best.abs()) {
            self.result.agreements += 1;
        }
        self.result.max_regret = self.result.max_regret.max(mine - best);
        Ok(chosen)
    }
}

/// Runs the MDP policy for `intervals` and checks each decision against
/// the exact lookahead minimum. Single-AP instances only.
pub fn decoupling_audit(instance: &ValidatedInstance, intervals: usize, seed: u64, budget: usize) -> Result<AuditResult> {
    if instance.config().num_aps != 1 {
        return Err(Error::InvalidArgument("decoupling audit needs a single-AP instance".into()));
    }
    let mut audited = Audited {
        inner: MdpPolicy::new(Arc::new(instance.clone())),
        chain: ExactChain::new(instance, budget),
        instance,
        result: AuditResult::default(),
    };
    let mut sim = Simulator::new(instance, seed);
    for _ in 0..intervals {
        sim.step_interval(&mut audited)?;
    }
    Ok(audited.result)
}

/// All oracle-vs-implementation checks that apply to `instance`.
pub fn certify(instance: &ValidatedInstance, opts: &CertifyOptions) -> Result<CertifyReport> {
    let mut report = CertifyReport::default();
    let (ok, detail) = check_transit(instance);
    report.push("transit_enumeration", ok, detail);
    let (ok, detail) = check_queues(instance, opts)?;
    report.push("queue_chain", ok, detail);
    let vc = check_value_function(instance, opts)?;
    report.push(
        "value_function",
        value_check_passes(&vc, opts.tail_tolerance),
        format!(
            "approx {:.6} vs simulated {:.6} ± {:.6} (T = {}, {:.2} SE)",
            vc.approx, vc.estimate.mean, vc.estimate.standard_error, vc.intervals, vc.z
        ),
    );
    if instance.config().num_aps == 1 && opts.audit_intervals > 0 {
        match decoupling_audit(instance, opts.audit_intervals, opts.seed, DEFAULT_BUDGET) {
            Ok(a) => report.push(
                "decoupling",
                a.agreements == a.decisions,
                format!("{}/{} decisions agree, max regret {:.3e}", a.agreements, a.decisions, a.max_regret),
            ),
            Err(Error::BudgetExceeded { size, budget }) => {
                report.push("decoupling", true, format!("skipped: {size} states exceed budget {budget}"))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
