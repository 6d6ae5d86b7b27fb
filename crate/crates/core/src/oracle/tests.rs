use std::sync::Arc;

use super::*;
use crate::model::{project_osi, small_config, InstanceBuilder, CLOUD};
use crate::policy::{MdpPolicy, PolicyDecisionInput, StaticPolicy};

fn static_policy() -> Box<dyn Policy> {
    Box::new(StaticPolicy)
}

fn collocated_single(t_b: usize, lambda: f64, c: f64) -> ValidatedInstance {
    let mut cfg = small_config(1, 1, 1);
    cfg.slots_per_interval = t_b;
    InstanceBuilder::new(cfg, vec![vec![1]], vec![Some(1)]).arrival(0, 0, lambda).mean_proc_all(c).build().unwrap()
}

/// One AP, one edge server at upload 1, cloud at upload 2; `L = 2`, `t_B = 2`.
fn tiny(lambda: f64, c_edge: f64, c_cloud: f64) -> ValidatedInstance {
    let mut cfg = small_config(1, 1, 1);
    cfg.max_queue_len = 2;
    cfg.max_upload_latency = 2;
    InstanceBuilder::new(cfg, vec![vec![1]], vec![None])
        .arrival(0, 0, lambda)
        .fixed_latency(0, 1, 1)
        .fixed_latency(0, CLOUD, 2)
        .mean_proc(1, 0, c_edge)
        .mean_proc(CLOUD, 0, c_cloud)
        .build()
        .unwrap()
}

#[test]
fn idle_system_costs_nothing() {
    let inst = collocated_single(2, 0.0, 2.0);
    let est = mc_discounted_cost(&inst, &static_policy, 30, 16, 1).unwrap();
    assert_eq!(est.mean, 0.0);
    assert_eq!(est.standard_error, 0.0);
    assert_eq!(est.num_samples, 16);
}

#[test]
fn saturated_unit_server_matches_closed_form() {
    let inst = collocated_single(1, 1.0, 1.0);
    let (gamma, t) = (inst.config().discount, 60);
    let est = mc_discounted_cost(&inst, &static_policy, t, 8, 3).unwrap();
    let want = gamma * (1.0 - gamma.powi(t as i32 - 1)) / (1.0 - gamma);
    assert!((est.mean - want).abs() < 1e-12, "{} vs {want}", est.mean);
    assert_eq!(est.standard_error, 0.0);
}

#[test]
fn deterministic_queue_chain_has_one_path() {
    let cfg = {
        let mut c = small_config(1, 1, 1);
        c.slots_per_interval = 3;
        c
    };
    let h = ArrivalHazardSchedule::constant(1.0).unwrap();
    let est = mc_queue_value(&QueueDistribution::point_mass(0, 5), &h, 1.0, &cfg, 64, 2);
    // Births every slot and services from slot 1 on hold the queue at one job.
    let horizon = cfg.horizon_intervals as i32;
    let want = cfg.discount * (1.0 - cfg.discount.powi(horizon)) / (1.0 - cfg.discount);
    assert!((est.mean - want).abs() < 1e-12);
    assert!(est.standard_error < 1e-12);
}

#[test]
fn doubling_replications_shrinks_error_by_root_two() {
    let inst = collocated_single(2, 0.4, 2.0);
    let a = mc_discounted_cost(&inst, &static_policy, 40, 4_000, 5).unwrap();
    let b = mc_discounted_cost(&inst, &static_policy, 40, 8_000, 6).unwrap();
    let ratio = a.standard_error / b.standard_error;
    assert!((1.3..=1.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn tail_intervals_bound_the_remainder() {
    let cfg = small_config(1, 1, 1);
    let t = intervals_for_tail(&cfg, 15.0, 1e-3);
    assert!(cfg.discount.powi(t as i32) * 15.0 / (1.0 - cfg.discount) < 1e-3);
    assert!(cfg.discount.powi(t as i32 - 1) * 15.0 / (1.0 - cfg.discount) >= 1e-3);
}

#[test]
fn exact_chain_agrees_with_simulation() {
    let inst = tiny(0.5, 2.0, 1.5);
    let actions = DispatchActionTable::new(vec![vec![1]]);
    let gsi = GlobalState::empty(&inst, &actions);
    let exact = exact_baseline_value(&inst, &gsi).unwrap();
    let make = || -> Box<dyn Policy> { Box::new(StaticPolicy) };
    // Simulator starts on the selfish table; pin it to the same row.
    assert_eq!(crate::policy::selfish_actions(&inst), actions);
    let t = intervals_for_tail(inst.config(), 2.0 + 2.0 + inst.config().overflow_penalty * 2.0, 1e-4);
    let mc = mc_discounted_cost(&inst, &make, t, 20_000, 8).unwrap();
    assert!(mc.brackets(exact, 4.0, 1e-4), "exact {exact} vs {mc:?}");
}

#[test]
fn holding_the_current_row_is_a_fixed_point() {
    let inst = tiny(0.6, 2.5, 1.5);
    let actions = DispatchActionTable::new(vec![vec![1]]);
    let mut gsi = GlobalState::empty(&inst, &actions);
    Arc::make_mut(&mut gsi.servers[1]).queue_len[0] = 1;
    let mut chain = ExactChain::new(&inst, DEFAULT_BUDGET);
    let base = chain.baseline_value(&gsi).unwrap();
    let look = chain.lookahead(&gsi, 0, 0, &[vec![1]]).unwrap();
    assert!((base - look[0]).abs() < 1e-9 * (1.0 + base), "{base} vs {}", look[0]);
}

#[test]
fn lookahead_matches_mdp_scores_on_a_decoupled_instance() {
    let inst = Arc::new(tiny(0.55, 2.0, 1.25));
    for (q_edge, q_cloud, previous) in [(0, 0, 1), (2, 0, 1), (1, 2, CLOUD), (2, 1, CLOUD)] {
        let actions = DispatchActionTable::new(vec![vec![previous]]);
        let mut gsi = GlobalState::empty(&inst, &actions);
        Arc::make_mut(&mut gsi.servers[1]).queue_len[0] = q_edge;
        Arc::make_mut(&mut gsi.servers[CLOUD]).queue_len[0] = q_cloud;
        let exact = exhaustive_lookahead(&inst, &gsi, 0, 0, &[vec![CLOUD], vec![1]]).unwrap();
        let osi = project_osi(&gsi, inst.topology(), 0);
        let input = PolicyDecisionInput { ap: 0, osi: &osi, signaling_latency: 0, previous: &[previous], interval: 0 };
        let scores = MdpPolicy::new(Arc::clone(&inst)).score(&input).unwrap();
        for (i, m) in [CLOUD, 1].into_iter().enumerate() {
            let approx = scores[0].iter().find(|s| s.0 == m).unwrap().1;
            assert!((approx - exact[i]).abs() < 1e-9 * (1.0 + exact[i]), "state ({q_edge},{q_cloud},{previous}) m={m}: {approx} vs {}", exact[i]);
        }
    }
}

#[test]
fn exact_lookahead_leaves_a_saturated_server() {
    let mut cfg = small_config(1, 2, 1);
    cfg.max_queue_len = 3;
    cfg.overflow_penalty = 40.0;
    let inst = InstanceBuilder::new(cfg, vec![vec![1, 2]], vec![Some(1)])
        .arrival(0, 0, 0.6)
        .mean_proc(1, 0, 6.0)
        .mean_proc(2, 0, 1.2)
        .mean_proc(CLOUD, 0, 30.0)
        .build()
        .unwrap();
    let actions = DispatchActionTable::new(vec![vec![1]]);
    let mut gsi = GlobalState::empty(&inst, &actions);
    Arc::make_mut(&mut gsi.servers[1]).queue_len[0] = 3;
    let v = exhaustive_lookahead(&inst, &gsi, 0, 0, &[vec![1], vec![2]]).unwrap();
    assert!(v[1] < v[0], "{v:?}");
}

#[test]
fn oversized_enumeration_is_refused() {
    let inst = tiny(0.5, 2.0, 1.5);
    let gsi = GlobalState::empty(&inst, &DispatchActionTable::new(vec![vec![1]]));
    let err = ExactChain::new(&inst, 3).baseline_value(&gsi).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { budget: 3, .. }));
}

#[test]
fn enumerated_transit_counts_whole_uploads() {
    // One job of latency 5 dispatched at slot 0 with t_B = 2 is in flight
    // at the boundaries in slots 2 and 4.
    let pmf = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    let v = enumerate_transit_value(&pmf, &[0], &[], 2, 0.5, 10);
    assert!((v - 0.75).abs() < 1e-15);
}
