//! Static problem instance and the snapshot types exchanged between the
//! simulator, value functions and policies.

mod builder;
mod instance;
mod state;

pub use builder::{small_config, InstanceBuilder};
pub use instance::{
    conflict_set, validate_instance, write_atomic, ArrivalModel, InstanceFile, LatencyDist, ServiceModel,
    SignalingLatencyModel, SystemConfig, Topology, TraceEvent, UploadLatencyModel, ValidatedInstance, CLOUD,
    HORIZON_TAIL_BOUND, SCHEMA_VERSION,
};
pub(crate) use state::validate_ap_actions;
pub use state::{
    project_osi, ApLsi, DispatchActionTable, GlobalState, ObservableState, ServerLsi, TransitIndicator,
};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::error::Error;

    // APs 1..3 of the worked example map to indices 0..2.
    fn three_ap_builder() -> InstanceBuilder {
        InstanceBuilder::new(small_config(3, 2, 1), vec![vec![1], vec![1, 2], vec![2]], vec![None; 3])
    }

    #[test]
    fn consistent_three_ap_instance_is_accepted() {
        let inst = three_ap_builder().build().unwrap();
        assert_eq!(inst.topology().candidates(0), &[0, 1]);
        assert_eq!(inst.topology().candidates(1), &[0, 1, 2]);
        assert_eq!(inst.topology().candidates(2), &[0, 2]);
        assert_eq!(inst.topology().potential_aps[1], vec![0, 1]);
        assert_eq!(inst.topology().potential_aps[0], vec![0, 1, 2]);
    }

    #[test]
    fn action_outside_candidate_set_is_rejected() {
        let inst = three_ap_builder().build().unwrap();
        let actions = DispatchActionTable::new(vec![vec![2], vec![1], vec![2]]);
        let err = actions.validate(inst.topology(), 1).unwrap_err();
        match err {
            Error::InvariantViolation { what, at } => {
                assert!(what.contains("candidate set"), "{what}");
                assert_eq!((at.ap, at.server, at.job_type), (Some(0), Some(2), Some(0)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unnormalized_pmf_is_rejected() {
        let err = three_ap_builder().latency(0, 1, 0, vec![0.0, 0.5, 0.48]).build().unwrap_err();
        assert!(matches!(err, Error::InvariantViolation { ref what, .. } if what.contains("normalization")), "{err}");
    }

    #[test]
    fn collocated_latency_must_be_zero() {
        let b = InstanceBuilder::new(small_config(1, 1, 1), vec![vec![1]], vec![Some(1)]);
        assert!(b.clone().build().is_ok());
        let err = b.latency(0, 1, 0, vec![0.0, 1.0]).build().unwrap_err();
        assert!(err.to_string().contains("collocated"), "{err}");
    }

    #[test]
    fn bad_config_values_are_rejected() {
        let mut cfg = small_config(1, 1, 1);
        cfg.discount = 1.0;
        assert!(InstanceBuilder::new(cfg, vec![vec![1]], vec![None]).build().is_err());
        let mut cfg = small_config(1, 1, 1);
        cfg.max_queue_len = 0;
        assert!(InstanceBuilder::new(cfg, vec![vec![1]], vec![None]).build().is_err());
    }

    #[test]
    fn signaling_support_beyond_interval_is_rejected() {
        let b = three_ap_builder().signaling(1, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(b.build().is_err());
    }

    #[test]
    fn tampered_conflict_set_is_rejected() {
        let inst = three_ap_builder().build().unwrap();
        let mut file = inst.to_file();
        file.topology.conflict_sets[0] = vec![0];
        assert!(ValidatedInstance::from_file(file).is_err());
    }

    #[test]
    fn conflict_sets_ignore_the_shared_cloud() {
        let topo = three_ap_builder().topology().clone();
        assert_eq!(conflict_set(&topo, 0), vec![0, 1]);
        assert_eq!(conflict_set(&topo, 1), vec![0, 1, 2]);
        assert_eq!(conflict_set(&topo, 2), vec![1, 2]);
        assert_eq!(topo.conflict_set(1), &[0, 1, 2]);
    }

    #[test]
    fn private_collocated_server_gives_singleton_conflict_set() {
        let b = InstanceBuilder::new(small_config(2, 2, 1), vec![vec![1], vec![2]], vec![Some(1), Some(2)]);
        let topo = b.topology();
        assert_eq!(conflict_set(topo, 0), vec![0]);
        assert_eq!(conflict_set(topo, 1), vec![1]);
    }

    fn busy_gsi(inst: &ValidatedInstance) -> GlobalState {
        let actions = DispatchActionTable::from_fn(3, 1, |k, _| inst.topology().candidates(k)[1]);
        let mut gsi = GlobalState::empty(inst, &actions);
        Arc::make_mut(&mut gsi.servers[2]).queue_len[0] = 7;
        Arc::make_mut(&mut gsi.servers[1]).queue_len[0] = 3;
        Arc::make_mut(&mut gsi.aps[1]).transit_mut(1, 0).unwrap().increment(1);
        gsi
    }

    #[test]
    fn osi_projection_scopes_to_conflict_and_candidate_sets() {
        let inst = three_ap_builder().build().unwrap();
        let gsi = busy_gsi(&inst);
        let osi = project_osi(&gsi, inst.topology(), 0);
        let ap_ids: Vec<usize> = osi.aps.iter().map(|a| a.ap).collect();
        let server_ids: Vec<usize> = osi.servers.iter().map(|s| s.server).collect();
        assert_eq!(ap_ids, vec![0, 1]);
        assert_eq!(server_ids, vec![0, 1]);
        assert_eq!(osi.queue_len(2, 0), None);
        assert_eq!(osi.queue_len(1, 0), Some(3));
        assert_eq!(osi.ap_lsi(1).unwrap().transit(1, 0).unwrap().l1_norm(), 1);
    }

    #[test]
    fn single_ap_osi_equals_gsi() {
        let inst = InstanceBuilder::new(small_config(1, 1, 2), vec![vec![1]], vec![Some(1)]).build().unwrap();
        let actions = DispatchActionTable::from_fn(1, 2, |_, _| 1);
        let mut gsi = GlobalState::empty(&inst, &actions);
        Arc::make_mut(&mut gsi.servers[1]).queue_len[1] = 4;
        let osi = project_osi(&gsi, inst.topology(), 0);
        assert_eq!(osi.aps, gsi.aps);
        assert_eq!(osi.servers, gsi.servers);
    }

    #[test]
    fn projection_is_pure() {
        let inst = three_ap_builder().build().unwrap();
        let gsi = busy_gsi(&inst);
        let before = project_osi(&gsi, inst.topology(), 1);
        let mut mutated = gsi.clone();
        Arc::make_mut(&mut mutated.servers[1]).queue_len[0] = 5;
        let _ = project_osi(&mutated, inst.topology(), 1);
        Arc::make_mut(&mut mutated.servers[1]).queue_len[0] = 3;
        assert_eq!(project_osi(&mutated, inst.topology(), 1), before);
    }

    #[test]
    fn default_horizon_matches_plug_in_arithmetic() {
        // ceil(ln(1e-3 * 0.05 / 170) / ln 0.95) = 294 = H + 1.
        assert_eq!(SystemConfig::default_horizon(0.95, 50, 120.0), 293);
        let mut cfg = small_config(1, 1, 1);
        cfg.discount = 0.95;
        cfg.max_queue_len = 50;
        cfg.overflow_penalty = 120.0;
        cfg.horizon_intervals = 293;
        assert!(cfg.tail_bound() < 1e-3);
        cfg.horizon_intervals = 292;
        assert!(cfg.tail_bound() >= 1e-3);
    }

    #[test]
    fn instance_json_round_trips() {
        let inst = three_ap_builder().arrival(1, 0, 0.25).build().unwrap();
        let text = inst.to_json().unwrap();
        let back = ValidatedInstance::from_json(&text).unwrap();
        assert_eq!(back.to_file(), inst.to_file());
    }

    #[test]
    fn trace_rate_is_empirical() {
        let model = ArrivalModel::Trace {
            events: vec![
                TraceEvent { slot: 0, ap: 0, job_type: 0, count: 3 },
                TraceEvent { slot: 5, ap: 0, job_type: 0, count: 1 },
            ],
            length_slots: 10,
        };
        assert!((model.mean_rate(0, 0) - 0.4).abs() < 1e-12);
        assert_eq!(model.mean_rate(0, 1), 0.0);
    }

    fn arb_pmf() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..8).prop_map(|w| {
            let total: f64 = w.iter().sum::<f64>() + 1e-3;
            let mut pmf = vec![0.0];
            pmf.extend(w.iter().map(|x| (x + 1e-3 / w.len() as f64) / total));
            pmf
        })
    }

    proptest! {
        #[test]
        fn latency_dist_moments_agree(pmf in arb_pmf()) {
            let d = LatencyDist::new(&pmf);
            let weighted: f64 = pmf.iter().enumerate().map(|(x, p)| x as f64 * p).sum();
            prop_assert!((d.mean() - weighted).abs() < 1e-9);
            prop_assert!((d.cum_survival(pmf.len() as i64) - weighted).abs() < 1e-9);
            prop_assert!((d.survival(0) - 1.0).abs() < 1e-9);
            for x in 0..pmf.len() {
                let u = d.cdf(x as i64) - 1e-12;
                if pmf[x] > 1e-9 {
                    prop_assert_eq!(d.sample(u.max(0.0)), x);
                }
            }
        }

        #[test]
        fn conflict_membership_is_symmetric(sets in prop::collection::vec(prop::collection::btree_set(1usize..5, 0..3), 1..6)) {
            let candidates: Vec<Vec<usize>> =
                sets.iter().map(|s| std::iter::once(0).chain(s.iter().copied()).collect()).collect();
            let k_count = candidates.len();
            let topo = Topology::new(4, candidates.clone(), vec![None; k_count]);
            for a in 0..k_count {
                prop_assert!(topo.conflict_set(a).contains(&a));
                for b in 0..k_count {
                    let shares = candidates[a].iter().any(|&m| m != 0 && candidates[b].contains(&m));
                    prop_assert_eq!(topo.conflict_set(a).contains(&b), a == b || shares);
                    prop_assert_eq!(topo.conflict_set(a).contains(&b), topo.conflict_set(b).contains(&a));
                }
            }
        }
    }
}
