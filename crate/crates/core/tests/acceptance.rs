//! One PASS/FAIL line per acceptance criterion.
//!
//! `cargo test --test acceptance -- 2 3` runs a subset. The binary exits 0
//! even when a criterion fails unless `ACCEPTANCE_STRICT=1` is set.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgedisp::harness::certify::{check_value_function, value_check_passes};
use edgedisp::harness::{
    decoupling_audit, generate_instance, run_experiment, CertifyOptions, ExperimentSpec, GeneratorSpec, InstanceSource,
    ResultBundle, Sweep,
};
use edgedisp::model::{small_config, InstanceBuilder, LatencyDist, SystemConfig, TransitIndicator, ValidatedInstance, CLOUD, SCHEMA_VERSION};
use edgedisp::oracle::{enumerate_transit_value, mc_queue_value, DEFAULT_BUDGET};
use edgedisp::partition::{greedy_partition, minimal_period, validate_partition};
use edgedisp::policy::{make_policy, Policy};
use edgedisp::sim::{discounted_cost, run, Simulator};
use edgedisp::valuefn::{transit_value, ArrivalHazardSchedule, QueueDistribution, QueueValueEvaluator, StreamWindow};

type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pmf on `{1..=xi}` with index 0 empty.
fn random_pmf(rng: &mut ChaCha8Rng, xi: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..xi).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    std::iter::once(0.0).chain(w.iter().map(|x| x / total)).collect()
}

fn random_tiny(rng: &mut ChaCha8Rng) -> ValidatedInstance {
    let k_count = rng.random_range(1..=3);
    let m_count = rng.random_range(1..=2);
    let mut cfg = small_config(k_count, m_count, 1);
    cfg.slots_per_interval = rng.random_range(1..=5);
    cfg.max_upload_latency = rng.random_range(1..=4);
    cfg.max_queue_len = rng.random_range(2..=5);
    cfg.overflow_penalty = rng.random_range(0.0..20.0);
    cfg.horizon_intervals = SystemConfig::default_horizon(cfg.discount, cfg.max_queue_len, cfg.overflow_penalty);
    let xi = cfg.max_upload_latency;
    let t_b = cfg.slots_per_interval;

    let mut edge = Vec::new();
    let mut colloc = Vec::new();
    for _ in 0..k_count {
        let set: Vec<usize> = (1..=m_count).filter(|_| rng.random_bool(0.6)).collect();
        let c = if !set.is_empty() && rng.random_bool(0.4) { Some(set[rng.random_range(0..set.len())]) } else { None };
        edge.push(set);
        colloc.push(c);
    }
    // At most one AP per collocated server.
    for m in 1..=m_count {
        let mut seen = false;
        for c in colloc.iter_mut() {
            if *c == Some(m) {
                if seen {
                    *c = None;
                }
                seen = true;
            }
        }
    }
    let mut b = InstanceBuilder::new(cfg, edge.clone(), colloc.clone());
    for k in 0..k_count {
        b = b.arrival(k, 0, rng.random_range(0.05..0.6));
        for m in std::iter::once(CLOUD).chain(edge[k].iter().copied()) {
            if colloc[k] != Some(m) {
                b = b.latency(k, m, 0, random_pmf(rng, xi));
            }
        }
        let sig: Vec<f64> = (0..t_b).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = sig.iter().sum();
        b = b.signaling(k, sig.iter().map(|x| x / total).collect());
    }
    for m in 0..=m_count {
        b = b.mean_proc(m, 0, rng.random_range(1.0..4.0));
    }
    b.build().expect("random tiny instance is valid")
}

fn criterion_1() -> Outcome {
    let mut r = rng(101);
    let opts = CertifyOptions::default();
    let mut passes = 0;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    let n = 20;
    for i in 0..n {
        let inst = random_tiny(&mut r);
        let cfg = inst.config();
        let vc = check_value_function(&inst, &CertifyOptions { seed: 1000 + i, ..opts.clone() }).expect("check runs");
        let ok = value_check_passes(&vc, opts.tail_tolerance);
        passes += usize::from(ok);
        worst = worst.max(vc.z);
        lines.push(format!(
            "    #{i:02} K={} M={} tB={} Xi={} L={} approx {:.5} mc {:.5} ± {:.5} z {:.2} {}",
            cfg.num_aps,
            cfg.num_servers,
            cfg.slots_per_interval,
            cfg.max_upload_latency,
            cfg.max_queue_len,
            vc.approx,
            vc.estimate.mean,
            vc.estimate.standard_error,
            vc.z,
            if ok { "ok" } else { "OUT" }
        ));
    }
    for l in &lines {
        println!("{l}");
    }
    (passes == n as usize, format!("{passes}/{n} instances within 3 SE at 1e5 replications, max z {worst:.2}"))
}

fn criterion_2() -> Outcome {
    let mut r = rng(202);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let l_max = r.random_range(1..=8);
        let mut cfg = small_config(1, 1, 1);
        cfg.slots_per_interval = r.random_range(1..=6);
        cfg.max_queue_len = l_max;
        cfg.overflow_penalty = r.random_range(0.0..30.0);
        cfg.discount = r.random_range(0.5..0.95);
        cfg.horizon_intervals = SystemConfig::default_horizon(cfg.discount, l_max, cfg.overflow_penalty);
        let transient: Vec<f64> = (0..r.random_range(0..30)).map(|_| r.random_range(0.0..1.0)).collect();
        let tail = Some(if r.random_bool(0.8) { r.random_range(0.0..0.9) } else { 0.0 });
        let hazards = ArrivalHazardSchedule::new(transient, tail).expect("valid hazards");
        let c = r.random_range(1.0..6.0);
        let probs: Vec<f64> = (0..=l_max).map(|_| r.random::<f64>()).collect();
        let total: f64 = probs.iter().sum();
        let init = QueueDistribution::new(probs.iter().map(|p| p / total).collect()).expect("valid distribution");
        let exact = QueueValueEvaluator::new(&cfg).value(&init, &hazards, 1.0 / c).expect("queue value");
        let mc = mc_queue_value(&init, &hazards, c, &cfg, 20_000, 7_000 + case);
        let allowed = (0.02 * exact.abs()).max(3.0 * mc.standard_error) + cfg.tail_bound();
        let gap = (exact - mc.mean).abs();
        worst = worst.max(gap / allowed);
        if gap > allowed {
            failures += 1;
        }
    }
    (failures == 0, format!("50 cases, {failures} outside max(2%, 3 SE), worst gap/tolerance {worst:.3}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(303);
    let mut worst: f64 = 0.0;
    let cases = 500;
    for _ in 0..cases {
        let xi = r.random_range(1..=6);
        let mut pmf = random_pmf(&mut r, xi);
        if r.random_bool(0.3) {
            // Sparse supports too.
            let keep = r.random_range(1..=xi);
            pmf = vec![0.0; xi + 1];
            pmf[keep] = 1.0;
        }
        let t_b = r.random_range(1..=6);
        let gamma = r.random_range(0.5..0.97);
        let mut cfg = small_config(1, 1, 1);
        cfg.slots_per_interval = t_b;
        cfg.max_upload_latency = xi;
        cfg.discount = gamma;
        let ages: Vec<usize> = (0..r.random_range(0..4)).map(|_| r.random_range(0..=xi)).collect();
        let mut ind = TransitIndicator::new(xi);
        for &a in &ages {
            ind.increment(a);
        }
        let windows: Vec<StreamWindow> = (0..r.random_range(0..3))
            .map(|_| {
                let start = r.random_range(0..8);
                let end = if r.random_bool(0.5) { Some(start + r.random_range(0..8)) } else { None };
                StreamWindow { rate: r.random(), start, end }
            })
            .collect();
        let v = transit_value(&LatencyDist::new(&pmf), &ind, &windows, &cfg);
        let boundaries = ((1e-13f64).ln() / gamma.ln()).ceil() as usize + 10;
        let tuples: Vec<_> = windows.iter().map(|w| (w.rate, w.start, w.end)).collect();
        let brute = enumerate_transit_value(&pmf, &ages, &tuples, t_b, gamma, boundaries);
        worst = worst.max((v - brute).abs());
    }
    (worst <= 1e-9, format!("{cases} cases with Xi <= 6, max abs gap {worst:.3e}"))
}

/// Three APs sharing two edge servers; AP 0 overloads its collocated
/// server while a fast cloud sits idle.
fn imbalanced_k3() -> ValidatedInstance {
    let mut cfg = small_config(3, 2, 1);
    cfg.slots_per_interval = 4;
    cfg.max_upload_latency = 4;
    cfg.max_queue_len = 8;
    cfg.overflow_penalty = 20.0;
    cfg.horizon_intervals = SystemConfig::default_horizon(cfg.discount, 8, 20.0);
    InstanceBuilder::new(cfg, vec![vec![1], vec![1, 2], vec![2]], vec![Some(1), None, Some(2)])
        .arrival(0, 0, 0.6)
        .arrival(1, 0, 0.15)
        .arrival(2, 0, 0.1)
        .latency(1, 1, 0, vec![0.0, 0.5, 0.5])
        .latency(1, 2, 0, vec![0.0, 0.3, 0.7])
        .fixed_latency(0, CLOUD, 3)
        .fixed_latency(1, CLOUD, 3)
        .fixed_latency(2, CLOUD, 4)
        .mean_proc(1, 0, 2.0)
        .mean_proc(2, 0, 1.5)
        .mean_proc(CLOUD, 0, 1.25)
        .signaling_all(vec![0.2, 0.5, 0.3])
        .build()
        .expect("valid K=3 instance")
}

fn criterion_4() -> Outcome {
    let inst = Arc::new(imbalanced_k3());
    let gamma = inst.config().discount;
    let (reps, intervals) = (50, 2000);
    let mut diffs = Vec::new();
    let (mut mdp_sum, mut static_sum) = (0.0, 0.0);
    for r in 0..reps {
        let seed = 40_000 + r as u64;
        let mut totals = [0.0; 2];
        for (i, name) in ["mdp", "static"].into_iter().enumerate() {
            let mut p = make_policy(name, Arc::clone(&inst), seed).expect("policy");
            let out = run(&inst, p.as_mut(), intervals, seed).expect("run");
            totals[i] = discounted_cost(&out.intervals, gamma, intervals);
        }
        mdp_sum += totals[0];
        static_sum += totals[1];
        diffs.push(totals[0] - totals[1]);
    }
    let n = reps as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let (m, s) = (mdp_sum / n, static_sum / n);
    (m <= s + 2.0 * se, format!("mdp {m:.3} vs static {s:.3}, paired diff {mean:.3} ± {se:.3} ({reps} x {intervals})"))
}

fn criterion_5() -> Outcome {
    let mut total = (0u64, 0u64);
    let mut regret: f64 = 0.0;
    let cases: [(f64, f64, f64, usize, usize); 4] =
        [(0.55, 2.0, 1.25, 1, 2), (0.3, 3.0, 1.5, 2, 3), (0.7, 1.5, 2.5, 1, 3), (0.45, 2.5, 1.0, 2, 2)];
    for (i, &(lambda, c_edge, c_cloud, edge_lat, cloud_lat)) in cases.iter().enumerate() {
        let mut cfg = small_config(1, 1, 1);
        cfg.max_queue_len = 3;
        cfg.slots_per_interval = 2;
        cfg.max_upload_latency = 3;
        cfg.horizon_intervals = SystemConfig::default_horizon(cfg.discount, 3, cfg.overflow_penalty);
        let inst = InstanceBuilder::new(cfg, vec![vec![1]], vec![None])
            .arrival(0, 0, lambda)
            .fixed_latency(0, 1, edge_lat)
            .fixed_latency(0, CLOUD, cloud_lat)
            .mean_proc(1, 0, c_edge)
            .mean_proc(CLOUD, 0, c_cloud)
            .signaling(0, vec![0.5, 0.5])
            .build()
            .expect("valid K=1 instance");
        let a = decoupling_audit(&inst, 500, 50 + i as u64, DEFAULT_BUDGET).expect("audit");
        total.0 += a.agreements;
        total.1 += a.decisions;
        regret = regret.max(a.max_regret);
    }
    (total.0 == total.1, format!("{}/{} decisions agree over 4 instances x 500 intervals, max regret {regret:.3e}", total.0, total.1))
}

fn desk_spec(out: &std::path::Path, replications: usize, intervals: usize, sweep: Sweep) -> ExperimentSpec {
    ExperimentSpec {
        schema_version: SCHEMA_VERSION,
        instance: InstanceSource::Generate(GeneratorSpec { seed: 3, ..GeneratorSpec::default() }),
        policies: vec!["random".into(), "selfish".into(), "queue_aware".into(), "mdp".into()],
        num_intervals: intervals,
        replications,
        seed: 7,
        sweep,
        out: out.to_path_buf(),
        jobs: 1,
    }
}

fn dominates(bundle: &ResultBundle, v: Option<f64>) -> (bool, String) {
    let mdp = bundle.row("mdp", v).expect("mdp row");
    let mut violations = Vec::new();
    let mut best_resp = f64::INFINITY;
    for name in ["random", "selfish", "queue_aware"] {
        let b = bundle.row(name, v).expect("benchmark row");
        if mdp.mean_cost.mean >= b.mean_cost.mean {
            violations.push(format!("cost vs {name}"));
        }
        if mdp.response_intervals.mean >= b.response_intervals.mean {
            violations.push(format!("response vs {name}"));
        }
        if mdp.drop_rate.mean > b.drop_rate.mean {
            violations.push(format!("drop rate {:.2e} vs {name} {:.2e}", mdp.drop_rate.mean, b.drop_rate.mean));
        }
        best_resp = best_resp.min(b.response_intervals.mean);
    }
    let gain = 100.0 * (best_resp - mdp.response_intervals.mean) / best_resp;
    let mut detail = format!("response {:.4} vs best benchmark {best_resp:.4} ({gain:.2}% lower)", mdp.response_intervals.mean);
    if !violations.is_empty() {
        detail += &format!("; not better on: {}", violations.join(", "));
    }
    (violations.is_empty(), detail)
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let bundle = run_experiment(&desk_spec(dir.path(), 10, 5000, Sweep::default())).expect("experiment");
    for row in &bundle.rows {
        println!(
            "    {:<12} cost {:>9.3} ± {:<7.3} response {:.4} drop {:.2e}",
            row.policy, row.mean_cost.mean, row.mean_cost.se, row.response_intervals.mean, row.drop_rate.mean
        );
    }
    let (ok, detail) = dominates(&bundle, None);
    (ok, format!("10 x 5000 on K=15 M=10 J=10: {detail}"))
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let sweep = Sweep::parse("signaling_latency=5,12,25").expect("sweep");
    let bundle = run_experiment(&desk_spec(dir.path(), 10, 2000, sweep)).expect("experiment");
    let mut ok = true;
    let mut advantages = Vec::new();
    for v in [5.0, 12.0, 25.0] {
        let random = bundle.row("random", Some(v)).expect("row").jobs_in_system.mean;
        let qa = bundle.row("queue_aware", Some(v)).expect("row").jobs_in_system.mean;
        advantages.push(random - qa);
        let (dom, detail) = dominates(&bundle, Some(v));
        println!("    D={v:>2}: queue_aware advantage {:.3} jobs, mdp {detail}", random - qa);
        ok &= dom;
    }
    let trend = advantages.windows(2).all(|w| w[1] <= w[0]);
    (
        ok && trend,
        format!(
            "advantage {:.3} / {:.3} / {:.3} ({}), mdp dominates at every setting: {}",
            advantages[0],
            advantages[1],
            advantages[2],
            if trend { "nonincreasing" } else { "NOT nonincreasing" },
            ok
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng(808);
    let mut invalid = 0;
    let mut gaps = [0usize; 8];
    let mut small = 0;
    let check = |spec: GeneratorSpec, invalid: &mut usize, gaps: &mut [usize; 8], small: &mut usize| {
        let inst = generate_instance(&spec).expect("generated");
        let topo = inst.topology();
        let p = greedy_partition(topo);
        if validate_partition(&p, topo).is_err() {
            *invalid += 1;
        }
        if topo.num_aps() <= 6 {
            *small += 1;
            gaps[(p.period() - minimal_period(topo)).min(7)] += 1;
        }
    };
    for i in 0..100 {
        let k = r.random_range(2..=20);
        let spec = GeneratorSpec {
            num_aps: k,
            num_servers: r.random_range(1..=k),
            num_job_types: 1,
            ba_attachment: r.random_range(1..=3),
            seed: 9_000 + i,
            ..GeneratorSpec::default()
        };
        check(spec, &mut invalid, &mut gaps, &mut small);
    }
    for i in 0..200 {
        let k = r.random_range(1..=6);
        let spec = GeneratorSpec {
            num_aps: k,
            num_servers: r.random_range(1..=k),
            num_job_types: 1,
            ba_attachment: r.random_range(1..=3),
            seed: 19_000 + i,
            ..GeneratorSpec::default()
        };
        check(spec, &mut invalid, &mut gaps, &mut small);
    }
    let over = gaps[2..].iter().sum::<usize>();
    (
        invalid == 0 && over == 0,
        format!("{invalid} invalid of 300; K<=6 topologies {small}, gap 0/1/>=2: {}/{}/{over}", gaps[0], gaps[1]),
    )
}

fn criterion_9() -> Outcome {
    // Conservation on every policy.
    let generated = generate_instance(&GeneratorSpec {
        num_aps: 6,
        num_servers: 3,
        num_job_types: 2,
        slots_per_interval: 5,
        max_queue_len: 6,
        seed: 11,
        load: 0.9,
        ..GeneratorSpec::default()
    })
    .expect("generated");
    let inst = Arc::new(generated);
    let cfg = inst.config().clone();
    let mut conservation = true;
    let mut drops_seen = 0;
    for name in ["static", "random", "selfish", "queue_aware", "mdp"] {
        let mut p: Box<dyn Policy> = make_policy(name, Arc::clone(&inst), 5).expect("policy");
        let mut sim = Simulator::new(&inst, 5);
        let (mut arrivals, mut completions, mut drops) = (0, 0, 0);
        for _ in 0..1000 {
            let m = sim.step_interval(p.as_mut()).expect("step");
            arrivals += m.arrivals;
            completions += m.completions;
            drops += m.drops;
            let st = sim.state();
            for s in 0..cfg.num_processing_servers() {
                for j in 0..cfg.num_job_types {
                    let l = st.ledger(s, j);
                    conservation &= l.enqueued - l.completed == st.queue(s, j).len() as u64;
                }
            }
            conservation &= arrivals == completions + drops + st.jobs_in_system();
        }
        drops_seen += drops;
    }

    // Little's law on a run without drops.
    let mut lcfg = small_config(3, 2, 1);
    lcfg.slots_per_interval = 4;
    lcfg.max_upload_latency = 4;
    lcfg.max_queue_len = 60;
    lcfg.horizon_intervals = SystemConfig::default_horizon(lcfg.discount, 60, lcfg.overflow_penalty);
    let little = InstanceBuilder::new(lcfg, vec![vec![1], vec![1, 2], vec![2]], vec![Some(1), None, Some(2)])
        .arrival(0, 0, 0.3)
        .arrival(1, 0, 0.2)
        .arrival(2, 0, 0.25)
        .latency(1, 1, 0, vec![0.0, 0.2, 0.5, 0.3])
        .latency(1, 2, 0, vec![0.0, 0.6, 0.4])
        .mean_proc(1, 0, 1.6)
        .mean_proc(2, 0, 2.0)
        .mean_proc(CLOUD, 0, 4.0)
        .build()
        .expect("valid instance");
    let little = Arc::new(little);
    let intervals = 20_000;
    let mut p = make_policy("queue_aware", Arc::clone(&little), 9).expect("policy");
    let out = run(&little, p.as_mut(), intervals, 9).expect("run");
    let s = out.summary();
    let rate = s.total_arrivals as f64 / (intervals * little.config().slots_per_interval) as f64;
    let l = s.jobs_in_system.mean;
    let rel = (l - rate * s.response_slots.mean).abs() / l;
    let little_ok = s.total_drops == 0 && rel <= 0.05;

    // Determinism: two executions, identical streams and CSV bytes.
    let csv = |seed| {
        let mut p = make_policy("mdp", Arc::clone(&inst), seed).expect("policy");
        let out = run(&inst, p.as_mut(), 300, seed).expect("run");
        let mut buf = Vec::new();
        out.write_csv(&mut buf).expect("csv");
        (out, buf)
    };
    let (a, abuf) = csv(21);
    let (b, bbuf) = csv(21);
    let deterministic = a == b && abuf == bbuf;

    (
        conservation && little_ok && deterministic,
        format!(
            "conservation {conservation} (5 policies x 1000 intervals, {drops_seen} drops), Little L={l:.4} vs λW={:.4} rel {:.2}% over {intervals} intervals with {} drops, deterministic {deterministic}",
            rate * s.response_slots.mean,
            100.0 * rel,
            s.total_drops
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("value function within 3 SE on 20 random tiny instances", criterion_1),
        ("queue chain vs Monte-Carlo on 50 single queues", criterion_2),
        ("transit term vs outcome enumeration", criterion_3),
        ("mdp no worse than static baseline on K=3", criterion_4),
        ("decoupled decisions equal exhaustive lookahead on K=1", criterion_5),
        ("mdp beats every benchmark at desk scale", criterion_6),
        ("signaling latency sensitivity", criterion_7),
        ("greedy partitions valid and near minimal", criterion_8),
        ("conservation, Little's law, determinism", criterion_9),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!(
            "{} criterion {id}: {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
