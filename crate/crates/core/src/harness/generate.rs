use rand::seq::{index, IndexedRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_instance, ArrivalModel, ServiceModel, SignalingLatencyModel, SystemConfig, Topology,
    UploadLatencyModel, ValidatedInstance, CLOUD,
};
use crate::sim::rng::{stream, StreamKind};

/// Synthetic workload parameters. Defaults give the 15-AP benchmark setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub num_aps: usize,
    pub num_servers: usize,
    pub num_job_types: usize,
    pub slots_per_interval: usize,
    pub max_queue_len: usize,
    pub overflow_penalty: f64,
    pub discount: f64,
    /// Edges added per new vertex of the BA graph.
    pub ba_attachment: usize,
    pub seed: u64,
    /// Offered load per job type relative to total edge capacity.
    pub load: f64,
    pub arrival_scale: f64,
    pub proc_time_scale: f64,
    /// Signaling delay support as fractions of `t_B`, rounded inward.
    pub signaling_fraction: (f64, f64),
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            num_aps: 15,
            num_servers: 10,
            num_job_types: 10,
            slots_per_interval: 25,
            max_queue_len: 50,
            overflow_penalty: 120.0,
            discount: 0.95,
            ba_attachment: 2,
            seed: 1,
            load: 0.6,
            arrival_scale: 1.0,
            proc_time_scale: 1.0,
            signaling_fraction: (0.7, 0.9),
        }
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("generator: {what}")));
        if self.num_aps == 0 || self.num_servers == 0 || self.num_job_types == 0 || self.slots_per_interval == 0 {
            return bad("K, M, J and t_B must be positive");
        }
        if self.ba_attachment == 0 {
            return bad("BA attachment must be at least 1");
        }
        if !(self.arrival_scale > 0.0 && self.proc_time_scale > 0.0 && self.load > 0.0) {
            return bad("scales and load must be positive");
        }
        let (lo, hi) = self.signaling_fraction;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return bad("signaling fractions must satisfy 0 <= lo <= hi <= 1");
        }
        Ok(())
    }

    /// Integer signaling support `[⌈lo·t_B⌉, ⌊hi·t_B⌋]`; collapses to the
    /// lower end when rounding empties it.
    pub fn signaling_support(&self) -> (usize, usize) {
        let t_b = self.slots_per_interval as f64;
        let lo = (self.signaling_fraction.0 * t_b).ceil() as usize;
        let hi = (self.signaling_fraction.1 * t_b).floor() as usize;
        (lo, hi.max(lo))
    }
}

/// Preferential-attachment graph as adjacency lists. Starts from a clique
/// on `attach + 1` vertices.
pub fn barabasi_albert<R: Rng>(n: usize, attach: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let seed_size = (attach + 1).min(n);
    // Each edge contributes both endpoints, so sampling from this list is
    // proportional to degree.
    let mut ends = Vec::new();
    for a in 0..seed_size {
        for b in a + 1..seed_size {
            adj[a].push(b);
            adj[b].push(a);
            ends.extend([a, b]);
        }
    }
    for v in seed_size..n {
        let mut targets: Vec<usize> = Vec::with_capacity(attach);
        while targets.len() < attach.min(v) {
            let u = if ends.is_empty() { rng.random_range(0..v) } else { *ends.choose(rng).expect("nonempty") };
            if !targets.contains(&u) {
                targets.push(u);
            }
        }
        for u in targets {
            adj[v].push(u);
            adj[u].push(v);
            ends.extend([u, v]);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

/// Discretized Gaussian on `{1, …, xi}`.
fn bell_pmf(xi: usize, mean: f64, sd: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; xi + 1];
    for (x, p) in pmf.iter_mut().enumerate().skip(1) {
        let z = (x as f64 - mean) / sd;
        *p = (-0.5 * z * z).exp();
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

pub fn generate_instance(spec: &GeneratorSpec) -> Result<ValidatedInstance> {
    spec.validate()?;
    let (k_count, m_count, jobs, t_b) = (spec.num_aps, spec.num_servers, spec.num_job_types, spec.slots_per_interval);
    if m_count > k_count {
        return Err(Error::GenerationFailed(format!("{m_count} servers cannot be collocated with {k_count} APs")));
    }
    let xi = 3 * t_b;
    let config = SystemConfig {
        num_aps: k_count,
        num_servers: m_count,
        num_job_types: jobs,
        slots_per_interval: t_b,
        max_upload_latency: xi,
        max_queue_len: spec.max_queue_len,
        overflow_penalty: spec.overflow_penalty,
        discount: spec.discount,
        horizon_intervals: SystemConfig::default_horizon(spec.discount, spec.max_queue_len, spec.overflow_penalty),
    };

    let mut rng = stream(spec.seed, StreamKind::Replication, u64::MAX >> 16);
    let graph = barabasi_albert(k_count, spec.ba_attachment, &mut rng);
    let mut hosts = index::sample(&mut rng, k_count, m_count).into_vec();
    hosts.sort_unstable();
    let mut server_at = vec![None; k_count];
    for (i, &k) in hosts.iter().enumerate() {
        server_at[k] = Some(i + 1);
    }
    let candidates: Vec<Vec<usize>> = (0..k_count)
        .map(|k| {
            let mut set = vec![CLOUD];
            set.extend(server_at[k]);
            set.extend(graph[k].iter().filter_map(|&n| server_at[n]));
            set
        })
        .collect();
    let topology = Topology::new(m_count, candidates, server_at.clone());

    let servers = m_count + 1;
    let mut upload = vec![vec![Vec::new(); servers]; k_count];
    for k in 0..k_count {
        for &m in topology.candidates(k) {
            upload[k][m] = (0..jobs)
                .map(|_| {
                    if server_at[k] == Some(m) {
                        let mut pmf = vec![0.0; xi + 1];
                        pmf[0] = 1.0;
                        pmf
                    } else if m == CLOUD {
                        let mean = rng.random_range(1.5..2.5) * t_b as f64;
                        bell_pmf(xi, mean, 0.2 * t_b as f64)
                    } else {
                        let mean = rng.random_range(0.1..0.6) * t_b as f64;
                        bell_pmf(xi, mean.max(1.0), (0.15 * t_b as f64).max(0.5))
                    }
                })
                .collect();
        }
    }

    let mean_proc: Vec<Vec<f64>> = (0..servers)
        .map(|m| {
            (0..jobs)
                .map(|_| {
                    let base = if m == CLOUD { rng.random_range(2.0..6.0) } else { rng.random_range(4.0..20.0) };
                    (base * spec.proc_time_scale).max(1.0)
                })
                .collect()
        })
        .collect();
    let prob: Vec<Vec<f64>> = {
        let per_type: Vec<f64> = (0..jobs)
            .map(|j| spec.load * (1..servers).map(|m| 1.0 / mean_proc[m][j]).sum::<f64>() / k_count as f64)
            .collect();
        (0..k_count)
            .map(|_| {
                (0..jobs)
                    .map(|j| (per_type[j] * rng.random_range(0.5..1.5) * spec.arrival_scale).min(1.0))
                    .collect()
            })
            .collect()
    };

    let (lo, hi) = spec.signaling_support();
    let mut sig = vec![0.0; t_b + 1];
    for p in &mut sig[lo.min(t_b)..=hi.min(t_b)] {
        *p = 1.0;
    }
    let total: f64 = sig.iter().sum();
    sig.iter_mut().for_each(|p| *p /= total);

    validate_instance(
        config,
        topology,
        ArrivalModel::Bernoulli { prob },
        UploadLatencyModel { pmf: upload },
        ServiceModel { mean_proc },
        SignalingLatencyModel { pmf: vec![sig; k_count] },
    )
}
