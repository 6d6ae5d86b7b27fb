use super::instance::{
    validate_instance, ArrivalModel, ServiceModel, SignalingLatencyModel, SystemConfig, Topology, UploadLatencyModel,
    ValidatedInstance, CLOUD,
};
use crate::error::Result;

/// Programmatic instance construction for small hand-made scenarios.
///
/// Defaults: no arrivals, one-slot uploads to non-collocated servers
/// (zero for collocated ones), `c = 1` everywhere and OSI delivery at
/// slot 0.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    config: SystemConfig,
    topology: Topology,
    arrival: Vec<Vec<f64>>,
    upload: Vec<Vec<Vec<Vec<f64>>>>,
    mean_proc: Vec<Vec<f64>>,
    signaling: Vec<Vec<f64>>,
}

impl InstanceBuilder {
    /// `edge_candidates[k]` lists the edge servers (1-based server ids) AP `k`
    /// may use; the cloud is added automatically.
    pub fn new(config: SystemConfig, edge_candidates: Vec<Vec<usize>>, collocated: Vec<Option<usize>>) -> Self {
        let candidates = edge_candidates
            .into_iter()
            .map(|mut set| {
                set.push(CLOUD);
                set
            })
            .collect();
        let topology = Topology::new(config.num_servers, candidates, collocated);
        let k_count = config.num_aps;
        let servers = config.num_processing_servers();
        let jobs = config.num_job_types;
        let xi = config.max_upload_latency;
        let upload = (0..k_count)
            .map(|k| {
                (0..servers)
                    .map(|m| {
                        if !topology.is_candidate(k, m) {
                            return Vec::new();
                        }
                        let mut pmf = vec![0.0; xi + 1];
                        if topology.is_collocated(k, m) {
                            pmf[0] = 1.0;
                        } else {
                            pmf[1] = 1.0;
                        }
                        vec![pmf; jobs]
                    })
                    .collect()
            })
            .collect();
        Self {
            arrival: vec![vec![0.0; jobs]; k_count],
            upload,
            mean_proc: vec![vec![1.0; jobs]; servers],
            signaling: vec![vec![1.0]; k_count],
            config,
            topology,
        }
    }

    pub fn arrival(mut self, k: usize, j: usize, prob: f64) -> Self {
        self.arrival[k][j] = prob;
        self
    }

    pub fn arrivals_all(mut self, prob: f64) -> Self {
        for row in &mut self.arrival {
            row.fill(prob);
        }
        self
    }

    pub fn latency(mut self, k: usize, m: usize, j: usize, pmf: Vec<f64>) -> Self {
        let mut padded = pmf;
        padded.resize(self.config.max_upload_latency + 1, 0.0);
        self.upload[k][m][j] = padded;
        self
    }

    /// Deterministic latency for every job type on `(k, m)`.
    pub fn fixed_latency(mut self, k: usize, m: usize, slots: usize) -> Self {
        for j in 0..self.config.num_job_types {
            let mut pmf = vec![0.0; self.config.max_upload_latency + 1];
            pmf[slots] = 1.0;
            self.upload[k][m][j] = pmf;
        }
        self
    }

    pub fn mean_proc(mut self, m: usize, j: usize, c: f64) -> Self {
        self.mean_proc[m][j] = c;
        self
    }

    pub fn mean_proc_all(mut self, c: f64) -> Self {
        for row in &mut self.mean_proc {
            row.fill(c);
        }
        self
    }

    pub fn signaling(mut self, k: usize, pmf: Vec<f64>) -> Self {
        self.signaling[k] = pmf;
        self
    }

    pub fn signaling_all(mut self, pmf: Vec<f64>) -> Self {
        for row in &mut self.signaling {
            row.clone_from(&pmf);
        }
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn build(self) -> Result<ValidatedInstance> {
        validate_instance(
            self.config,
            self.topology,
            ArrivalModel::Bernoulli { prob: self.arrival },
            UploadLatencyModel { pmf: self.upload },
            ServiceModel { mean_proc: self.mean_proc },
            SignalingLatencyModel { pmf: self.signaling },
        )
    }
}

/// A config with the given sizes and small defaults elsewhere.
pub fn small_config(num_aps: usize, num_servers: usize, num_job_types: usize) -> SystemConfig {
    SystemConfig {
        num_aps,
        num_servers,
        num_job_types,
        slots_per_interval: 2,
        max_upload_latency: 2,
        max_queue_len: 5,
        overflow_penalty: 10.0,
        discount: 0.9,
        horizon_intervals: SystemConfig::default_horizon(0.9, 5, 10.0),
    }
}
