use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Coord, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Index of the cloud among the processing servers.
pub const CLOUD: usize = 0;

const PMF_TOLERANCE: f64 = 1e-9;

/// Truncation target for the discounted queue-value tail.
pub const HORIZON_TAIL_BOUND: f64 = 1e-3;

/// Static constants of a problem instance.
///
/// `num_servers` counts edge servers only; processing servers are indexed
/// `0..=num_servers` with index 0 the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_servers: usize,
    pub num_job_types: usize,
    pub slots_per_interval: usize,
    pub max_upload_latency: usize,
    pub max_queue_len: usize,
    pub overflow_penalty: f64,
    pub discount: f64,
    pub horizon_intervals: usize,
}

impl SystemConfig {
    /// Total number of processing servers including the cloud.
    pub fn num_processing_servers(&self) -> usize {
        self.num_servers + 1
    }

    /// Smallest `H` with `γ^(H+1) (L_max + β) / (1 - γ) < 1e-3`.
    pub fn default_horizon(discount: f64, max_queue_len: usize, overflow_penalty: f64) -> usize {
        let scale = (max_queue_len as f64 + overflow_penalty) / (1.0 - discount);
        let mut horizon = 1usize;
        while discount.powi(horizon as i32 + 1) * scale >= HORIZON_TAIL_BOUND {
            horizon += 1;
        }
        horizon
    }

    /// Upper bound on the discounted queue-value tail after `horizon_intervals`.
    pub fn tail_bound(&self) -> f64 {
        self.discount.powi(self.horizon_intervals as i32 + 1)
            * (self.max_queue_len as f64 + self.overflow_penalty)
            / (1.0 - self.discount)
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("num_aps", self.num_aps),
            ("num_servers", self.num_servers),
            ("num_job_types", self.num_job_types),
            ("slots_per_interval", self.slots_per_interval),
            ("max_upload_latency", self.max_upload_latency),
            ("max_queue_len", self.max_queue_len),
            ("horizon_intervals", self.horizon_intervals),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::invariant(format!("{name} must be positive"), Coord::default()));
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invariant("discount must lie strictly inside (0,1)", Coord::default()));
        }
        if !(self.overflow_penalty >= 0.0 && self.overflow_penalty.is_finite()) {
            return Err(Error::invariant("overflow_penalty must be finite and nonnegative", Coord::default()));
        }
        Ok(())
    }
}

/// Who may dispatch where.
///
/// `potential_aps` and `conflict_sets` are derived from `candidate_servers`
/// and are stored so instance files are self-describing; validation
/// recomputes them and rejects mismatches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// `ℳ_k`, sorted ascending, always containing the cloud.
    pub candidate_servers: Vec<Vec<usize>>,
    /// `𝒦_m` for every processing server, sorted ascending.
    pub potential_aps: Vec<Vec<usize>>,
    /// The edge server sharing a site with each AP, if any.
    pub collocated: Vec<Option<usize>>,
    /// `𝒳_k`, sorted ascending. Computed over edge servers only.
    pub conflict_sets: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from candidate sets, deriving the rest.
    pub fn new(num_servers: usize, mut candidate_servers: Vec<Vec<usize>>, collocated: Vec<Option<usize>>) -> Self {
        for set in &mut candidate_servers {
            set.sort_unstable();
            set.dedup();
        }
        let potential_aps = potential_aps(num_servers, &candidate_servers);
        let conflict_sets = (0..candidate_servers.len())
            .map(|k| conflict_set_of(&candidate_servers, &potential_aps, k))
            .collect();
        Self { candidate_servers, potential_aps, collocated, conflict_sets }
    }

    pub fn num_aps(&self) -> usize {
        self.candidate_servers.len()
    }

    pub fn candidates(&self, k: usize) -> &[usize] {
        &self.candidate_servers[k]
    }

    pub fn is_candidate(&self, k: usize, m: usize) -> bool {
        self.candidate_servers[k].binary_search(&m).is_ok()
    }

    pub fn is_collocated(&self, k: usize, m: usize) -> bool {
        self.collocated[k] == Some(m)
    }

    pub fn conflict_set(&self, k: usize) -> &[usize] {
        &self.conflict_sets[k]
    }

    /// Candidate servers of `k` that take part in contention, i.e. without the cloud.
    pub fn edge_candidates(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.candidate_servers[k].iter().copied().filter(|&m| m != CLOUD)
    }

    /// True when `a` and `b` share an edge server.
    pub fn share_edge_server(&self, a: usize, b: usize) -> bool {
        self.edge_candidates(a).any(|m| self.is_candidate(b, m))
    }

    fn validate(&self, config: &SystemConfig) -> Result<()> {
        let num_servers = config.num_processing_servers();
        if self.candidate_servers.len() != config.num_aps {
            return Err(Error::invariant("candidate_servers must have one entry per AP", Coord::default()));
        }
        if self.collocated.len() != config.num_aps || self.conflict_sets.len() != config.num_aps {
            return Err(Error::invariant("collocated/conflict_sets must have one entry per AP", Coord::default()));
        }
        if self.potential_aps.len() != num_servers {
            return Err(Error::invariant("potential_aps must have one entry per processing server", Coord::default()));
        }
        for (k, set) in self.candidate_servers.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invariant("candidate set must be sorted without duplicates", Coord::ap(k)));
            }
            if let Some(&m) = set.iter().find(|&&m| m >= num_servers) {
                return Err(Error::invariant("candidate server out of range", Coord::ap_server(k, m)));
            }
            if set.first() != Some(&CLOUD) {
                return Err(Error::invariant("cloud server 0 missing from candidate set", Coord::ap(k)));
            }
            if let Some(m) = self.collocated[k] {
                if m == CLOUD {
                    return Err(Error::invariant("cloud cannot be collocated with an AP", Coord::ap_server(k, m)));
                }
                if !self.is_candidate(k, m) {
                    return Err(Error::invariant("collocated server outside candidate set", Coord::ap_server(k, m)));
                }
            }
        }
        let expected = potential_aps(config.num_servers, &self.candidate_servers);
        for (m, (stored, derived)) in self.potential_aps.iter().zip(&expected).enumerate() {
            if stored != derived {
                return Err(Error::invariant("potential AP set disagrees with candidate sets", Coord::server(m)));
            }
        }
        for k in 0..config.num_aps {
            if self.conflict_sets[k] != conflict_set_of(&self.candidate_servers, &expected, k) {
                return Err(Error::invariant("stored conflict set disagrees with candidate sets", Coord::ap(k)));
            }
        }
        Ok(())
    }
}

fn potential_aps(num_servers: usize, candidate_servers: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_servers + 1];
    for (k, set) in candidate_servers.iter().enumerate() {
        for &m in set {
            if let Some(slot) = out.get_mut(m) {
                slot.push(k);
            }
        }
    }
    out
}

fn conflict_set_of(candidate_servers: &[Vec<usize>], potential: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut set: Vec<usize> = candidate_servers[k]
        .iter()
        .filter(|&&m| m != CLOUD)
        .filter_map(|&m| potential.get(m))
        .flatten()
        .copied()
        .collect();
    set.push(k);
    set.sort_unstable();
    set.dedup();
    set
}

/// `𝒳_k = {k} ∪ ⋃_{m ∈ ℳ_k \ {0}} 𝒦_m`, recomputed from the candidate sets.
pub fn conflict_set(topo: &Topology, k: usize) -> Vec<usize> {
    let potential = potential_aps(topo.potential_aps.len().saturating_sub(1), &topo.candidate_servers);
    conflict_set_of(&topo.candidate_servers, &potential, k)
}

/// One replayed arrival record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub ap: usize,
    pub job_type: usize,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Per-slot arrival probability `λ[k][j]`.
    Bernoulli { prob: Vec<Vec<f64>> },
    /// Replayed arrivals, sorted by slot. No arrivals after `length_slots`.
    Trace { events: Vec<TraceEvent>, length_slots: u64 },
}

impl ArrivalModel {
    /// Mean arrivals per slot for `(k, j)`; for traces the empirical rate over
    /// the trace length, capped at 1.
    pub fn mean_rate(&self, k: usize, j: usize) -> f64 {
        match self {
            Self::Bernoulli { prob } => prob[k][j],
            Self::Trace { events, length_slots } => {
                if *length_slots == 0 {
                    return 0.0;
                }
                let total: u64 = events
                    .iter()
                    .filter(|e| e.ap == k && e.job_type == j)
                    .map(|e| u64::from(e.count))
                    .sum();
                (total as f64 / *length_slots as f64).min(1.0)
            }
        }
    }

    fn validate(&self, config: &SystemConfig) -> Result<()> {
        match self {
            Self::Bernoulli { prob } => {
                if prob.len() != config.num_aps {
                    return Err(Error::invariant("arrival prob must have one row per AP", Coord::default()));
                }
                for (k, row) in prob.iter().enumerate() {
                    if row.len() != config.num_job_types {
                        return Err(Error::invariant("arrival prob row must have one entry per job type", Coord::ap(k)));
                    }
                    for (j, &p) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::invariant("arrival probability outside [0,1]", Coord::ap_type(k, j)));
                        }
                    }
                }
            }
            Self::Trace { events, length_slots } => {
                let mut last = 0u64;
                for e in events {
                    if e.slot < last {
                        return Err(Error::invariant("trace timestamps not sorted", Coord::ap_type(e.ap, e.job_type)));
                    }
                    last = e.slot;
                    if e.ap >= config.num_aps || e.job_type >= config.num_job_types {
                        return Err(Error::invariant("trace event index out of range", Coord::ap_type(e.ap, e.job_type)));
                    }
                    if e.slot >= *length_slots {
                        return Err(Error::invariant("trace event beyond trace length", Coord::ap_type(e.ap, e.job_type)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Upload latency pmfs `𝕌[k][m][j]`, each over `{0, …, Ξ}` indexed by latency.
/// Entries for servers outside `ℳ_k` are ignored (conventionally empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadLatencyModel {
    pub pmf: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Mean processing time `c[m][j]` in slots of the geometric service law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub mean_proc: Vec<Vec<f64>>,
}

impl ServiceModel {
    pub fn completion_prob(&self, m: usize, j: usize) -> f64 {
        1.0 / self.mean_proc[m][j]
    }
}

/// Per-AP pmf of the OSI delivery slot within an interval, over `{0, …, t_B}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalingLatencyModel {
    pub pmf: Vec<Vec<f64>>,
}

impl SignalingLatencyModel {
    /// Every AP receives its OSI exactly `delay` slots after the broadcast.
    pub fn constant(num_aps: usize, delay: usize) -> Self {
        let mut pmf = vec![0.0; delay + 1];
        pmf[delay] = 1.0;
        Self { pmf: vec![pmf; num_aps] }
    }
}

/// Precomputed view of one latency pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyDist {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    /// `survival[x] = P(L ≥ x)` for `x = 0..=len`.
    survival: Vec<f64>,
    /// `cum_survival[n] = Σ_{x=1..n} P(L ≥ x)`.
    cum_survival: Vec<f64>,
    mean: f64,
    max: usize,
}

impl LatencyDist {
    pub fn new(pmf: &[f64]) -> Self {
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in pmf {
            acc += p;
            cdf.push(acc);
        }
        let mut survival = vec![0.0; pmf.len() + 1];
        for x in (0..pmf.len()).rev() {
            survival[x] = survival[x + 1] + pmf[x];
        }
        let mut cum_survival = vec![0.0; pmf.len() + 1];
        for n in 1..=pmf.len() {
            cum_survival[n] = cum_survival[n - 1] + survival[n];
        }
        let mean = pmf.iter().enumerate().map(|(x, &p)| x as f64 * p).sum();
        let max = pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { pmf: pmf.to_vec(), cdf, survival, cum_survival, mean, max }
    }

    pub fn point_mass(latency: usize) -> Self {
        let mut pmf = vec![0.0; latency + 1];
        pmf[latency] = 1.0;
        Self::new(&pmf)
    }

    pub fn pmf(&self, x: usize) -> f64 {
        self.pmf.get(x).copied().unwrap_or(0.0)
    }

    pub fn pmf_slice(&self) -> &[f64] {
        &self.pmf
    }

    /// `P(L ≤ x)`, zero for negative `x`.
    pub fn cdf(&self, x: i64) -> f64 {
        if x < 0 {
            0.0
        } else {
            self.cdf.get(x as usize).copied().unwrap_or(1.0)
        }
    }

    /// `P(L ≥ x)`.
    pub fn survival(&self, x: usize) -> f64 {
        self.survival.get(x).copied().unwrap_or(0.0)
    }

    /// `Σ_{x=1..n} P(L ≥ x)`; equals the mean once `n` covers the support.
    pub fn cum_survival(&self, n: i64) -> f64 {
        if n <= 0 {
            0.0
        } else {
            self.cum_survival.get(n as usize).copied().unwrap_or(self.mean)
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest latency with positive mass.
    pub fn max_latency(&self) -> usize {
        self.max
    }

    /// `P(L = age | L ≥ age)`; 1 for ages past the support.
    pub fn delivery_hazard(&self, age: usize) -> f64 {
        let s = self.survival(age);
        if s <= 0.0 {
            1.0
        } else {
            (self.pmf(age) / s).min(1.0)
        }
    }

    /// Inverse-CDF draw from a uniform in `[0,1)`.
    pub fn sample(&self, u: f64) -> usize {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.max).min(self.max)
    }
}

/// On-disk instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub config: SystemConfig,
    pub topology: Topology,
    pub arrivals: ArrivalModel,
    pub upload: UploadLatencyModel,
    pub service: ServiceModel,
    pub signaling: SignalingLatencyModel,
}

/// A problem instance whose invariants have all been checked. The only
/// way to build one is [`validate_instance`].
#[derive(Debug, Clone)]
pub struct ValidatedInstance {
    config: SystemConfig,
    topology: Topology,
    arrivals: ArrivalModel,
    upload: UploadLatencyModel,
    service: ServiceModel,
    signaling: SignalingLatencyModel,
    /// `[k][m][j]`, `Some` exactly for candidate pairs.
    latency: Vec<Vec<Vec<Option<LatencyDist>>>>,
    signaling_dist: Vec<LatencyDist>,
}

impl ValidatedInstance {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn arrivals(&self) -> &ArrivalModel {
        &self.arrivals
    }

    pub fn upload(&self) -> &UploadLatencyModel {
        &self.upload
    }

    pub fn service(&self) -> &ServiceModel {
        &self.service
    }

    pub fn signaling(&self) -> &SignalingLatencyModel {
        &self.signaling
    }

    /// Upload latency law for a candidate pair.
    ///
    /// Panics if `m` is not a candidate of `k`.
    pub fn latency(&self, k: usize, m: usize, j: usize) -> &LatencyDist {
        self.latency[k][m][j].as_ref().expect("latency requested for a non-candidate pair")
    }

    /// Mean upload latency `u_{k,m,j}`.
    pub fn mean_upload(&self, k: usize, m: usize, j: usize) -> f64 {
        self.latency(k, m, j).mean()
    }

    pub fn mean_proc(&self, m: usize, j: usize) -> f64 {
        self.service.mean_proc[m][j]
    }

    pub fn arrival_rate(&self, k: usize, j: usize) -> f64 {
        self.arrivals.mean_rate(k, j)
    }

    pub fn signaling_dist(&self, k: usize) -> &LatencyDist {
        &self.signaling_dist[k]
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            topology: self.topology.clone(),
            arrivals: self.arrivals.clone(),
            upload: self.upload.clone(),
            service: self.service.clone(),
            signaling: self.signaling.clone(),
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: file.schema_version, expected: SCHEMA_VERSION });
        }
        validate_instance(file.config, file.topology, file.arrivals, file.upload, file.service, file.signaling)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Returns a copy with a different arrival model.
    pub fn with_arrivals(&self, arrivals: ArrivalModel) -> Result<Self> {
        let mut file = self.to_file();
        file.arrivals = arrivals;
        Self::from_file(file)
    }

    pub fn with_service(&self, service: ServiceModel) -> Result<Self> {
        let mut file = self.to_file();
        file.service = service;
        Self::from_file(file)
    }

    pub fn with_signaling(&self, signaling: SignalingLatencyModel) -> Result<Self> {
        let mut file = self.to_file();
        file.signaling = signaling;
        Self::from_file(file)
    }
}

fn check_pmf(pmf: &[f64], at: Coord) -> Result<()> {
    if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invariant("pmf entries must be finite and nonnegative", at));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > PMF_TOLERANCE {
        return Err(Error::invariant(format!("pmf normalization (sums to {total})"), at));
    }
    Ok(())
}

/// Checks every instance invariant and returns the only input type the
/// simulator, value functions and policies accept.
pub fn validate_instance(
    config: SystemConfig,
    topology: Topology,
    arrivals: ArrivalModel,
    upload: UploadLatencyModel,
    service: ServiceModel,
    signaling: SignalingLatencyModel,
) -> Result<ValidatedInstance> {
    config.validate()?;
    topology.validate(&config)?;
    arrivals.validate(&config)?;

    let servers = config.num_processing_servers();
    if upload.pmf.len() != config.num_aps {
        return Err(Error::invariant("upload pmf must have one block per AP", Coord::default()));
    }
    let mut latency = Vec::with_capacity(config.num_aps);
    for (k, per_ap) in upload.pmf.iter().enumerate() {
        if per_ap.len() != servers {
            return Err(Error::invariant("upload pmf must cover every processing server", Coord::ap(k)));
        }
        let mut row = Vec::with_capacity(servers);
        for (m, per_server) in per_ap.iter().enumerate() {
            if !topology.is_candidate(k, m) {
                row.push(vec![None; config.num_job_types]);
                continue;
            }
            if per_server.len() != config.num_job_types {
                return Err(Error::invariant("upload pmf must cover every job type", Coord::ap_server(k, m)));
            }
            let mut cell = Vec::with_capacity(config.num_job_types);
            for (j, pmf) in per_server.iter().enumerate() {
                let at = Coord::full(k, m, j);
                if pmf.len() != config.max_upload_latency + 1 {
                    return Err(Error::invariant("upload pmf length must be max_upload_latency + 1", at));
                }
                check_pmf(pmf, at)?;
                if topology.is_collocated(k, m) {
                    if pmf[0] != 1.0 {
                        return Err(Error::invariant("collocated upload latency must be the point mass at 0", at));
                    }
                } else if pmf[0] != 0.0 {
                    return Err(Error::invariant("non-collocated upload latency support must start at 1", at));
                }
                cell.push(Some(LatencyDist::new(pmf)));
            }
            row.push(cell);
        }
        latency.push(row);
    }

    if service.mean_proc.len() != servers {
        return Err(Error::invariant("mean_proc must have one row per processing server", Coord::default()));
    }
    for (m, row) in service.mean_proc.iter().enumerate() {
        if row.len() != config.num_job_types {
            return Err(Error::invariant("mean_proc row must have one entry per job type", Coord::server(m)));
        }
        for (j, &c) in row.iter().enumerate() {
            if !(c.is_finite() && c >= 1.0) {
                return Err(Error::invariant("mean processing time must be at least 1 slot", Coord::server_type(m, j)));
            }
        }
    }

    if signaling.pmf.len() != config.num_aps {
        return Err(Error::invariant("signaling pmf must have one entry per AP", Coord::default()));
    }
    let mut signaling_dist = Vec::with_capacity(config.num_aps);
    for (k, pmf) in signaling.pmf.iter().enumerate() {
        if pmf.is_empty() || pmf.len() > config.slots_per_interval + 1 {
            return Err(Error::invariant("signaling latency support must lie within [0, t_B]", Coord::ap(k)));
        }
        check_pmf(pmf, Coord::ap(k))?;
        signaling_dist.push(LatencyDist::new(pmf));
    }

    Ok(ValidatedInstance { config, topology, arrivals, upload, service, signaling, latency, signaling_dist })
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
