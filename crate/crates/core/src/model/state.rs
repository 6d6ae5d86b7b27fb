use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::instance::{Topology, ValidatedInstance};
use crate::error::{Coord, Error, Result};

/// Age-indexed in-flight counts for one `(k, m, j)`: entry `ξ` is the number
/// of jobs that have been uploading for exactly `ξ` slots. Under Bernoulli
/// arrivals every entry is 0 or 1; replayed traces may stack jobs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransitIndicator {
    counts: Vec<u16>,
}

impl TransitIndicator {
    pub fn new(max_upload_latency: usize) -> Self {
        Self { counts: vec![0; max_upload_latency + 1] }
    }

    pub fn from_counts(counts: Vec<u16>) -> Self {
        Self { counts }
    }

    pub fn count(&self, age: usize) -> u16 {
        self.counts.get(age).copied().unwrap_or(0)
    }

    pub fn increment(&mut self, age: usize) {
        self.counts[age] += 1;
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    /// `‖R‖₁`, the number of jobs in flight.
    pub fn l1_norm(&self) -> u32 {
        self.counts.iter().map(|&c| u32::from(c)).sum()
    }

    /// `(age, count)` for every occupied age.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, u16)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(a, &c)| (a, c))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// `ω_{k,j}` for every AP and job type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DispatchActionTable {
    targets: Vec<Vec<usize>>,
}

impl DispatchActionTable {
    pub fn new(targets: Vec<Vec<usize>>) -> Self {
        Self { targets }
    }

    pub fn from_fn(num_aps: usize, num_job_types: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        Self { targets: (0..num_aps).map(|k| (0..num_job_types).map(|j| f(k, j)).collect()).collect() }
    }

    pub fn target(&self, k: usize, j: usize) -> usize {
        self.targets[k][j]
    }

    /// The scoped sub-table `𝒜_k`.
    pub fn ap(&self, k: usize) -> &[usize] {
        &self.targets[k]
    }

    pub fn set_ap(&mut self, k: usize, actions: Vec<usize>) {
        self.targets[k] = actions;
    }

    pub fn num_aps(&self) -> usize {
        self.targets.len()
    }

    /// Rejects any target outside the AP's candidate set.
    pub fn validate(&self, topo: &Topology, num_job_types: usize) -> Result<()> {
        if self.targets.len() != topo.num_aps() {
            return Err(Error::invariant("action table must have one row per AP", Coord::default()));
        }
        for (k, row) in self.targets.iter().enumerate() {
            validate_ap_actions(topo, k, row, num_job_types)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_ap_actions(topo: &Topology, k: usize, row: &[usize], num_job_types: usize) -> Result<()> {
    if row.len() != num_job_types {
        return Err(Error::invariant("action row must have one entry per job type", Coord::ap(k)));
    }
    for (j, &m) in row.iter().enumerate() {
        if !topo.is_candidate(k, m) {
            return Err(Error::invariant("action outside candidate set", Coord::full(k, m, j)));
        }
    }
    Ok(())
}

/// LSI of one AP: in-flight indicators toward each candidate server plus
/// its current actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApLsi {
    pub ap: usize,
    /// Candidate servers, aligned with the outer index of `transit`.
    pub servers: Vec<usize>,
    /// `transit[pos][j]` for server `servers[pos]`.
    pub transit: Vec<Vec<TransitIndicator>>,
    pub actions: Vec<usize>,
}

impl ApLsi {
    pub fn empty(instance: &ValidatedInstance, k: usize, actions: Vec<usize>) -> Self {
        let cfg = instance.config();
        let servers = instance.topology().candidates(k).to_vec();
        let transit = servers
            .iter()
            .map(|_| vec![TransitIndicator::new(cfg.max_upload_latency); cfg.num_job_types])
            .collect();
        Self { ap: k, servers, transit, actions }
    }

    pub fn transit(&self, m: usize, j: usize) -> Option<&TransitIndicator> {
        let pos = self.servers.binary_search(&m).ok()?;
        self.transit[pos].get(j)
    }

    pub fn transit_mut(&mut self, m: usize, j: usize) -> Option<&mut TransitIndicator> {
        let pos = self.servers.binary_search(&m).ok()?;
        self.transit[pos].get_mut(j)
    }

    /// Total jobs in flight from this AP.
    pub fn in_flight(&self) -> u32 {
        self.transit.iter().flatten().map(TransitIndicator::l1_norm).sum()
    }
}

/// LSI of one processing server: `Q_{m,j}` per job type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerLsi {
    pub server: usize,
    pub queue_len: Vec<usize>,
}

/// Snapshot of every AP and server LSI at an interval boundary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalState {
    pub aps: Vec<Arc<ApLsi>>,
    pub servers: Vec<Arc<ServerLsi>>,
}

impl GlobalState {
    /// Nothing in flight, every queue empty.
    pub fn empty(instance: &ValidatedInstance, actions: &DispatchActionTable) -> Self {
        let cfg = instance.config();
        let aps = (0..cfg.num_aps).map(|k| Arc::new(ApLsi::empty(instance, k, actions.ap(k).to_vec()))).collect();
        let servers = (0..cfg.num_processing_servers())
            .map(|m| Arc::new(ServerLsi { server: m, queue_len: vec![0; cfg.num_job_types] }))
            .collect();
        Self { aps, servers }
    }

    pub fn actions(&self) -> DispatchActionTable {
        DispatchActionTable::new(self.aps.iter().map(|a| a.actions.clone()).collect())
    }

    pub fn queue_len(&self, m: usize, j: usize) -> usize {
        self.servers[m].queue_len[j]
    }

    /// Jobs in flight plus jobs queued.
    pub fn jobs_in_system(&self) -> u64 {
        let transit: u64 = self.aps.iter().map(|a| u64::from(a.in_flight())).sum();
        let queued: u64 = self.servers.iter().flat_map(|s| s.queue_len.iter()).map(|&q| q as u64).sum();
        transit + queued
    }
}

/// What AP `ap` observes: LSIs of its conflict APs and candidate servers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableState {
    pub ap: usize,
    /// Sorted by AP index.
    pub aps: Vec<Arc<ApLsi>>,
    /// Sorted by server index.
    pub servers: Vec<Arc<ServerLsi>>,
}

impl ObservableState {
    pub fn ap_lsi(&self, k: usize) -> Option<&ApLsi> {
        self.aps.binary_search_by_key(&k, |a| a.ap).ok().map(|i| self.aps[i].as_ref())
    }

    pub fn server_lsi(&self, m: usize) -> Option<&ServerLsi> {
        self.servers.binary_search_by_key(&m, |s| s.server).ok().map(|i| self.servers[i].as_ref())
    }

    /// Observed `Q_{m,j}`; `None` when `m` is outside the candidate set.
    pub fn queue_len(&self, m: usize, j: usize) -> Option<usize> {
        self.server_lsi(m).map(|s| s.queue_len[j])
    }

    /// The observing AP's own LSI.
    pub fn own(&self) -> &ApLsi {
        self.ap_lsi(self.ap).expect("an OSI always contains the observer's own LSI")
    }
}

/// `S_k = ({ℛ_{k'} : k' ∈ 𝒳_k}, {𝒬_m : m ∈ ℳ_k})`.
pub fn project_osi(gsi: &GlobalState, topo: &Topology, k: usize) -> ObservableState {
    ObservableState {
        ap: k,
        aps: topo.conflict_set(k).iter().map(|&k2| Arc::clone(&gsi.aps[k2])).collect(),
        servers: topo.candidates(k).iter().map(|&m| Arc::clone(&gsi.servers[m])).collect(),
    }
}
