//! Round-robin schedule of AP subsets whose edge candidate sets do not
//! overlap, so the APs of one subset can update in the same interval.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{write_atomic, Topology, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPartition {
    subsets: Vec<Vec<usize>>,
}

/// Why a partition is invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    /// An AP appears in no subset.
    Missing { ap: usize },
    /// An AP appears twice, or is out of range.
    Duplicate { ap: usize },
    /// Two APs in one subset share an edge server.
    Overlap { subset: usize, a: usize, b: usize },
}

impl SubsetPartition {
    /// Subsets are sorted internally and ordered by their smallest AP.
    pub fn new(subsets: Vec<Vec<usize>>) -> Self {
        let mut subsets: Vec<Vec<usize>> = subsets
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        subsets.sort_by_key(|s| s[0]);
        Self { subsets }
    }

    pub fn singletons(num_aps: usize) -> Self {
        Self { subsets: (0..num_aps).map(|k| vec![k]).collect() }
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// Period `N`.
    pub fn period(&self) -> usize {
        self.subsets.len()
    }

    /// `𝒴_{t mod N}`.
    pub fn scheduled_subset(&self, t: u64) -> &[usize] {
        &self.subsets[(t % self.subsets.len() as u64) as usize]
    }

    pub fn is_scheduled(&self, ap: usize, t: u64) -> bool {
        self.scheduled_subset(t).binary_search(&ap).is_ok()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PartitionFile { schema_version: SCHEMA_VERSION, subsets: self.subsets.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PartitionFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: file.schema_version, expected: SCHEMA_VERSION });
        }
        Ok(Self::new(file.subsets))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PartitionFile {
    schema_version: u32,
    subsets: Vec<Vec<usize>>,
}

fn subsets_disjoint(topo: &Topology, a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|&x| b.iter().all(|&y| !topo.share_edge_server(x, y)))
}

/// `I_n`: how many other subsets conflict with subset `n`.
fn conflict_count(topo: &Topology, subsets: &[Vec<usize>], n: usize) -> usize {
    (0..subsets.len()).filter(|&o| o != n && !subsets_disjoint(topo, &subsets[n], &subsets[o])).count()
}

/// Greedy merging from singletons: while two subsets can be merged, take
/// the subset with the fewest conflicts among those with at least one
/// (lowest index on ties; any subset if none conflict) and merge it with
/// its lowest-index compatible subset.
pub fn greedy_partition(topo: &Topology) -> SubsetPartition {
    let mut subsets: Vec<Vec<usize>> = (0..topo.num_aps()).map(|k| vec![k]).collect();
    loop {
        let mergeable = |n: usize| (0..subsets.len()).find(|&o| o != n && subsets_disjoint(topo, &subsets[n], &subsets[o]));
        let counts: Vec<usize> = (0..subsets.len()).map(|n| conflict_count(topo, &subsets, n)).collect();
        let open: Vec<usize> = (0..subsets.len()).filter(|&n| mergeable(n).is_some()).collect();
        if open.is_empty() {
            break;
        }
        let pick = open
            .iter()
            .copied()
            .filter(|&n| counts[n] >= 1)
            .min_by_key(|&n| (counts[n], n))
            .unwrap_or(open[0]);
        let partner = mergeable(pick).expect("picked subset is mergeable");
        let (lo, hi) = (pick.min(partner), pick.max(partner));
        let moved = subsets.remove(hi);
        subsets[lo].extend(moved);
        subsets[lo].sort_unstable();
        subsets.sort_by_key(|s| s[0]);
    }
    SubsetPartition::new(subsets)
}

/// Checks coverage and per-subset disjointness; reports the first failure.
pub fn validate_partition(partition: &SubsetPartition, topo: &Topology) -> std::result::Result<(), PartitionViolation> {
    let mut seen = vec![false; topo.num_aps()];
    for subset in partition.subsets() {
        for &ap in subset {
            match seen.get_mut(ap) {
                Some(flag) if !*flag => *flag = true,
                _ => return Err(PartitionViolation::Duplicate { ap }),
            }
        }
    }
    if let Some(ap) = seen.iter().position(|&s| !s) {
        return Err(PartitionViolation::Missing { ap });
    }
    for (n, subset) in partition.subsets().iter().enumerate() {
        for (i, &a) in subset.iter().enumerate() {
            for &b in &subset[i + 1..] {
                if topo.share_edge_server(a, b) {
                    return Err(PartitionViolation::Overlap { subset: n, a, b });
                }
            }
        }
    }
    Ok(())
}

/// Smallest valid period, by enumerating set partitions. Exponential;
/// meant for `K ≤ 8`.
pub fn minimal_period(topo: &Topology) -> usize {
    fn place(topo: &Topology, k: usize, groups: &mut Vec<Vec<usize>>, best: &mut usize) {
        if groups.len() >= *best {
            return;
        }
        if k == topo.num_aps() {
            *best = groups.len();
            return;
        }
        for g in 0..groups.len() {
            if groups[g].iter().all(|&o| !topo.share_edge_server(o, k)) {
                groups[g].push(k);
                place(topo, k + 1, groups, best);
                groups[g].pop();
            }
        }
        groups.push(vec![k]);
        place(topo, k + 1, groups, best);
        groups.pop();
    }
    let mut best = topo.num_aps().max(1);
    if topo.num_aps() == 0 {
        return 0;
    }
    place(topo, 0, &mut Vec::new(), &mut best);
    best
}
