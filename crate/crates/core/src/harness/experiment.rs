use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::generate::{generate_instance, GeneratorSpec};
use crate::model::{write_atomic, ArrivalModel, ServiceModel, SignalingLatencyModel, TraceEvent, ValidatedInstance, SCHEMA_VERSION};
use crate::policy::make_policy;
use crate::sim::rng::{derive_seed, StreamKind};
use crate::sim::{discounted_cost, run, MeanVar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File { path: PathBuf },
    Generate(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    SignalingLatency,
    ArrivalScale,
    ProcTimeScale,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "signaling_latency" => Ok(Self::SignalingLatency),
            "arrival_scale" => Ok(Self::ArrivalScale),
            "proc_time_scale" => Ok(Self::ProcTimeScale),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Sweep {
    /// Parses `axis=v1,v2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let (axis, values) = text
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("sweep {text:?} is not axis=v1,v2,...")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad sweep value {v:?}"))))
            .collect::<Result<_>>()?;
        Ok(Self { axis: axis.trim().parse()?, values })
    }

    /// Grid points; `None` when there is no sweep.
    fn points(&self) -> Vec<Option<f64>> {
        if self.axis == SweepAxis::None {
            vec![None]
        } else {
            self.values.iter().copied().map(Some).collect()
        }
    }
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub instance: InstanceSource,
    pub policies: Vec<String>,
    pub num_intervals: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub sweep: Sweep,
    pub out: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: self.schema_version, expected: SCHEMA_VERSION });
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidArgument("no policies given".into()));
        }
        if self.sweep.axis != SweepAxis::None {
            if self.sweep.values.is_empty() {
                return Err(Error::InvalidArgument("sweep has no values".into()));
            }
            if self.sweep.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidArgument("sweep values must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(spec)
    }

    pub fn resolve_instance(&self) -> Result<ValidatedInstance> {
        match &self.instance {
            InstanceSource::File { path } => ValidatedInstance::load(path),
            InstanceSource::Generate(g) => generate_instance(g),
        }
    }

    /// Seed of replication `r`; shared by every policy and sweep value.
    pub fn replication_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, StreamKind::Replication, r as u64)
    }
}

/// The instance at one sweep point.
pub fn apply_sweep(instance: &ValidatedInstance, axis: SweepAxis, value: f64) -> Result<ValidatedInstance> {
    match axis {
        SweepAxis::None => Ok(instance.clone()),
        SweepAxis::SignalingLatency => {
            let t_b = instance.config().slots_per_interval;
            if value.fract() != 0.0 || value as usize > t_b {
                return Err(Error::InvalidArgument(format!("signaling latency {value} must be an integer in [0, {t_b}]")));
            }
            instance.with_signaling(SignalingLatencyModel::constant(instance.config().num_aps, value as usize))
        }
        SweepAxis::ArrivalScale => {
            let arrivals = match instance.arrivals() {
                ArrivalModel::Bernoulli { prob } => ArrivalModel::Bernoulli {
                    prob: prob.iter().map(|row| row.iter().map(|p| (p * value).min(1.0)).collect()).collect(),
                },
                // Compress inter-arrival gaps by the factor.
                ArrivalModel::Trace { events, length_slots } => ArrivalModel::Trace {
                    events: events.iter().map(|e| TraceEvent { slot: (e.slot as f64 / value).floor() as u64, ..*e }).collect(),
                    length_slots: ((*length_slots as f64 / value).ceil() as u64).max(1),
                },
            };
            instance.with_arrivals(arrivals)
        }
        SweepAxis::ProcTimeScale => {
            let mean_proc = instance.service().mean_proc.iter().map(|row| row.iter().map(|c| (c * value).max(1.0)).collect()).collect();
            instance.with_service(ServiceModel { mean_proc })
        }
    }
}

/// Per-run scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub policy: String,
    pub sweep_value: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub discounted_cost: f64,
    pub mean_jobs_in_system: f64,
    pub mean_response_intervals: f64,
    pub mean_response_slots: f64,
    pub drop_rate: f64,
    pub arrivals: u64,
    pub completions: u64,
    pub drops: u64,
    pub decisions: u64,
    #[serde(skip)]
    costs: Vec<f64>,
    #[serde(skip)]
    jobs_histogram: BTreeMap<u64, u64>,
}

/// Mean and standard error across replications.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let mv = MeanVar::of(values.iter().copied());
        let n = values.len().max(1) as f64;
        Self { mean: mv.mean, se: (mv.variance / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: String,
    pub sweep_value: Option<f64>,
    pub replications: usize,
    pub mean_cost: Stat,
    pub discounted_cost: Stat,
    pub jobs_in_system: Stat,
    pub response_intervals: Stat,
    pub response_slots: Stat,
    pub drop_rate: Stat,
    /// Arrivals per replication, in replication order.
    pub arrivals: Vec<u64>,
    /// `(jobs, P(jobs in system ≤ jobs))` pooled over replications.
    pub jobs_cdf: Vec<(u64, f64)>,
    /// Mean interval cost across replications.
    pub cost_timeline: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub axis: SweepAxis,
    pub rows: Vec<AggregateRow>,
    pub runs: Vec<RunRecord>,
}

impl ResultBundle {
    pub fn empty() -> Self {
        Self { schema_version: SCHEMA_VERSION, axis: SweepAxis::None, rows: Vec::new(), runs: Vec::new() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: bundle.schema_version, expected: SCHEMA_VERSION });
        }
        Ok(bundle)
    }

    pub fn row(&self, policy: &str, sweep_value: Option<f64>) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.policy == policy && r.sweep_value == sweep_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub software_version: String,
    pub spec: ExperimentSpec,
    /// SHA-256 of the resolved instance JSON, per sweep point.
    pub instance_sha256: Vec<(Option<f64>, String)>,
    pub replication_seeds: Vec<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn label(value: Option<f64>) -> String {
    value.map_or_else(|| "base".to_string(), |v| format!("v{v}"))
}

fn one_run(
    spec: &ExperimentSpec,
    instance: &Arc<ValidatedInstance>,
    policy: &str,
    sweep_value: Option<f64>,
    replication: usize,
) -> Result<RunRecord> {
    let seed = spec.replication_seed(replication);
    let mut pol = make_policy(policy, Arc::clone(instance), seed)?;
    let out = run(instance, pol.as_mut(), spec.num_intervals, seed)?;
    let mut csv = Vec::new();
    out.write_csv(&mut csv)?;
    let path = spec.out.join("runs").join(format!("{policy}_{}_r{replication}.csv", label(sweep_value)));
    write_atomic(&path, &csv)?;
    let summary = out.summary();
    Ok(RunRecord {
        policy: policy.to_string(),
        sweep_value,
        replication,
        seed,
        mean_cost: summary.cost.mean,
        discounted_cost: discounted_cost(&out.intervals, instance.config().discount, out.intervals.len()),
        mean_jobs_in_system: summary.jobs_in_system.mean,
        mean_response_intervals: summary.response_intervals.mean,
        mean_response_slots: summary.response_slots.mean,
        drop_rate: summary.drop_rate,
        arrivals: summary.total_arrivals,
        completions: summary.total_completions,
        drops: summary.total_drops,
        decisions: out.decisions,
        costs: out.costs(),
        jobs_histogram: summary.jobs_in_system_histogram,
    })
}

fn aggregate(policy: &str, sweep_value: Option<f64>, runs: &[&RunRecord]) -> AggregateRow {
    let stat = |f: fn(&RunRecord) -> f64| Stat::of(runs.iter().map(|r| f(r)));
    let mut pooled: BTreeMap<u64, u64> = BTreeMap::new();
    for r in runs {
        for (&jobs, &n) in &r.jobs_histogram {
            *pooled.entry(jobs).or_insert(0) += n;
        }
    }
    let total: u64 = pooled.values().sum();
    let mut acc = 0;
    let jobs_cdf = pooled
        .into_iter()
        .map(|(jobs, n)| {
            acc += n;
            (jobs, acc as f64 / total as f64)
        })
        .collect();
    let len = runs.iter().map(|r| r.costs.len()).max().unwrap_or(0);
    let cost_timeline = (0..len)
        .map(|t| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.costs.get(t).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    AggregateRow {
        policy: policy.to_string(),
        sweep_value,
        replications: runs.len(),
        mean_cost: stat(|r| r.mean_cost),
        discounted_cost: stat(|r| r.discounted_cost),
        jobs_in_system: stat(|r| r.mean_jobs_in_system),
        response_intervals: stat(|r| r.mean_response_intervals),
        response_slots: stat(|r| r.mean_response_slots),
        drop_rate: stat(|r| r.drop_rate),
        arrivals: runs.iter().map(|r| r.arrivals).collect(),
        jobs_cdf,
        cost_timeline,
    }
}

/// Runs the full grid, writes `runs/*.csv`, `aggregate.json` and
/// `manifest.json` under `spec.out`, and returns the bundle.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultBundle> {
    spec.validate()?;
    let base = spec.resolve_instance()?;
    let shared = Arc::new(base.clone());
    for p in &spec.policies {
        // Fail on a bad name before any work.
        make_policy(p, Arc::clone(&shared), 0)?;
    }
    let points = spec.sweep.points();
    let mut variants = Vec::with_capacity(points.len());
    let mut hashes = Vec::with_capacity(points.len());
    for &v in &points {
        let inst = match v {
            Some(v) => apply_sweep(&base, spec.sweep.axis, v)?,
            None => base.clone(),
        };
        hashes.push((v, sha256_hex(inst.to_json()?.as_bytes())));
        variants.push(Arc::new(inst));
    }

    let mut grid = Vec::new();
    for (vi, &v) in points.iter().enumerate() {
        for p in &spec.policies {
            for r in 0..spec.replications {
                grid.push((vi, v, p.as_str(), r));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| grid.par_iter().map(|&(vi, v, p, r)| one_run(spec, &variants[vi], p, v, r)).collect());
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &v in &points {
        for p in &spec.policies {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.sweep_value == v && &r.policy == p).collect();
            rows.push(aggregate(p, v, &mine));
        }
    }
    let bundle = ResultBundle { schema_version: SCHEMA_VERSION, axis: spec.sweep.axis, rows, runs };
    write_atomic(&spec.out.join("aggregate.json"), serde_json::to_string_pretty(&bundle)?.as_bytes())?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        instance_sha256: hashes,
        replication_seeds: (0..spec.replications).map(|r| spec.replication_seed(r)).collect(),
    };
    write_atomic(&spec.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(bundle)
}
