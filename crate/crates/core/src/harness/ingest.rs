use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, ServiceModel, TraceEvent};

/// Index ranges a normalized trace is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMapping {
    pub num_aps: usize,
    pub num_job_types: usize,
    /// Including the cloud.
    pub num_processing_servers: usize,
    /// Trace length in slots; defaults to one past the last event.
    pub length_slots: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOverrides {
    pub arrivals: ArrivalModel,
    pub service: Option<ServiceModel>,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(input)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing column {name}") })?;
    raw.parse().map_err(|_| Error::Parse { line, msg: format!("bad {name} value {raw:?}") })
}

/// A header row is recognized by a non-numeric first field.
fn is_header(rec: &csv::StringRecord) -> bool {
    rec.get(0).is_some_and(|f| f.parse::<f64>().is_err())
}

/// Rows `slot,ap,job_type[,count]`. Events are ordered by slot, ties in
/// file order; a row with `count = n` dispatches `n` jobs back to back.
pub fn ingest_arrivals<R: Read>(input: R, mapping: &TraceMapping) -> Result<ArrivalModel> {
    let mut events = Vec::new();
    for (i, rec) in reader(input).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && is_header(&rec) {
            continue;
        }
        let slot: u64 = field(&rec, 0, "slot", line)?;
        let ap: usize = field(&rec, 1, "ap", line)?;
        let job_type: usize = field(&rec, 2, "job_type", line)?;
        let count: u32 = if rec.len() > 3 { field(&rec, 3, "count", line)? } else { 1 };
        if ap >= mapping.num_aps {
            return Err(Error::IndexOutOfRange { line, msg: format!("ap {ap} >= {}", mapping.num_aps) });
        }
        if job_type >= mapping.num_job_types {
            return Err(Error::IndexOutOfRange { line, msg: format!("job_type {job_type} >= {}", mapping.num_job_types) });
        }
        if count > 0 {
            events.push(TraceEvent { slot, ap, job_type, count });
        }
    }
    events.sort_by_key(|e| e.slot);
    let last = events.last().map_or(0, |e| e.slot + 1);
    let length_slots = match mapping.length_slots {
        Some(len) if len < last => {
            return Err(Error::IndexOutOfRange { line: 0, msg: format!("event at slot {} beyond length {len}", last - 1) })
        }
        Some(len) => len,
        None => last,
    };
    Ok(ArrivalModel::Trace { events, length_slots })
}

/// Rows `job_type,server,mean_proc_slots` overriding entries of `base`.
pub fn ingest_service<R: Read>(input: R, base: &ServiceModel, mapping: &TraceMapping) -> Result<ServiceModel> {
    let mut out = base.clone();
    for (i, rec) in reader(input).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && is_header(&rec) {
            continue;
        }
        let job_type: usize = field(&rec, 0, "job_type", line)?;
        let server: usize = field(&rec, 1, "server", line)?;
        let c: f64 = field(&rec, 2, "mean_proc_slots", line)?;
        if job_type >= mapping.num_job_types {
            return Err(Error::IndexOutOfRange { line, msg: format!("job_type {job_type} >= {}", mapping.num_job_types) });
        }
        if server >= mapping.num_processing_servers {
            return Err(Error::IndexOutOfRange { line, msg: format!("server {server} >= {}", mapping.num_processing_servers) });
        }
        if !(c.is_finite() && c >= 1.0) {
            return Err(Error::Parse { line, msg: format!("mean_proc_slots {c} must be at least 1") });
        }
        out.mean_proc[server][job_type] = c;
    }
    Ok(out)
}

pub fn ingest_trace(
    arrivals: &Path,
    service: Option<&Path>,
    base_service: &ServiceModel,
    mapping: &TraceMapping,
) -> Result<TraceOverrides> {
    let arrivals = ingest_arrivals(std::fs::File::open(arrivals)?, mapping)?;
    let service = match service {
        Some(path) => Some(ingest_service(std::fs::File::open(path)?, base_service, mapping)?),
        None => None,
    };
    Ok(TraceOverrides { arrivals, service })
}
