use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::experiment::ResultBundle;
use crate::model::write_atomic;

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes the plot tables into `out_dir`:
///
/// * `bar_metrics.csv`: one row per policy and sweep value.
/// * `cost_timeline.csv`: mean interval cost over replications.
/// * `jobs_cdf.csv`: pooled CDF of jobs in system; also one
///   `jobs_cdf_<value>.csv` per sweep value.
/// * `sweep.csv`: headline metrics against the sweep axis.
pub fn emit_plotdata(bundle: &ResultBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let path = out_dir.join("bar_metrics.csv");
    write_table(
        &path,
        &[
            "policy",
            "sweep_value",
            "mean_cost",
            "mean_cost_se",
            "response_intervals",
            "response_intervals_se",
            "response_slots",
            "drop_rate",
            "jobs_in_system",
        ],
        bundle.rows.iter().map(|r| {
            vec![
                r.policy.clone(),
                fmt_value(r.sweep_value),
                r.mean_cost.mean.to_string(),
                r.mean_cost.se.to_string(),
                r.response_intervals.mean.to_string(),
                r.response_intervals.se.to_string(),
                r.response_slots.mean.to_string(),
                r.drop_rate.mean.to_string(),
                r.jobs_in_system.mean.to_string(),
            ]
        }),
    )?;
    written.push(path);

    let path = out_dir.join("cost_timeline.csv");
    write_table(
        &path,
        &["policy", "sweep_value", "t", "mean_cost"],
        bundle.rows.iter().flat_map(|r| {
            r.cost_timeline
                .iter()
                .enumerate()
                .map(move |(t, c)| vec![r.policy.clone(), fmt_value(r.sweep_value), t.to_string(), c.to_string()])
        }),
    )?;
    written.push(path);

    let cdf_rows = |value: Option<Option<f64>>| {
        bundle.rows.iter().filter(move |r| value.is_none_or(|v| r.sweep_value == v)).flat_map(|r| {
            r.jobs_cdf
                .iter()
                .map(move |(jobs, cum)| vec![r.policy.clone(), fmt_value(r.sweep_value), jobs.to_string(), cum.to_string()])
        })
    };
    let header = ["policy", "sweep_value", "jobs", "cumulative"];
    let path = out_dir.join("jobs_cdf.csv");
    write_table(&path, &header, cdf_rows(None))?;
    written.push(path);
    let mut values: Vec<f64> = bundle.rows.iter().filter_map(|r| r.sweep_value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    for v in values {
        let path = out_dir.join(format!("jobs_cdf_{v}.csv"));
        write_table(&path, &header, cdf_rows(Some(Some(v))))?;
        written.push(path);
    }

    let path = out_dir.join("sweep.csv");
    let axis = serde_json::to_value(bundle.axis)?.as_str().unwrap_or_default().to_string();
    write_table(
        &path,
        &["axis", "value", "policy", "mean_cost", "response_intervals", "drop_rate", "jobs_in_system"],
        bundle.rows.iter().map(|r| {
            vec![
                axis.clone(),
                fmt_value(r.sweep_value),
                r.policy.clone(),
                r.mean_cost.mean.to_string(),
                r.response_intervals.mean.to_string(),
                r.drop_rate.mean.to_string(),
                r.jobs_in_system.mean.to_string(),
            ]
        }),
    )?;
    written.push(path);
    Ok(written)
}
