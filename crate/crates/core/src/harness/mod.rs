//! Experiment plumbing: synthetic instances, trace ingestion, paired-seed
//! runs, certification and plot tables.

pub mod certify;
pub mod experiment;
pub mod generate;
pub mod ingest;
pub mod plotdata;

pub use certify::{certify, decoupling_audit, AuditResult, CertifyOptions, CertifyReport, CheckResult};
pub use experiment::{
    apply_sweep, run_experiment, AggregateRow, ExperimentSpec, InstanceSource, Manifest, ResultBundle, RunRecord,
    Stat, Sweep, SweepAxis,
};
pub use generate::{barabasi_albert, generate_instance, GeneratorSpec};
pub use ingest::{ingest_arrivals, ingest_service, ingest_trace, TraceMapping, TraceOverrides};
pub use plotdata::emit_plotdata;
