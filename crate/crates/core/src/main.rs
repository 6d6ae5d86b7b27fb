use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgedisp::harness::{
    certify, emit_plotdata, generate_instance, ingest_trace, run_experiment, CertifyOptions, ExperimentSpec,
    GeneratorSpec, InstanceSource, ResultBundle, Sweep, TraceMapping,
};
use edgedisp::model::{write_atomic, ValidatedInstance, SCHEMA_VERSION};
use edgedisp::{Error, Result};

#[derive(Parser)]
#[command(name = "edgedisp", version, about = "Job dispatching under outdated state: simulate, compare, certify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic BA-topology instance.
    Generate(GenerateArgs),
    /// Replace an instance's arrivals (and optionally service times) with a CSV trace.
    Ingest(IngestArgs),
    /// Paired-seed policy comparison, optionally over a sweep.
    Run(RunArgs),
    /// Check value functions against the oracles on an instance.
    Certify(CertifyArgs),
    /// Turn a result bundle into plot tables.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// GeneratorSpec JSON; defaults to the 15-AP benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Rows `slot,ap,job_type[,count]`.
    #[arg(long)]
    arrivals: PathBuf,
    /// Rows `job_type,server,mean_proc_slots`.
    #[arg(long)]
    service: Option<PathBuf>,
    #[arg(long)]
    length_slots: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// ExperimentSpec JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    #[arg(long)]
    intervals: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `axis=v1,v2,...` with axis one of signaling_latency, arrival_scale, proc_time_scale.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Intervals of the single-AP decoupling audit.
    #[arg(long, default_value_t = 500)]
    intervals: usize,
    /// Worker threads for the Monte-Carlo replications.
    #[arg(long)]
    jobs: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Result bundle; defaults to `<out>/aggregate.json`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn experiment_spec(args: RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            instance: InstanceSource::Generate(GeneratorSpec::default()),
            policies: vec!["random".into(), "selfish".into(), "queue_aware".into(), "mdp".into()],
            num_intervals: 1000,
            replications: 10,
            seed: 1,
            sweep: Sweep::default(),
            out: PathBuf::from("results"),
            jobs: 1,
        },
    };
    if let Some(path) = args.instance {
        spec.instance = InstanceSource::File { path };
    }
    if !args.policy.is_empty() {
        spec.policies = args.policy;
    }
    if let Some(v) = args.intervals {
        spec.num_intervals = v;
    }
    if let Some(v) = args.replications {
        spec.replications = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.sweep {
        spec.sweep = Sweep::parse(&v)?;
    }
    if let Some(v) = args.out {
        spec.out = v;
    }
    if let Some(v) = args.jobs {
        spec.jobs = v;
    }
    Ok(spec)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => {
            let mut spec: GeneratorSpec = match &a.config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => GeneratorSpec::default(),
            };
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let inst = generate_instance(&spec)?;
            write_atomic(&a.out, inst.to_json()?.as_bytes())?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::Ingest(a) => {
            let base = ValidatedInstance::load(&a.instance)?;
            let cfg = base.config();
            let mapping = TraceMapping {
                num_aps: cfg.num_aps,
                num_job_types: cfg.num_job_types,
                num_processing_servers: cfg.num_processing_servers(),
                length_slots: a.length_slots,
            };
            let over = ingest_trace(&a.arrivals, a.service.as_deref(), base.service(), &mapping)?;
            let mut inst = base.with_arrivals(over.arrivals)?;
            if let Some(service) = over.service {
                inst = inst.with_service(service)?;
            }
            write_atomic(&a.out, inst.to_json()?.as_bytes())?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::Run(a) => {
            let spec = experiment_spec(a)?;
            let bundle = run_experiment(&spec)?;
            for row in &bundle.rows {
                println!(
                    "{:<12} {:>8} cost {:>10.3} ± {:<8.3} response {:>7.3} intervals  drop {:.4}",
                    row.policy,
                    row.sweep_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                    row.mean_cost.mean,
                    row.mean_cost.se,
                    row.response_intervals.mean,
                    row.drop_rate.mean,
                );
            }
            eprintln!("results in {}", spec.out.display());
        }
        Command::Certify(a) => {
            let inst = ValidatedInstance::load(&a.instance)?;
            let opts = CertifyOptions {
                replications: a.replications,
                seed: a.seed,
                audit_intervals: a.intervals,
                ..CertifyOptions::default()
            };
            let report = match a.jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
                    .install(|| certify(&inst, &opts))?,
                None => certify(&inst, &opts)?,
            };
            for c in &report.checks {
                println!("{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(out) = a.out {
                write_atomic(&out, serde_json::to_string_pretty(&report)?.as_bytes())?;
            }
            return Ok(report.passed());
        }
        Command::Plotdata(a) => {
            let input = a.input.unwrap_or_else(|| a.out.join("aggregate.json"));
            let bundle = ResultBundle::load(&input)?;
            for path in emit_plotdata(&bundle, &a.out.join("plots"))? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
