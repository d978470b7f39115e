//! `mlprov` command line: manager service, dataset generation, offline
//! ingest, catalog queries, benchmarks and spec validation.
//!
//! Exit codes: 0 success, 1 diagnostics (bad input, failed validation),
//! 2 internal error or usage error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use mlprov::capture::read_provlog;
use mlprov::manager::{server, Manager, ManagerConfig, DEFAULT_PENDING_BOUND};
use mlprov::model::SchemaVariant;
use mlprov::queries::{self, render, NamedQuery, OutputFormat, Params};
use mlprov::spec::{parse_spec, validate, WorkflowSpec};
use mlprov::store::TripleStore;
use mlprov::synthbench::bench::{self, BenchReport, QueryBenchConfig};
use mlprov::synthbench::{generate_store, specs, Lifecycle, SyntheticParams, WorkloadConfig};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Diagnostic(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Diagnostic(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn diag(e: impl ToString) -> CliError {
    CliError::Diagnostic(e.to_string())
}

fn internal(e: impl ToString) -> CliError {
    CliError::Internal(e.to_string())
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "mlprov", version, about = "Workflow provenance for the scientific ML lifecycle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    With,
    Without,
}

impl From<Variant> for SchemaVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::With => SchemaVariant::WithProvMl,
            Variant::Without => SchemaVariant::WithoutProvMl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => OutputFormat::Table,
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the manager HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
        #[arg(long, value_enum, default_value = "with")]
        variant: Variant,
        /// Specification files to load at start.
        #[arg(long = "spec")]
        specs: Vec<PathBuf>,
        /// Load the synthetic lifecycle specifications.
        #[arg(long)]
        synthetic_specs: bool,
        /// Graph dump to import at start.
        #[arg(long)]
        import: Option<PathBuf>,
        #[arg(long)]
        dead_letters: Option<PathBuf>,
    },
    /// Generate a synthetic lifecycle dataset.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "with")]
        variant: Variant,
        /// Dump output; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write the capture events as a provlog.
        #[arg(long)]
        provlog: Option<PathBuf>,
    },
    /// Replay a provlog into a fresh manager (or a running one).
    Ingest {
        provlog: PathBuf,
        #[arg(long = "spec")]
        specs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "with")]
        variant: Variant,
        /// Client id of the replayed batches; defaults to the file stem.
        #[arg(long)]
        client: Option<String>,
        #[arg(long, default_value_t = 50)]
        batch_size: usize,
        /// POST batches to this manager instead of ingesting locally.
        #[arg(long)]
        endpoint: Option<String>,
        /// Write the resulting graph dump here (local ingest only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Catalog queries.
    Query {
        #[command(subcommand)]
        action: QueryAction,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Fetch the graph dump of a running manager.
    Export {
        #[arg(long, default_value = "http://127.0.0.1:7878")]
        endpoint: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate specification files.
    ValidateSpec { files: Vec<PathBuf> },
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    workflows: Option<usize>,
}

impl DataArgs {
    fn params(&self) -> Result<SyntheticParams, CliError> {
        let mut p = SyntheticParams::scaled(self.scale, self.seed);
        if let Some(w) = self.workflows {
            p.n_workflows = w;
        }
        p.validate().map_err(diag)?;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum QueryAction {
    /// Run a catalog query. The graph comes from --dump, --endpoint, or is
    /// generated from --scale/--seed.
    Run {
        query: NamedQuery,
        #[arg(long, value_enum, default_value = "with")]
        variant: Variant,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long, conflicts_with = "endpoint")]
        dump: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print the query text for a variant.
    Show {
        query: NamedQuery,
        #[arg(long, value_enum, default_value = "with")]
        variant: Variant,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Capture overhead per setting against a no-capture baseline.
    Overhead {
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 500)]
        batch_sleep_us: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak scalability over parallel workloads.
    Scale {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        xs: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        #[arg(long, default_value_t = 500)]
        batch_sleep_us: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Q1, Q5 and Q7 timings in both variants.
    Query {
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| diag(format!("{}: {e}", path.display())))
}

fn write_or_stdout(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| internal(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(internal),
    }
}

fn load_specs(paths: &[PathBuf]) -> Result<Vec<WorkflowSpec>, CliError> {
    if paths.is_empty() {
        return Ok(specs::lifecycle_specs(&SyntheticParams::paper()));
    }
    paths.iter().map(|p| parse_spec(&read(p)?).map_err(|e| diag(format!("{}: {e}", p.display())))).collect()
}

fn manager_with(
    variant: SchemaVariant,
    specs: Vec<WorkflowSpec>,
    dead_letters: Option<PathBuf>,
) -> Result<Manager, CliError> {
    let m =
        Manager::new(ManagerConfig { variant, pending_bound: DEFAULT_PENDING_BOUND, dead_letter_path: dead_letters });
    for spec in specs {
        for w in m.load_spec(spec).map_err(diag)? {
            eprintln!("{w}");
        }
    }
    Ok(m)
}

fn parse_params(pairs: &[String]) -> Result<Params, CliError> {
    let mut p = Params::new();
    for pair in pairs {
        p.insert_pair(pair).map_err(diag)?;
    }
    Ok(p)
}

fn post_json(url: &str, body: String) -> Result<String, CliError> {
    let resp = ureq::post(url).header("content-type", "application/json").send(body).map_err(internal)?;
    resp.into_body().read_to_string().map_err(internal)
}

fn serve(
    addr: SocketAddr,
    variant: Variant,
    spec_files: &[PathBuf],
    synthetic: bool,
    import: Option<&Path>,
    dead: Option<PathBuf>,
) -> CliResult {
    let mut specs = Vec::new();
    if synthetic {
        specs = load_specs(&[])?;
    }
    for p in spec_files {
        specs.push(parse_spec(&read(p)?).map_err(|e| diag(format!("{}: {e}", p.display())))?);
    }
    let m = manager_with(variant.into(), specs, dead)?;
    if let Some(path) = import {
        let n = m.import(&read(path)?).map_err(diag)?;
        eprintln!("imported {n} triples");
    }
    let rt = tokio::runtime::Runtime::new().map_err(internal)?;
    rt.block_on(server::serve(Arc::new(m), addr)).map_err(internal)
}

fn gen(
    data: &DataArgs,
    variant: Variant,
    out: Option<&Path>,
    manifest: Option<&Path>,
    provlog: Option<&Path>,
) -> CliResult {
    let params = data.params()?;
    let life = Lifecycle::plant(&params);
    let (store, m) = generate_store(&life, variant.into()).map_err(internal)?;
    if let Some(path) = provlog {
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(internal)?);
        let mut err = None;
        life.for_each_event(|e| {
            if err.is_none() {
                err = serde_json::to_writer(&mut f, &e)
                    .map_err(std::io::Error::from)
                    .and_then(|_| f.write_all(b"\n"))
                    .err();
            }
        });
        if let Some(e) = err.or_else(|| f.flush().err()) {
            return Err(internal(e));
        }
    }
    if let Some(path) = manifest {
        fs::write(path, serde_json::to_string_pretty(&m).map_err(internal)?).map_err(internal)?;
    }
    match out {
        Some(p) => {
            let mut f = std::io::BufWriter::new(fs::File::create(p).map_err(internal)?);
            store.export(&mut f).and_then(|_| f.flush()).map_err(internal)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            store.export(&mut stdout).map_err(internal)?;
        }
    }
    eprintln!("{} triples, {} events", m.triples, m.events);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ingest(
    provlog: &Path,
    spec_files: &[PathBuf],
    variant: Variant,
    client: Option<String>,
    batch_size: usize,
    endpoint: Option<&str>,
    out: Option<&Path>,
) -> CliResult {
    let file = fs::File::open(provlog).map_err(|e| diag(format!("{}: {e}", provlog.display())))?;
    let events = read_provlog(BufReader::new(file)).map_err(diag)?;
    let client =
        client.unwrap_or_else(|| provlog.file_stem().map_or("replay".into(), |s| s.to_string_lossy().into_owned()));
    if let Some(ep) = endpoint {
        let url = format!("{}/ingest", ep.trim_end_matches('/'));
        for chunk in events.chunks(batch_size.max(1)) {
            let batch = mlprov::capture::Batch {
                client: client.clone(),
                flush_reason: mlprov::capture::FlushReason::ExplicitFlush,
                events: chunk.to_vec(),
            };
            post_json(&url, serde_json::to_string(&batch).map_err(internal)?)?;
        }
        eprintln!("posted {} events", events.len());
        return Ok(());
    }
    let m = manager_with(variant.into(), load_specs(spec_files)?, None)?;
    let ack = m.replay(&client, events, batch_size);
    eprintln!(
        "accepted {} duplicates {} deferred {} quarantined {}",
        ack.accepted, ack.duplicates, ack.deferred, ack.quarantined
    );
    if let Some(p) = out {
        write_or_stdout(Some(p), &m.export_string())?;
    }
    if ack.quarantined > 0 {
        return Err(diag(format!("{} events quarantined", ack.quarantined)));
    }
    Ok(())
}

fn query_run(
    q: NamedQuery,
    variant: Variant,
    params: &[String],
    format: Format,
    dump: Option<&Path>,
    endpoint: Option<&str>,
    data: &DataArgs,
) -> CliResult {
    let params = parse_params(params)?;
    if let Some(ep) = endpoint {
        let body = serde_json::json!({ "query": q.to_string(), "variant": SchemaVariant::from(variant).label(), "params": params.0 });
        let text = post_json(&format!("{}/query", ep.trim_end_matches('/')), body.to_string())?;
        println!("{text}");
        return Ok(());
    }
    let ast = queries::build(q, variant.into(), &params).map_err(diag)?;
    let store = match dump {
        Some(p) => {
            let mut s = TripleStore::new();
            s.import(read(p)?.as_bytes()).map_err(diag)?;
            s
        }
        None => generate_store(&Lifecycle::plant(&data.params()?), variant.into()).map_err(internal)?.0,
    };
    let table = queries::execute(&store, &ast).map_err(diag)?;
    print!("{}", queries::format_table(&table, format.into()));
    Ok(())
}

fn emit_report(report: &BenchReport, out: Option<&Path>) -> CliResult {
    print!("{}", report.table());
    if let Some(p) = out {
        fs::write(p, report.to_json()).map_err(internal)?;
        eprintln!("report written to {}", p.display());
    }
    Ok(())
}

fn workload(scale: f64, batch_sleep_us: u64) -> WorkloadConfig {
    WorkloadConfig { batch_sleep: Duration::from_micros(batch_sleep_us), ..WorkloadConfig::scaled(scale) }
}

fn run_bench(which: BenchCommand) -> CliResult {
    match which {
        BenchCommand::Overhead { reps, scale, batch_sleep_us, out } => {
            let dir = std::env::temp_dir().join(format!("mlprov-bench-{}", std::process::id()));
            let report =
                bench::run_overhead_bench(&workload(scale, batch_sleep_us), &bench::default_settings(), reps, &dir);
            let _ = fs::remove_dir_all(&dir);
            emit_report(&report.map_err(diag)?, out.as_deref())
        }
        BenchCommand::Scale { xs, reps, scale, batch_sleep_us, out } => {
            let report = bench::run_scalability(&workload(scale, batch_sleep_us), &xs, reps).map_err(diag)?;
            emit_report(&report, out.as_deref())
        }
        BenchCommand::Query { reps, scale, seed, out } => {
            let config =
                QueryBenchConfig { max_reps: reps, min_reps: reps.min(bench::MIN_REPS), ..QueryBenchConfig::default() };
            let report = bench::run_query_bench(&SyntheticParams::scaled(scale, seed), &config).map_err(diag)?;
            emit_report(&report, out.as_deref())
        }
    }
}

fn export(endpoint: &str, out: Option<&Path>) -> CliResult {
    let url = format!("{}/export", endpoint.trim_end_matches('/'));
    let text = ureq::get(&url).call().map_err(internal)?.into_body().read_to_string().map_err(internal)?;
    write_or_stdout(out, &text)
}

fn validate_spec(files: &[PathBuf]) -> CliResult {
    if files.is_empty() {
        return Err(diag("no specification files given"));
    }
    let mut errors = 0;
    let mut summary: BTreeMap<String, usize> = BTreeMap::new();
    for path in files {
        match parse_spec(&read(path)?) {
            Err(e) => {
                println!("{}: {e}", path.display());
                errors += 1;
            }
            Ok(spec) => {
                let diags = validate(&spec);
                for d in &diags {
                    println!("{}: {d}", path.display());
                }
                errors += diags.iter().filter(|d| d.is_error()).count();
                summary.insert(path.display().to_string(), spec.transformations.len());
            }
        }
    }
    for (path, n) in &summary {
        println!("{path}: {n} transformations");
    }
    if errors > 0 {
        return Err(diag(format!("{errors} error(s)")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve { addr, variant, specs, synthetic_specs, import, dead_letters } => {
            serve(addr, variant, &specs, synthetic_specs, import.as_deref(), dead_letters)
        }
        Command::Gen { data, variant, out, manifest, provlog } => {
            gen(&data, variant, out.as_deref(), manifest.as_deref(), provlog.as_deref())
        }
        Command::Ingest { provlog, specs, variant, client, batch_size, endpoint, out } => {
            ingest(&provlog, &specs, variant, client, batch_size, endpoint.as_deref(), out.as_deref())
        }
        Command::Query { action: QueryAction::Run { query, variant, params, format, dump, endpoint, data } } => {
            query_run(query, variant, &params, format, dump.as_deref(), endpoint.as_deref(), &data)
        }
        Command::Query { action: QueryAction::Show { query, variant, params } } => {
            let mut p = parse_params(&params)?;
            for name in query.parameters() {
                if !p.0.contains_key(*name) {
                    p.0.insert(name.to_string(), placeholder(name).to_string());
                }
            }
            print!("{}", render(&queries::build(query, variant.into(), &p).map_err(diag)?));
            Ok(())
        }
        Command::Bench { which } => run_bench(which),
        Command::Export { endpoint, out } => export(&endpoint, out.as_deref()),
        Command::ValidateSpec { files } => validate_spec(&files),
    }
}

/// Stand-in values so `query show` renders without real parameters.
fn placeholder(name: &str) -> &'static str {
    match name {
        "slice_lo" | "slice_hi" => "0",
        _ => "exp:example",
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
