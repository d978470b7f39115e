//! Benchmark harness: capture overhead per setting, weak scalability over
//! parallel workloads, and query timings in both schema variants.
//! Repetitions are interleaved across settings; medians keep every run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::workload::{run_workload, WorkloadConfig};
use super::{generate_store, Lifecycle, SynthError, SyntheticParams};
use crate::capture::{BatchSink, Broker, CaptureClient, CaptureConfig, Consumer};
use crate::manager::{server, Manager};
use crate::model::SchemaVariant;
use crate::queries::{build, execute, NamedQuery, Params};
use crate::store::TripleStore;

pub const MIN_REPS: usize = 10;
const MAX_ATTEMPTS: usize = 3;

/// A named capture configuration; `None` is the no-capture baseline. The
/// endpoint of online settings is filled in per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureSetting {
    pub label: String,
    pub capture: Option<CaptureConfig>,
}

pub const BASELINE: &str = "baseline";

pub fn setting_label(queue_size: usize, diskful: bool, online: bool) -> String {
    format!(
        "queue={queue_size} {} {}",
        if diskful { "diskful" } else { "diskless" },
        if online { "online" } else { "offline" }
    )
}

fn setting(queue_size: usize, diskful: bool, online: bool) -> CaptureSetting {
    CaptureSetting {
        label: setting_label(queue_size, diskful, online),
        capture: Some(CaptureConfig {
            queue_size,
            diskful,
            online,
            manager_endpoint: None,
            log_path: None,
            client_id: "bench".into(),
        }),
    }
}

/// Baseline, queue sizes 50/10/1 diskless online, then queue 50 diskful
/// online and offline.
pub fn default_settings() -> Vec<CaptureSetting> {
    vec![
        CaptureSetting { label: BASELINE.into(), capture: None },
        setting(50, false, true),
        setting(10, false, true),
        setting(1, false, true),
        setting(50, true, true),
        setting(50, true, false),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub label: String,
    pub repetitions: usize,
    pub runs_s: Vec<f64>,
    pub median_s: f64,
    /// Median relative to the baseline median, in percent.
    pub overhead_percent: Option<f64>,
    /// Median relative to the first setting (x=1), in percent.
    pub deviation_percent: Option<f64>,
    pub events_per_run: usize,
    /// Runs repeated because capture lost events.
    pub invalid_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTiming {
    pub query: NamedQuery,
    pub variant: SchemaVariant,
    pub rows: usize,
    pub repetitions: usize,
    pub times_ms: Vec<f64>,
    pub median_ms: f64,
    /// Half-width of the 95% confidence interval of the median, as a
    /// percentage of the median.
    pub ci_percent: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub experiment: String,
    pub workload: Option<WorkloadConfig>,
    pub settings: Vec<SettingResult>,
    pub queries: Vec<QueryTiming>,
    pub triples: BTreeMap<String, usize>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Distribution-free 95% interval of the median from order statistics,
/// as a half-width percentage of the median.
pub fn median_ci_percent(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let spread = 0.98 * (n as f64).sqrt();
    let lo = ((n as f64 / 2.0 - spread).floor().max(0.0)) as usize;
    let hi = ((n as f64 / 2.0 + spread).ceil() as usize).min(n - 1);
    let m = median(&v);
    (v[hi] - v[lo]) / 2.0 / m.abs().max(f64::MIN_POSITIVE) * 100.0
}

impl BenchReport {
    pub fn setting(&self, label: &str) -> Option<&SettingResult> {
        self.settings.iter().find(|s| s.label == label)
    }

    pub fn query(&self, q: NamedQuery, v: SchemaVariant) -> Option<&QueryTiming> {
        self.queries.iter().find(|t| t.query == q && t.variant == v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.experiment);
        if !self.settings.is_empty() {
            let _ = writeln!(
                out,
                "{:<28} {:>5} {:>11} {:>10} {:>10} {:>8}",
                "setting", "reps", "median_s", "overhead%", "deviation%", "invalid"
            );
            for s in &self.settings {
                let pct = |p: Option<f64>| p.map_or("-".to_string(), |p| format!("{p:.2}"));
                let _ = writeln!(
                    out,
                    "{:<28} {:>5} {:>11.4} {:>10} {:>10} {:>8}",
                    s.label,
                    s.repetitions,
                    s.median_s,
                    pct(s.overhead_percent),
                    pct(s.deviation_percent),
                    s.invalid_runs
                );
            }
        }
        if !self.queries.is_empty() {
            let _ = writeln!(
                out,
                "{:<6} {:<8} {:>6} {:>5} {:>11} {:>7}",
                "query", "variant", "rows", "reps", "median_ms", "ci%"
            );
            for t in &self.queries {
                let _ = writeln!(
                    out,
                    "{:<6} {:<8} {:>6} {:>5} {:>11.3} {:>7.2}",
                    t.query.to_string(),
                    t.variant.label(),
                    t.rows,
                    t.repetitions,
                    t.median_ms,
                    t.ci_percent
                );
            }
        }
        for (k, v) in &self.triples {
            let _ = writeln!(out, "triples {k}: {v}");
        }
        out
    }
}

fn fresh_manager(workload: &WorkloadConfig) -> Result<Arc<Manager>, SynthError> {
    let m = Manager::with_variant(SchemaVariant::WithProvMl);
    for spec in workload.specs() {
        m.load_spec(spec)?;
    }
    Ok(Arc::new(m))
}

fn loopback() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn provlog_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map_or(0, |s| s.lines().count())
}

/// One timed run; `Ok(None)` when capture lost events.
fn overhead_run(workload: &WorkloadConfig, setting: &CaptureSetting, dir: &Path) -> Result<Option<f64>, SynthError> {
    let Some(base) = &setting.capture else {
        return Ok(Some(run_workload(workload, None).as_secs_f64()));
    };
    let mut config = base.clone();
    let manager = fresh_manager(workload)?;
    let server = if config.online { Some(server::spawn(manager.clone(), loopback(), true)?) } else { None };
    if let Some(s) = &server {
        config.manager_endpoint = Some(s.endpoint());
    }
    if config.diskful {
        let _ = std::fs::remove_dir_all(dir);
        config.log_path = Some(dir.to_path_buf());
    }
    let client = CaptureClient::new(config.clone())?;
    let wall = run_workload(workload, Some(&client));
    let stats = client.stats();
    let mut complete =
        stats.events as usize == workload.events() && stats.dropped_events == 0 && stats.undelivered_batches == 0;
    if config.online {
        complete &= manager.status().accepted as usize == workload.events();
    }
    if let Some(log) = config.provlog_file() {
        complete &= provlog_lines(&log) == workload.events();
        let _ = std::fs::remove_dir_all(dir);
    }
    if !complete {
        warn!(
            setting = setting.label,
            events = stats.events,
            dropped = stats.dropped_events,
            undelivered = stats.undelivered_batches,
            accepted = manager.status().accepted,
            "incomplete run"
        );
    }
    Ok(complete.then_some(wall.as_secs_f64()))
}

fn timed_with_retry(
    mut run: impl FnMut() -> Result<Option<f64>, SynthError>,
    label: &str,
    invalid: &mut usize,
) -> Result<f64, SynthError> {
    for _ in 0..MAX_ATTEMPTS {
        if let Some(t) = run()? {
            return Ok(t);
        }
        *invalid += 1;
        warn!(setting = label, "run lost capture events; repeating");
    }
    Err(SynthError::Params(format!("{label}: capture lost events in {MAX_ATTEMPTS} consecutive runs")))
}

fn finish_settings(labels: Vec<String>, runs: Vec<Vec<f64>>, invalid: Vec<usize>, events: usize) -> Vec<SettingResult> {
    labels
        .into_iter()
        .zip(runs)
        .zip(invalid)
        .map(|((label, runs_s), invalid_runs)| SettingResult {
            label,
            repetitions: runs_s.len(),
            median_s: median(&runs_s),
            runs_s,
            overhead_percent: None,
            deviation_percent: None,
            events_per_run: events,
            invalid_runs,
        })
        .collect()
}

/// Runs every setting `reps` times, rotating the order each repetition.
/// Online settings talk HTTP to a fresh in-process manager per run; diskful
/// logs go under `work_dir`.
pub fn run_overhead_bench(
    workload: &WorkloadConfig,
    settings: &[CaptureSetting],
    reps: usize,
    work_dir: &Path,
) -> Result<BenchReport, SynthError> {
    workload.validate()?;
    if reps < MIN_REPS {
        return Err(SynthError::Params(format!("at least {MIN_REPS} repetitions are required")));
    }
    let n = settings.len();
    let mut runs = vec![Vec::with_capacity(reps); n];
    let mut invalid = vec![0; n];
    for rep in 0..reps {
        for k in 0..n {
            let i = (k + rep) % n;
            let s = &settings[i];
            let dir: PathBuf = work_dir.join(format!("overhead-{i}"));
            let t = timed_with_retry(|| overhead_run(workload, s, &dir), &s.label, &mut invalid[i])?;
            info!(setting = %s.label, rep, seconds = t, "overhead run");
            runs[i].push(t);
        }
    }
    let labels = settings.iter().map(|s| s.label.clone()).collect();
    let mut results = finish_settings(labels, runs, invalid, workload.events());
    if let Some(base) = results.iter().find(|r| r.label == BASELINE).map(|r| r.median_s) {
        for r in &mut results {
            r.overhead_percent = Some((r.median_s / base - 1.0) * 100.0);
        }
    }
    Ok(BenchReport {
        experiment: "overhead".into(),
        workload: Some(workload.clone()),
        settings: results,
        ..Default::default()
    })
}

/// `x` workloads in parallel threads, each with its own client, all
/// feeding one broker whose consumer forwards to one manager. Returns the
/// slowest instance's wall time.
/// Ingests on the consumer thread after moving it to the idle class, so the
/// in-process manager only uses CPU the workers leave free.
struct IdleManager(Arc<Manager>);

impl BatchSink for IdleManager {
    fn send(&self, batch: &crate::capture::Batch) -> Result<(), crate::capture::CaptureError> {
        thread_local!(static DEMOTED: std::cell::Cell<bool> = const { std::cell::Cell::new(false) });
        if !DEMOTED.replace(true) {
            server::idle_priority();
        }
        self.0.send(batch)
    }
}

fn scale_run(workload: &WorkloadConfig, x: usize) -> Result<Option<f64>, SynthError> {
    let manager = fresh_manager(workload)?;
    let broker = Arc::new(Broker::in_memory());
    let consumer = Consumer::spawn(broker.clone(), Arc::new(IdleManager(manager.clone())));
    let clients = (0..x)
        .map(|i| {
            let config = CaptureConfig { client_id: format!("worker{i}"), ..CaptureConfig::default() };
            CaptureClient::with_sink(config, broker.clone() as Arc<dyn BatchSink>)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let walls: Vec<Duration> = std::thread::scope(|s| {
        let handles: Vec<_> = clients.iter().map(|c| s.spawn(move || run_workload(workload, Some(c)))).collect();
        handles.into_iter().map(|h| h.join().expect("workload thread panicked")).collect()
    });
    let drained = Consumer::drain(&broker, Duration::from_secs(120));
    consumer.stop();
    let complete = drained
        && clients.iter().all(|c| c.stats().dropped_events == 0)
        && manager.status().accepted as usize == x * workload.events();
    Ok(complete.then(|| walls.iter().max().copied().unwrap_or_default().as_secs_f64()))
}

pub fn run_scalability(workload: &WorkloadConfig, xs: &[usize], reps: usize) -> Result<BenchReport, SynthError> {
    workload.validate()?;
    if reps < MIN_REPS {
        return Err(SynthError::Params(format!("at least {MIN_REPS} repetitions are required")));
    }
    if xs.is_empty() || xs.contains(&0) {
        return Err(SynthError::Params("parallelism values must be at least 1".into()));
    }
    let n = xs.len();
    let mut runs = vec![Vec::with_capacity(reps); n];
    let mut invalid = vec![0; n];
    for rep in 0..reps {
        for k in 0..n {
            let i = (k + rep) % n;
            let label = format!("x={}", xs[i]);
            let t = timed_with_retry(|| scale_run(workload, xs[i]), &label, &mut invalid[i])?;
            info!(x = xs[i], rep, seconds = t, "scalability run");
            runs[i].push(t);
        }
    }
    let labels = xs.iter().map(|x| format!("x={x}")).collect();
    let mut results = finish_settings(labels, runs, invalid, workload.events());
    let first = results[0].median_s;
    for r in &mut results {
        r.deviation_percent = Some((r.median_s / first - 1.0) * 100.0);
    }
    Ok(BenchReport {
        experiment: "scalability".into(),
        workload: Some(workload.clone()),
        settings: results,
        ..Default::default()
    })
}

/// Parameters for each catalog query on a planted lifecycle: the model of
/// the last epoch of a middle run, that run's training set, and a slice
/// range covering the first pairs of runs.
pub fn query_params(life: &Lifecycle, q: NamedQuery) -> Params {
    let run = life.runs.len() / 2;
    let epoch = life.runs[run].stages[0].epochs.len() - 1;
    let (lo, hi) = (life.runs[0].prep.slice_lo, life.runs[0].prep.slice_hi + 60);
    match q {
        NamedQuery::Q1 | NamedQuery::Q2 => Params::new().with("model", life.model_iri(run, epoch)),
        NamedQuery::Q3 | NamedQuery::Q4 => Params::new().with("training_set", life.training_set_iri(run)),
        NamedQuery::Q6 => Params::new().with("dataset", life.training_set_iri(run)),
        NamedQuery::Q5 | NamedQuery::Q7 => Params::new().with("slice_lo", lo).with("slice_hi", hi),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBenchConfig {
    pub queries: Vec<NamedQuery>,
    pub min_reps: usize,
    pub max_reps: usize,
    /// Stop early once every variant's `ci_percent` is below this.
    pub ci_target_percent: f64,
}

impl Default for QueryBenchConfig {
    fn default() -> Self {
        QueryBenchConfig {
            queries: vec![NamedQuery::Q1, NamedQuery::Q5, NamedQuery::Q7],
            min_reps: MIN_REPS,
            max_reps: 100,
            ci_target_percent: 5.0,
        }
    }
}

/// Times queries on two stores holding the same lifecycle, alternating the
/// variant that goes first on each repetition.
pub fn run_query_bench_on(
    life: &Lifecycle,
    stores: [&TripleStore; 2],
    config: &QueryBenchConfig,
) -> Result<Vec<QueryTiming>, SynthError> {
    let mut out = Vec::new();
    for &q in &config.queries {
        let params = query_params(life, q);
        let asts = [build(q, SchemaVariant::WithProvMl, &params)?, build(q, SchemaVariant::WithoutProvMl, &params)?];
        let mut times = [Vec::new(), Vec::new()];
        let mut rows = [0, 0];
        for rep in 0..config.max_reps.max(config.min_reps) {
            for k in 0..2 {
                let i = (k + rep) % 2;
                let start = Instant::now();
                let table = execute(stores[i], &asts[i])?;
                times[i].push(start.elapsed().as_secs_f64() * 1e3);
                rows[i] = table.len();
            }
            if rep + 1 >= config.min_reps && times.iter().all(|t| median_ci_percent(t) < config.ci_target_percent) {
                break;
            }
        }
        for (i, v) in SchemaVariant::BOTH.into_iter().enumerate() {
            out.push(QueryTiming {
                query: q,
                variant: v,
                rows: rows[i],
                repetitions: times[i].len(),
                median_ms: median(&times[i]),
                ci_percent: median_ci_percent(&times[i]),
                times_ms: std::mem::take(&mut times[i]),
            });
        }
    }
    Ok(out)
}

/// Generates both datasets at `params` and times the configured queries.
pub fn run_query_bench(params: &SyntheticParams, config: &QueryBenchConfig) -> Result<BenchReport, SynthError> {
    let life = Lifecycle::plant(params);
    let (with, mw) = generate_store(&life, SchemaVariant::WithProvMl)?;
    let (without, mwo) = generate_store(&life, SchemaVariant::WithoutProvMl)?;
    let queries = run_query_bench_on(&life, [&with, &without], config)?;
    let mut triples = BTreeMap::new();
    triples.insert("with".to_string(), mw.triples as usize);
    triples.insert("without".to_string(), mwo.triples as usize);
    Ok(BenchReport { experiment: "query".into(), queries, triples, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_interval() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(median_ci_percent(&[5.0; 20]), 0.0);
        let spread: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        let ci = median_ci_percent(&spread);
        assert!(ci > 0.0 && ci < 10.0, "{ci}");
    }

    #[test]
    fn reps_below_ten_are_rejected() {
        let w = WorkloadConfig::scaled(0.001);
        assert!(run_overhead_bench(&w, &default_settings(), 3, Path::new("/nonexistent")).is_err());
        assert!(run_scalability(&w, &[1, 2], 9).is_err());
    }

    #[test]
    fn default_setting_labels() {
        let labels: Vec<String> = default_settings().into_iter().map(|s| s.label).collect();
        assert_eq!(labels[0], BASELINE);
        assert!(labels.contains(&"queue=50 diskless online".to_string()));
        assert!(labels.contains(&"queue=50 diskful offline".to_string()));
    }

    #[test]
    fn tiny_scalability_run_delivers_everything() {
        let w =
            WorkloadConfig { epochs: 2, batches: 3, batch_sleep: Duration::from_micros(20), ..WorkloadConfig::paper() };
        let t = scale_run(&w, 3).unwrap();
        assert!(t.is_some());
    }
}
