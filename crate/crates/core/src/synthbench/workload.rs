//! Simulated learning script: a training stage whose batches sleep in place
//! of compute, instrumented with begin/end capture calls at stage, epoch and
//! batch level.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::specs::{hyperparameter_names, measure_names, stage_dts, LEARNING};
use super::{SynthError, SyntheticParams};
use crate::capture::{CaptureClient, Values};
use crate::spec::{EnvironmentSpec, StageKind, WorkflowSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub epochs: usize,
    pub batches: usize,
    #[serde(with = "micros")]
    pub batch_sleep: Duration,
    pub n_hyperparams: usize,
    pub n_eval_measures: usize,
    pub seed: u64,
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_micros)
    }
}

pub const DEFAULT_BATCH_SLEEP: Duration = Duration::from_micros(500);

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig::paper()
    }
}

impl WorkloadConfig {
    /// 300 epochs of 24 batches: 15,004 capture events per run.
    pub fn paper() -> WorkloadConfig {
        WorkloadConfig {
            epochs: 300,
            batches: 24,
            batch_sleep: DEFAULT_BATCH_SLEEP,
            n_hyperparams: 3,
            n_eval_measures: 2,
            seed: 1,
        }
    }

    /// Shrinks epochs x batches by `scale`, each dimension by its square root.
    pub fn scaled(scale: f64) -> WorkloadConfig {
        let p = WorkloadConfig::paper();
        let dim = |n: usize| ((n as f64 * scale.sqrt()).round() as usize).max(1);
        WorkloadConfig { epochs: dim(p.epochs), batches: dim(p.batches), ..p }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.batch_sleep.is_zero() {
            return Err(SynthError::Params("batch_sleep must be positive".into()));
        }
        if self.epochs == 0 || self.batches == 0 {
            return Err(SynthError::Params("epochs and batches must be at least 1".into()));
        }
        Ok(())
    }

    /// Workflow begin/end, stage begin/end, then per epoch a pair plus a
    /// pair per batch.
    pub fn events(&self) -> usize {
        4 + self.epochs * (2 + 2 * self.batches)
    }

    /// Total simulated compute.
    pub fn compute(&self) -> Duration {
        self.batch_sleep * (self.epochs * self.batches) as u32
    }

    /// Generator parameters whose specifications cover this workload.
    pub fn spec_params(&self) -> SyntheticParams {
        SyntheticParams {
            n_workflows: 1,
            n_hyperparams: self.n_hyperparams,
            n_eval_measures: self.n_eval_measures,
            ..SyntheticParams::paper()
        }
    }

    /// Specifications the manager must hold before ingesting this workload.
    pub fn specs(&self) -> Vec<WorkflowSpec> {
        super::specs::lifecycle_specs(&self.spec_params())
    }
}

/// Runs the training loop and returns its wall time, closing the client
/// (flush and dispatcher join) inside the timed region. `None` runs
/// without capture.
pub fn run_workload(cfg: &WorkloadConfig, client: Option<&CaptureClient>) -> Duration {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hps = hyperparameter_names(cfg.n_hyperparams);
    let measures = measure_names(cfg.n_eval_measures);
    let (stage_dt, epoch_dt, batch_dt) = stage_dts(StageKind::Training);
    let env = EnvironmentSpec {
        cluster_name: "hpc01".into(),
        node_names: vec!["node01".into()],
        scheduler_job_id: Some("4242".into()),
    };

    let start = Instant::now();
    let wf = client.map(|c| c.workflow_begin(LEARNING, Some(&env)));
    let stage = client.zip(wf.as_deref()).map(|(c, wf)| {
        let mut inputs = Values::new();
        inputs.insert("training_set".into(), "training_set_workload".into());
        inputs.insert("max_epochs".into(), (cfg.epochs as i64).into());
        inputs.insert("batch_size".into(), 32i64.into());
        c.task_begin(wf, &stage_dt, inputs, None)
    });
    let mut loss = 2.0f64;
    for e in 0..cfg.epochs {
        let epoch = client.zip(wf.as_deref()).map(|(c, wf)| c.task_begin(wf, &epoch_dt, Values::new(), stage.as_ref()));
        for _ in 0..cfg.batches {
            let batch =
                client.zip(wf.as_deref()).map(|(c, wf)| c.task_begin(wf, &batch_dt, Values::new(), epoch.as_ref()));
            std::thread::sleep(cfg.batch_sleep);
            loss = (loss * 0.999 + rng.random_range(-0.01..0.01)).max(1e-3);
            if let (Some(c), Some(b)) = (client, &batch) {
                let mut out = Values::new();
                out.insert("loss".into(), loss.into());
                c.task_end(b, out);
            }
        }
        if let (Some(c), Some(h)) = (client, &epoch) {
            let mut out = Values::new();
            out.insert("epoch".into(), (e as i64).into());
            for hp in &hps {
                out.insert(hp.clone(), rng.random_range(0.0..1.0).into());
            }
            for m in &measures {
                out.insert(m.clone(), rng.random_range(0.0..1.0).into());
            }
            out.insert("model".into(), format!("model_e{e}").into());
            c.task_end(h, out);
        }
    }
    if let (Some(c), Some(h), Some(wf)) = (client, &stage, &wf) {
        c.task_end(h, Values::new());
        c.workflow_end(wf);
        c.close();
    }
    start.elapsed()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::capture::{CaptureConfig, MemorySink};
    use crate::manager::Manager;
    use crate::model::SchemaVariant;

    fn tiny() -> WorkloadConfig {
        WorkloadConfig { epochs: 3, batches: 4, batch_sleep: Duration::from_micros(50), ..WorkloadConfig::paper() }
    }

    #[test]
    fn paper_shape_is_about_fifteen_thousand_events() {
        assert_eq!(WorkloadConfig::paper().events(), 15_004);
        assert!(WorkloadConfig { batch_sleep: Duration::ZERO, ..tiny() }.validate().is_err());
    }

    #[test]
    fn emits_the_counted_events_and_ingests_cleanly() {
        let cfg = tiny();
        let sink = Arc::new(MemorySink::new());
        let client =
            CaptureClient::with_sink(CaptureConfig { queue_size: 7, ..CaptureConfig::default() }, sink.clone())
                .unwrap();
        let wall = run_workload(&cfg, Some(&client));
        assert!(wall >= cfg.compute());
        let batches = sink.batches();
        assert_eq!(batches.iter().map(|b| b.events.len()).sum::<usize>(), cfg.events());

        let m = Manager::with_variant(SchemaVariant::WithProvMl);
        for spec in cfg.specs() {
            m.load_spec(spec).unwrap();
        }
        for b in &batches {
            m.ingest_batch(b);
        }
        let status = m.status();
        assert_eq!((status.quarantined, status.accepted as usize), (0, cfg.events()));
        assert_eq!(status.pending_begins, 0);
    }

    #[test]
    fn baseline_is_about_the_total_sleep() {
        let cfg = tiny();
        let wall = run_workload(&cfg, None);
        assert!(wall >= cfg.compute() && wall < cfg.compute() * 20);
    }
}
