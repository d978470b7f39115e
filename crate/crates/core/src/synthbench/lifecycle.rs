//! Planted ground truth of a synthetic lifecycle and the capture events that
//! describe it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::specs::{hyperparameter_names, measure_names, stage_dts, stages, CURATION, LEARNING, PREPARATION};
use super::SyntheticParams;
use crate::capture::{CaptureEvent, EventKind, Value, Values};
use crate::manager::assign_value_iri;
use crate::model::{Iri, Literal, Namespace, RelationId, Triple};
use crate::spec::{attribute_iri, Direction, StageKind};

pub const N_FILES: usize = 4;
pub const GENERATOR_CLIENT: &str = "synthbench";
/// 2020-09-13T12:26:40Z in microseconds.
const T0: i64 = 1_600_000_000_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct Basin {
    pub id: String,
    pub label: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Field {
    pub id: String,
    pub label: String,
    pub basin: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RawFile {
    /// Also the captured `raw_file` value and the domain node's local name.
    pub id: String,
    pub field: usize,
    pub coordinates: String,
    pub n_slices: i64,
    pub trace_count: i64,
    pub file_size: i64,
    pub curated: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Preparation {
    pub file: usize,
    pub slice_lo: i64,
    pub slice_hi: i64,
    pub tile_size: i64,
    pub noise_threshold: f64,
    pub selection: String,
    pub training_set: String,
}

impl Preparation {
    pub fn n_slices_selected(&self) -> i64 {
        self.slice_hi - self.slice_lo + 1
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochTruth {
    /// Model produced (training) or consumed (other stages).
    pub model: String,
    /// Empty outside training.
    pub hyperparams: Vec<(String, f64)>,
    pub measures: Vec<(String, f64)>,
    pub losses: Vec<f64>,
    /// (start, end) micros per batch.
    pub batch_times: Vec<(i64, i64)>,
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTruth {
    pub kind: StageKind,
    pub batch_size: i64,
    pub epochs: Vec<EpochTruth>,
    pub start: i64,
    pub end: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearningRun {
    pub wf_exec: String,
    pub prep: Preparation,
    pub max_epochs: i64,
    pub node: String,
    pub job: String,
    pub stages: Vec<StageTruth>,
    pub start: i64,
    pub end: i64,
}

/// Everything the generator plants. Oracles in tests read this directly.
#[derive(Clone, Debug, Serialize)]
pub struct Lifecycle {
    pub params: SyntheticParams,
    pub basins: Vec<Basin>,
    pub fields: Vec<Field>,
    pub files: Vec<RawFile>,
    pub curation_wf: String,
    pub preparation_wf: String,
    pub runs: Vec<LearningRun>,
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

fn exec_id(rng: &mut ChaCha8Rng, spec: &str) -> String {
    format!("{spec}.{:032x}", rng.random::<u128>())
}

impl Lifecycle {
    pub fn plant(params: &SyntheticParams) -> Lifecycle {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let basins: Vec<Basin> = ["North", "South"]
            .iter()
            .enumerate()
            .map(|(i, name)| Basin { id: format!("basin_{i}"), label: format!("{name} Basin") })
            .collect();
        let fields: Vec<Field> = (0..4)
            .map(|j| Field {
                id: format!("field_{j}"),
                label: format!("Field {}", (b'A' + j as u8) as char),
                basin: j / 2,
            })
            .collect();
        let files: Vec<RawFile> = (0..N_FILES)
            .map(|k| {
                let nx: i64 = rng.random_range(400..1200);
                let ny: i64 = rng.random_range(600..1600);
                let nz: i64 = rng.random_range(500..1500);
                let lat = round_to(rng.random_range(-25.0..-20.0), 4);
                let lon = round_to(rng.random_range(-45.0..-38.0), 4);
                RawFile {
                    id: format!("seismic_{k}"),
                    field: k % fields.len(),
                    coordinates: format!("{lat:.4},{lon:.4}"),
                    n_slices: nx,
                    trace_count: nx * ny,
                    // 10 KiB main header, 240-byte trace headers, float32 samples.
                    file_size: 10_240 + nx * ny * (240 + 4 * nz),
                    curated: format!("curated_seismic_{k}"),
                }
            })
            .collect();
        let curation_wf = exec_id(&mut rng, CURATION);
        let preparation_wf = exec_id(&mut rng, PREPARATION);

        let epochs = params.epochs();
        let batches = params.batches();
        let hp_names = hyperparameter_names(params.n_hyperparams);
        let measure_names = measure_names(params.n_eval_measures);
        let mut runs = Vec::with_capacity(params.n_workflows);
        for i in 0..params.n_workflows {
            let pair = (i / 2) as i64;
            let slice_lo = 20 + 60 * pair;
            let prep = Preparation {
                file: (i / 2) % N_FILES,
                slice_lo,
                slice_hi: slice_lo + 99,
                tile_size: [32, 64, 128, 256][i % 4],
                noise_threshold: round_to(rng.random_range(0.05..0.5), 2),
                selection: format!("selection_w{i}"),
                training_set: format!("training_set_w{i}"),
            };
            let wf_exec = exec_id(&mut rng, LEARNING);
            let lr0 = [0.1, 0.05, 0.01, 0.005][i % 4];
            let constants: Vec<f64> = (1..hp_names.len()).map(|_| round_to(rng.random_range(0.0..1.0), 3)).collect();
            let loss0: f64 = rng.random_range(0.8..1.2);
            let mut clock = T0 + i as i64 * 3_600_000_000;
            let run_start = clock;
            let mut stage_truths = Vec::new();
            for (si, kind) in stages(params.n_stages).into_iter().enumerate() {
                clock += 1_000;
                let stage_start = clock;
                let mut epoch_truths = Vec::with_capacity(epochs);
                for e in 0..epochs {
                    clock += 500;
                    let epoch_start = clock;
                    let mut losses = Vec::with_capacity(batches);
                    let mut batch_times = Vec::with_capacity(batches);
                    for b in 0..batches {
                        let progress = (e * batches + b) as f64 / (epochs * batches) as f64;
                        let noise: f64 = rng.random_range(0.0..0.05);
                        let loss = loss0 * (-3.0 * progress).exp() * (1.0 + 0.1 * si as f64) + noise;
                        losses.push(round_to(loss, 6));
                        clock += 100;
                        let d: i64 = rng.random_range(15_000..25_000);
                        batch_times.push((clock, clock + d));
                        clock += d;
                    }
                    clock += 500;
                    let p = (e + 1) as f64 / epochs as f64;
                    let measures = measure_names
                        .iter()
                        .enumerate()
                        .map(|(m, name)| {
                            let noise: f64 = rng.random_range(-0.01..0.01);
                            let v = 0.5 + 0.45 * (1.0 - (-4.0 * p).exp()) - 0.03 * m as f64 - 0.02 * si as f64 + noise;
                            (name.clone(), round_to(v, 4))
                        })
                        .collect();
                    let hyperparams = if kind == StageKind::Training {
                        hp_names
                            .iter()
                            .enumerate()
                            .map(|(h, name)| {
                                let v =
                                    if h == 0 { round_to(lr0 * 0.98f64.powi(e as i32), 8) } else { constants[h - 1] };
                                (name.clone(), v)
                            })
                            .collect()
                    } else {
                        Vec::new()
                    };
                    epoch_truths.push(EpochTruth {
                        model: format!("model_w{i}_e{e}"),
                        hyperparams,
                        measures,
                        losses,
                        batch_times,
                        start: epoch_start,
                        end: clock,
                    });
                }
                clock += 1_000;
                stage_truths.push(StageTruth {
                    kind,
                    batch_size: [32, 64, 128][i % 3],
                    epochs: epoch_truths,
                    start: stage_start,
                    end: clock,
                });
            }
            clock += 1_000;
            runs.push(LearningRun {
                wf_exec,
                prep,
                max_epochs: epochs as i64,
                node: format!("node{:02}", i % 4 + 1),
                job: format!("{}", 4242 + i),
                stages: stage_truths,
                start: run_start,
                end: clock,
            });
        }
        Lifecycle { params: params.clone(), basins, fields, files, curation_wf, preparation_wf, runs }
    }

    /// IRI of the model value produced by `run` at `epoch`.
    pub fn model_iri(&self, run: usize, epoch: usize) -> Iri {
        let r = &self.runs[run];
        let attr = attribute_iri(LEARNING, "training_epoch", Direction::Out, "model");
        assign_value_iri(&r.wf_exec, &attr, &Literal::string(r.stages[0].epochs[epoch].model.as_str()))
    }

    /// IRI of the training set value of `run` (shared by preparation and
    /// learning).
    pub fn training_set_iri(&self, run: usize) -> Iri {
        let attr = attribute_iri(PREPARATION, "tile_and_filter", Direction::Out, "training_set");
        assign_value_iri("global", &attr, &Literal::string(self.runs[run].prep.training_set.as_str()))
    }

    /// The toy domain graph standing in for the external knowledge base.
    pub fn domain_triples(&self) -> Vec<Triple> {
        let dom = |local: &str| Iri::new(Namespace::Dom, local).expect("generated names are valid");
        let mut out = Vec::new();
        for b in &self.basins {
            out.push(Triple::new(dom(&b.id), RelationId::Type.iri(), dom("Basin")));
            out.push(Triple::new(dom(&b.id), RelationId::Label.iri(), Literal::string(b.label.as_str())));
        }
        for f in &self.fields {
            out.push(Triple::new(dom(&f.id), RelationId::Type.iri(), dom("Field")));
            out.push(Triple::new(dom(&f.id), RelationId::Label.iri(), Literal::string(f.label.as_str())));
            out.push(Triple::new(dom(&f.id), dom("inBasin"), dom(&self.basins[f.basin].id)));
        }
        for r in &self.files {
            let s = dom(&r.id);
            out.push(Triple::new(s.clone(), RelationId::Type.iri(), dom("SeismicFile")));
            out.push(Triple::new(s.clone(), RelationId::Label.iri(), Literal::string(r.id.as_str())));
            out.push(Triple::new(s.clone(), dom("inField"), dom(&self.fields[r.field].id)));
            out.push(Triple::new(s.clone(), dom("inlineCount"), Literal::integer(r.n_slices)));
            out.push(Triple::new(s.clone(), dom("traceCount"), Literal::integer(r.trace_count)));
            out.push(Triple::new(s, dom("sizeBytes"), Literal::integer(r.file_size)));
        }
        out
    }

    pub fn event_count(&self) -> usize {
        let mut n = 0;
        self.for_each_event(|_| n += 1);
        n
    }

    /// Emits every capture event, in a causally consistent order, with
    /// gapless sequence numbers.
    pub fn for_each_event(&self, mut f: impl FnMut(CaptureEvent)) {
        let mut em = Emitter { seq: 0, task: 0, prefix: self.params.seed, f: &mut f };

        let t0 = T0 - 3_600_000_000;
        em.emit(EventKind::WorkflowBegin, &self.curation_wf, "", "", None, env_values("hpc01", "node01", None), t0);
        for (k, file) in self.files.iter().enumerate() {
            let t = t0 + 1_000 * (k as i64 + 1);
            let task = em.next_task();
            em.emit(
                EventKind::TaskBegin,
                &self.curation_wf,
                "extract_metadata",
                &task,
                None,
                vals([("raw_file", file.id.as_str().into())]),
                t,
            );
            let outputs = vals([
                ("coordinates", file.coordinates.as_str().into()),
                ("n_slices", file.n_slices.into()),
                ("file_size", file.file_size.into()),
                ("trace_count", file.trace_count.into()),
                ("curated_file", file.curated.as_str().into()),
            ]);
            em.emit(EventKind::TaskEnd, &self.curation_wf, "extract_metadata", &task, None, outputs, t + 500);
        }
        em.emit(EventKind::WorkflowEnd, &self.curation_wf, "", "", None, Values::new(), t0 + 100_000);

        let t1 = T0 - 1_800_000_000;
        let wf = &self.preparation_wf;
        em.emit(EventKind::WorkflowBegin, wf, "", "", None, env_values("hpc01", "node01", None), t1);
        for (i, run) in self.runs.iter().enumerate() {
            let p = &run.prep;
            let t = t1 + 10_000 * (i as i64 + 1);
            let select = em.next_task();
            let inputs = vals([
                ("seismic", self.files[p.file].curated.as_str().into()),
                ("slice_lo", p.slice_lo.into()),
                ("slice_hi", p.slice_hi.into()),
            ]);
            em.emit(EventKind::TaskBegin, wf, "select_slices", &select, None, inputs, t);
            let outputs =
                vals([("selection", p.selection.as_str().into()), ("n_slices_selected", p.n_slices_selected().into())]);
            em.emit(EventKind::TaskEnd, wf, "select_slices", &select, None, outputs, t + 1_000);
            let tile = em.next_task();
            let inputs = vals([
                ("selection", p.selection.as_str().into()),
                ("tile_size", p.tile_size.into()),
                ("noise_threshold", p.noise_threshold.into()),
            ]);
            em.emit(EventKind::TaskBegin, wf, "tile_and_filter", &tile, None, inputs, t + 2_000);
            let outputs = vals([("training_set", p.training_set.as_str().into())]);
            em.emit(EventKind::TaskEnd, wf, "tile_and_filter", &tile, None, outputs, t + 5_000);
        }
        em.emit(EventKind::WorkflowEnd, wf, "", "", None, Values::new(), t1 + 1_000_000);

        for run in &self.runs {
            let wf = &run.wf_exec;
            let env = env_values("hpc01", &run.node, Some(&run.job));
            em.emit(EventKind::WorkflowBegin, wf, "", "", None, env, run.start);
            for stage in &run.stages {
                let (stage_dt, epoch_dt, batch_dt) = stage_dts(stage.kind);
                let stage_task = em.next_task();
                let mut inputs = vals([("batch_size", stage.batch_size.into())]);
                if stage.kind == StageKind::Training {
                    inputs.insert("training_set".into(), run.prep.training_set.as_str().into());
                    inputs.insert("max_epochs".into(), run.max_epochs.into());
                }
                em.emit(EventKind::TaskBegin, wf, &stage_dt, &stage_task, None, inputs, stage.start);
                for (e, epoch) in stage.epochs.iter().enumerate() {
                    let epoch_task = em.next_task();
                    let inputs = if stage.kind == StageKind::Training {
                        Values::new()
                    } else {
                        vals([("model", epoch.model.as_str().into())])
                    };
                    em.emit(EventKind::TaskBegin, wf, &epoch_dt, &epoch_task, Some(&stage_task), inputs, epoch.start);
                    for (loss, (bs, be)) in epoch.losses.iter().zip(&epoch.batch_times) {
                        let batch_task = em.next_task();
                        em.emit(
                            EventKind::TaskBegin,
                            wf,
                            &batch_dt,
                            &batch_task,
                            Some(&epoch_task),
                            Values::new(),
                            *bs,
                        );
                        em.emit(
                            EventKind::TaskEnd,
                            wf,
                            &batch_dt,
                            &batch_task,
                            None,
                            vals([("loss", (*loss).into())]),
                            *be,
                        );
                    }
                    let mut outputs = vals([("epoch", (e as i64).into())]);
                    for (name, v) in epoch.hyperparams.iter().chain(&epoch.measures) {
                        outputs.insert(name.clone(), (*v).into());
                    }
                    if stage.kind == StageKind::Training {
                        outputs.insert("model".into(), epoch.model.as_str().into());
                    }
                    em.emit(EventKind::TaskEnd, wf, &epoch_dt, &epoch_task, None, outputs, epoch.end);
                }
                em.emit(EventKind::TaskEnd, wf, &stage_dt, &stage_task, None, Values::new(), stage.end);
            }
            em.emit(EventKind::WorkflowEnd, wf, "", "", None, Values::new(), run.end);
        }
    }
}

fn vals<const N: usize>(pairs: [(&str, Value); N]) -> Values {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn env_values(cluster: &str, nodes: &str, job: Option<&str>) -> Values {
    let mut v = vals([("cluster", cluster.into()), ("nodes", nodes.into())]);
    if let Some(job) = job {
        v.insert("job".into(), job.into());
    }
    v
}

struct Emitter<'a, F: FnMut(CaptureEvent)> {
    seq: u64,
    task: u64,
    prefix: u64,
    f: &'a mut F,
}

impl<F: FnMut(CaptureEvent)> Emitter<'_, F> {
    fn next_task(&mut self) -> String {
        self.task += 1;
        format!("{:016x}{:016x}", self.prefix, self.task)
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(&mut self, kind: EventKind, wf: &str, dt: &str, task: &str, parent: Option<&str>, values: Values, t: i64) {
        self.seq += 1;
        (self.f)(CaptureEvent {
            kind,
            wf: wf.to_string(),
            dt: dt.to_string(),
            task: task.to_string(),
            parent: parent.map(str::to_string),
            values,
            t,
            seq: self.seq,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planting_is_deterministic() {
        let p = SyntheticParams::scaled(0.01, 7);
        let a = serde_json::to_string(&Lifecycle::plant(&p)).unwrap();
        let b = serde_json::to_string(&Lifecycle::plant(&p)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&Lifecycle::plant(&SyntheticParams::scaled(0.01, 8))).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn event_count_closed_form() {
        let p = SyntheticParams { n_workflows: 2, n_epochs: 2, n_batches: 3, ..SyntheticParams::paper() };
        let l = Lifecycle::plant(&p);
        let (w, s, e, b) = (2, 3, 2, 3);
        let learning = w * (2 + s * (2 + e * (2 + 2 * b)));
        let expected = (2 + 2 * N_FILES) + (2 + 4 * w) + learning;
        assert_eq!(l.event_count(), expected);
        let mut seqs = Vec::new();
        l.for_each_event(|e| seqs.push(e.seq));
        assert_eq!(seqs, (1..=expected as u64).collect::<Vec<_>>());
    }

    #[test]
    fn pairs_share_slice_ranges() {
        let l = Lifecycle::plant(&SyntheticParams::scaled(0.0, 1));
        assert_eq!(l.runs[0].prep.slice_lo, l.runs[1].prep.slice_lo);
        assert_ne!(l.runs[1].prep.slice_lo, l.runs[2].prep.slice_lo);
        assert!(l.runs.iter().all(|r| r.prep.slice_hi <= l.files[r.prep.file].n_slices));
    }
}
