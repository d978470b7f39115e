//! Prospective specifications of the synthetic lifecycle: curation,
//! preparation and learning workflows chained by dataflow edges.

use std::fmt::Write;

use super::SyntheticParams;
use crate::spec::{parse_spec, StageKind, WorkflowSpec};

pub const CURATION: &str = "curation";
pub const PREPARATION: &str = "preparation";
pub const LEARNING: &str = "learning";

const HYPERPARAMETERS: [&str; 6] = ["learning_rate", "momentum", "weight_decay", "dropout", "warmup", "gradient_clip"];
const MEASURES: [&str; 4] = ["accuracy", "f1_score", "precision", "recall"];

pub fn hyperparameter_names(n: usize) -> Vec<String> {
    (0..n).map(|i| HYPERPARAMETERS.get(i).map_or_else(|| format!("hyperparam_{i}"), |s| s.to_string())).collect()
}

pub fn measure_names(n: usize) -> Vec<String> {
    (0..n).map(|i| MEASURES.get(i).map_or_else(|| format!("measure_{i}"), |s| s.to_string())).collect()
}

pub fn stages(n_stages: usize) -> Vec<StageKind> {
    [StageKind::Training, StageKind::Validation, StageKind::Evaluation].into_iter().take(n_stages).collect()
}

/// Transformation names of a stage and its epoch and batch sections.
pub fn stage_dts(kind: StageKind) -> (String, String, String) {
    let s = kind.as_str();
    (s.to_string(), format!("{s}_epoch"), format!("{s}_batch"))
}

pub fn curation_text() -> String {
    "workflow curation phase=data_curation
  store seismic_fs kind=file_system host=fs01.cluster mount=/data/seismic
  env cluster=hpc01 nodes=node01
  transformation extract_metadata tag=Curation
    in raw_file qualifier=dataset_reference store=seismic_fs domain=dom:SeismicFile
    out coordinates
    out n_slices
    out file_size
    out trace_count
    out curated_file qualifier=dataset_reference store=seismic_fs
"
    .to_string()
}

pub fn preparation_text() -> String {
    "workflow preparation phase=data_preparation
  store seismic_fs kind=file_system host=fs01.cluster mount=/data/seismic
  env cluster=hpc01 nodes=node01
  transformation select_slices
    in seismic qualifier=dataset_reference store=seismic_fs
    in slice_lo
    in slice_hi
    out selection qualifier=dataset_reference store=seismic_fs
    out n_slices_selected
  transformation tile_and_filter
    in selection qualifier=dataset_reference store=seismic_fs
    in tile_size
    in noise_threshold
    out training_set qualifier=dataset_reference store=seismic_fs
  edge curation.extract_metadata.curated_file -> select_slices.seismic
  edge select_slices.selection -> tile_and_filter.selection
"
    .to_string()
}

pub fn learning_text(params: &SyntheticParams) -> String {
    let hps = hyperparameter_names(params.n_hyperparams);
    let measures = measure_names(params.n_eval_measures);
    let mut t = String::from(
        "workflow learning phase=learning
  persona data_scientist
  store model_fs kind=file_system host=fs02.cluster mount=/data/models
  env cluster=hpc01 nodes=node01,node02,node03,node04 job=4242
",
    );
    for kind in stages(params.n_stages) {
        let (stage, epoch, batch) = stage_dts(kind);
        let _ = writeln!(t, "  transformation {stage} stage={}", kind.as_str());
        if kind == StageKind::Training {
            t.push_str("    in training_set qualifier=dataset_reference store=model_fs\n");
            t.push_str("    in max_epochs qualifier=hyperparameter\n");
        }
        t.push_str("    in batch_size qualifier=hyperparameter\n");
        let _ = writeln!(t, "  transformation {epoch} section-of={stage} kind=\"Epoch Execution\"");
        if kind != StageKind::Training {
            t.push_str("    in model qualifier=model store=model_fs\n");
        }
        t.push_str("    out epoch\n");
        if kind == StageKind::Training {
            for hp in &hps {
                let _ = writeln!(t, "    out {hp} qualifier=hyperparameter");
            }
            t.push_str("    out model qualifier=model store=model_fs\n");
        }
        for m in &measures {
            let _ = writeln!(t, "    out {m} qualifier=model_evaluation");
        }
        let _ = writeln!(t, "  transformation {batch} section-of={epoch} kind=\"Batch Execution\"");
        t.push_str("    out loss\n");
    }
    t.push_str("  edge preparation.tile_and_filter.training_set -> training.training_set\n");
    for kind in stages(params.n_stages).into_iter().skip(1) {
        let _ = writeln!(t, "  edge training_epoch.model -> {}_epoch.model", kind.as_str());
    }
    t
}

/// The three specifications, in load order.
pub fn lifecycle_specs(params: &SyntheticParams) -> Vec<WorkflowSpec> {
    [curation_text(), preparation_text(), learning_text(params)]
        .iter()
        .map(|text| parse_spec(text).expect("generated specifications are well-formed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{render_spec, validate};

    #[test]
    fn specs_validate_cleanly() {
        for spec in lifecycle_specs(&SyntheticParams::paper()) {
            let diags = validate(&spec);
            assert!(diags.is_empty(), "{}: {diags:?}", spec.name);
            assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);
        }
    }

    #[test]
    fn learning_has_nine_transformations_at_three_stages() {
        let specs = lifecycle_specs(&SyntheticParams::paper());
        assert_eq!(specs[2].transformations.len(), 9);
        let one = lifecycle_specs(&SyntheticParams { n_stages: 1, ..SyntheticParams::paper() });
        assert_eq!(one[2].transformations.len(), 3);
        assert_eq!(specs[2].root_stage("validation_batch"), Some(StageKind::Validation));
    }
}
