use serde::{Deserialize, Serialize};

use super::SynthError;

/// Shape of a generated lifecycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_workflows: usize,
    pub n_stages: usize,
    pub n_epochs: usize,
    pub n_batches: usize,
    pub n_hyperparams: usize,
    pub n_eval_measures: usize,
    pub seed: u64,
    /// Multiplies epochs x batches; each dimension gets `sqrt(scale)`.
    pub scale: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams::paper()
    }
}

impl SyntheticParams {
    /// 8 workflows, 3 stages, 300 epochs, 200 batches.
    pub fn paper() -> SyntheticParams {
        SyntheticParams {
            n_workflows: 8,
            n_stages: 3,
            n_epochs: 300,
            n_batches: 200,
            n_hyperparams: 3,
            n_eval_measures: 2,
            seed: 1,
            scale: 1.0,
        }
    }

    pub fn scaled(scale: f64, seed: u64) -> SyntheticParams {
        SyntheticParams { scale, seed, ..SyntheticParams::paper() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let counts = [
            ("n_workflows", self.n_workflows),
            ("n_stages", self.n_stages),
            ("n_epochs", self.n_epochs),
            ("n_batches", self.n_batches),
            ("n_hyperparams", self.n_hyperparams),
            ("n_eval_measures", self.n_eval_measures),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SynthError::Params(format!("{name} must be at least 1")));
        }
        if self.n_stages > 3 {
            return Err(SynthError::Params("n_stages is at most 3 (training, validation, evaluation)".into()));
        }
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(SynthError::Params("scale must be a finite non-negative number".into()));
        }
        Ok(())
    }

    fn scaled_count(&self, n: usize) -> usize {
        ((n as f64 * self.scale.sqrt()).round() as usize).max(1)
    }

    pub fn epochs(&self) -> usize {
        self.scaled_count(self.n_epochs)
    }

    pub fn batches(&self) -> usize {
        self.scaled_count(self.n_batches)
    }
}
