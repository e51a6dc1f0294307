//! JSON checkpoint container.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::{CocoModel, ModelSpec};
use crate::nn::{NamedTensor, Parameters};
use crate::text::TextConditioning;
use crate::train::{EpochMetrics, Progress};

pub const FORMAT: &str = "cocodiff-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    /// Stage that produced this checkpoint.
    pub stage: String,
    /// Epochs completed within that stage.
    pub epoch: usize,
    /// Resolved run configuration as `key=value` pairs.
    pub config: Vec<(String, String)>,
    pub seeds: Seeds,
    pub spec: ModelSpec,
    pub input_scale: Vec<f64>,
    pub tensors: Vec<NamedTensor>,
    pub betas: Vec<f64>,
    pub class_names: Vec<String>,
    pub coarse_text: NamedTensor,
    pub fine_text: Vec<NamedTensor>,
    pub history: Vec<EpochMetrics>,
    /// Optimizer and selection state when saved mid-stage.
    pub progress: Option<Progress>,
}

fn matrix_tensor(name: &str, m: &Array2<f64>) -> NamedTensor {
    NamedTensor {
        name: name.to_string(),
        shape: m.shape().to_vec(),
        data: m.iter().copied().collect(),
    }
}

fn tensor_matrix(t: &NamedTensor) -> Result<Array2<f64>> {
    if t.shape.len() != 2 {
        return Err(Error::Checkpoint(format!("tensor `{}` is not a matrix", t.name)));
    }
    Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
        .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", t.name)))
}

pub struct CheckpointParts<'a> {
    pub stage: &'a str,
    pub epoch: usize,
    pub config: Vec<(String, String)>,
    pub seeds: Seeds,
    pub spec: &'a ModelSpec,
    pub model: &'a CocoModel,
    pub schedule: &'a NoiseSchedule,
    pub class_names: &'a [String],
    pub conditioning: &'a TextConditioning,
    pub history: &'a [EpochMetrics],
    pub progress: Option<Progress>,
}

impl Checkpoint {
    pub fn new(p: CheckpointParts<'_>) -> Self {
        Self {
            format: FORMAT.to_string(),
            stage: p.stage.to_string(),
            epoch: p.epoch,
            config: p.config,
            seeds: p.seeds,
            spec: p.spec.clone(),
            input_scale: p.model.skeleton.encoder.input_scale.to_vec(),
            tensors: p.model.to_named(""),
            betas: p.schedule.betas().to_vec(),
            class_names: p.class_names.to_vec(),
            coarse_text: matrix_tensor("coarse", &p.conditioning.coarse),
            fine_text: p
                .conditioning
                .fine
                .iter()
                .enumerate()
                .map(|(i, m)| matrix_tensor(&format!("fine{i}"), m))
                .collect(),
            history: p.history.to_vec(),
            progress: p.progress,
        }
    }

    pub fn model(&self) -> Result<CocoModel> {
        let mut m = CocoModel::new(&self.spec)?;
        m.load_named("", &self.tensors)?;
        let scale = &mut m.skeleton.encoder.input_scale;
        if scale.len() != self.input_scale.len() {
            return Err(Error::Checkpoint("input scale length mismatch".into()));
        }
        scale.iter_mut().zip(&self.input_scale).for_each(|(s, v)| *s = *v);
        Ok(m)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_betas(self.betas.clone())
    }

    pub fn conditioning(&self) -> Result<TextConditioning> {
        Ok(TextConditioning {
            coarse: tensor_matrix(&self.coarse_text)?,
            fine: self.fine_text.iter().map(tensor_matrix).collect::<Result<_>>()?,
        })
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", c.format)));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
