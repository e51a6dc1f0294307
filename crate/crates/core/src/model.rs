//! The full trainable bundle: skeleton model plus denoiser.

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::dataset::{GraphTopology, SkeletonDataset};
use crate::diffusion::{Denoiser, DenoiserConfig, DenoiserNet};
use crate::encoder::{EncoderConfig, SkeletonModel};
use crate::error::Result;
use crate::nn::{join, Parameters};

/// Everything needed to rebuild the architecture before loading weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderConfig,
    pub topology: GraphTopology,
    pub text_dim: usize,
    /// `None` means the identity denoiser.
    pub denoiser: Option<DenoiserConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocoModel {
    pub skeleton: SkeletonModel,
    pub denoiser: Denoiser,
}

impl CocoModel {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(Self {
            skeleton: SkeletonModel::new(&spec.encoder, &spec.topology, spec.text_dim)?,
            denoiser: fresh_denoiser(spec)?,
        })
    }

    /// Freshly initialized model with the input scale fitted to `ds`.
    pub fn for_dataset(spec: &ModelSpec, ds: &SkeletonDataset) -> Result<Self> {
        let mut m = Self::new(spec)?;
        m.skeleton.encoder.fit_input_scale(ds);
        Ok(m)
    }
}

pub fn fresh_denoiser(spec: &ModelSpec) -> Result<Denoiser> {
    Ok(match &spec.denoiser {
        Some(cfg) => Denoiser::Network(DenoiserNet::new(cfg)?),
        None => Denoiser::Identity,
    })
}

impl Parameters for CocoModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.skeleton.visit(prefix, f);
        self.denoiser.visit(&join(prefix, "denoiser"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.skeleton.visit_mut(prefix, f);
        self.denoiser.visit_mut(&join(prefix, "denoiser"), f);
    }
}
