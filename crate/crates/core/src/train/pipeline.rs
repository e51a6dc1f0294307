use super::{EpochMetrics, Progress, Stage, Trainer};
use crate::checkpoint::{Checkpoint, CheckpointParts, Seeds};
use crate::encoder::SkeletonModel;
use crate::error::{Error, Result};
use crate::model::{CocoModel, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Halt,
}

pub type EpochHook<'h> = &'h mut dyn FnMut(&Checkpoint) -> Result<Flow>;
pub type StageHook<'h> = &'h mut dyn FnMut(Stage, &Checkpoint) -> Result<()>;

/// Optional callbacks: after every epoch (with a resumable checkpoint) and
/// after every completed stage.
#[derive(Default)]
pub struct Hooks<'h> {
    pub on_epoch: Option<EpochHook<'h>>,
    pub on_stage_end: Option<StageHook<'h>>,
}

/// The stage sequence of one training run.
pub struct Pipeline<'a> {
    pub trainer: Trainer<'a>,
    pub spec: ModelSpec,
    pub config: Vec<(String, String)>,
    pub baseline: bool,
}

impl<'a> Pipeline<'a> {
    pub fn stages(&self) -> Vec<Stage> {
        let cfg = self.trainer.cfg;
        if self.baseline {
            return vec![Stage::Baseline];
        }
        let mut s = Vec::new();
        if cfg.pretrain_encoder {
            s.push(Stage::Encoder);
        }
        if cfg.pretrain_diffusion {
            s.push(Stage::Diffusion);
        }
        s.push(Stage::Joint);
        s
    }

    fn seeds(&self) -> Seeds {
        let c = self.trainer.cfg;
        Seeds {
            init: c.init_seed,
            shuffle: c.shuffle_seed,
            noise: c.noise_seed,
        }
    }

    pub fn checkpoint(&self, stage: Stage, model: &CocoModel, history: &[EpochMetrics], progress: Option<Progress>, epoch: usize) -> Checkpoint {
        Checkpoint::new(CheckpointParts {
            stage: &stage.to_string(),
            epoch,
            config: self.config.clone(),
            seeds: self.seeds(),
            spec: &self.spec,
            model,
            schedule: &self.trainer.schedule,
            class_names: &self.trainer.train.class_names,
            conditioning: self.trainer.cond,
            history,
            progress,
        })
    }

    fn fresh_skeleton(&self) -> Result<SkeletonModel> {
        let mut sk = SkeletonModel::new(&self.spec.encoder, &self.spec.topology, self.spec.text_dim)?;
        sk.encoder.fit_input_scale(self.trainer.train);
        Ok(sk)
    }

    /// Model at the start of `stage` given the previous stage's result.
    fn enter(&self, stage: Stage, prev: Option<CocoModel>) -> Result<CocoModel> {
        let prev = match prev {
            Some(p) => p,
            None => return CocoModel::for_dataset(&self.spec, self.trainer.train),
        };
        Ok(match stage {
            Stage::Joint => {
                // fresh encoder and classifier; the projection head and
                // denoiser carry over
                let mut skeleton = self.fresh_skeleton()?;
                skeleton.projection = prev.skeleton.projection;
                CocoModel {
                    skeleton,
                    denoiser: prev.denoiser,
                }
            }
            _ => prev,
        })
    }

    /// Run every stage, or continue from a checkpoint written by `on_epoch`.
    /// Returns `None` if a hook halted the run.
    pub fn run(&self, resume: Option<&Checkpoint>, hooks: &mut Hooks<'_>) -> Result<Option<Checkpoint>> {
        let stages = self.stages();
        let (mut idx, mut model, mut progress, mut history) = match resume {
            None => {
                let model = self.enter(stages[0], None)?;
                let progress = self.trainer.start(stages[0], &model);
                (0, model, progress, Vec::new())
            }
            Some(ck) => {
                let progress = ck
                    .progress
                    .clone()
                    .ok_or_else(|| Error::Checkpoint("checkpoint has no resumable progress".into()))?;
                let idx = stages
                    .iter()
                    .position(|&s| s == progress.stage)
                    .ok_or_else(|| Error::Checkpoint(format!("stage `{}` is not part of this run", progress.stage)))?;
                (idx, ck.model()?, progress, ck.history.clone())
            }
        };
        loop {
            let stage = stages[idx];
            let done = {
                let on_epoch = &mut hooks.on_epoch;
                self.trainer.run(&mut model, &mut progress, &mut history, &mut |m, p, h| match on_epoch {
                    Some(f) => f(&self.checkpoint(stage, m, h, Some(p.clone()), p.next_epoch)),
                    None => Ok(Flow::Continue),
                })?
            };
            if !done {
                return Ok(None);
            }
            let ck = self.checkpoint(stage, &model, &history, None, progress.next_epoch);
            if let Some(f) = &mut hooks.on_stage_end {
                f(stage, &ck)?;
            }
            idx += 1;
            if idx == stages.len() {
                return Ok(Some(ck));
            }
            model = self.enter(stages[idx], Some(model))?;
            progress = self.trainer.start(stages[idx], &model);
        }
    }
}
