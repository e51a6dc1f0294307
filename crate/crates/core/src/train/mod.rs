//! Stage-wise training: encoder pretraining (stage 0), diffusion pretraining
//! on frozen features (stage 1), joint training with a fresh encoder
//! (stage 2), and the classifier-only baseline.

mod metrics;
mod pipeline;

pub use metrics::{metrics_csv, write_metrics_csv, EpochMetrics, METRICS_HEADER};
pub use pipeline::{EpochHook, Flow, Hooks, Pipeline, StageHook};

use ndarray::{Array2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{batch_indices, batch_iter, SkeletonDataset, SkeletonSequence};
use crate::diffusion::{make_schedule, scaled_beta_bounds, NoiseSchedule};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::model::CocoModel;
use crate::nn::{normalize_rows, normalize_rows_backward, Linear, Parameters};
use crate::objectives::{
    argmax_rows, classification_loss_grad, contrastive_loss_grad, diffusion_loss, recon_loss_grad, total_loss,
    LossWeights, TargetMode,
};
use crate::optim::{lr_at, LrSchedule, Sgd};
use crate::text::TextConditioning;

/// Called after every epoch with the model, progress and full history.
pub type Observer<'a> = dyn FnMut(&CocoModel, &Progress, &[EpochMetrics]) -> Result<Flow> + 'a;

/// Which features the contrastive loss projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ContrastiveSource {
    /// The denoiser output.
    #[default]
    Generated,
    /// The encoder features.
    Encoder,
}

/// Which text signals are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Guidance {
    None,
    /// Fine descriptions condition the denoiser; no contrastive term.
    Fine,
    /// Coarse label embeddings drive the contrastive term; no denoiser
    /// conditioning.
    Coarse,
    #[default]
    Both,
}

impl Guidance {
    pub fn uses_fine(self) -> bool {
        matches!(self, Guidance::Fine | Guidance::Both)
    }

    pub fn uses_coarse(self) -> bool {
        matches!(self, Guidance::Coarse | Guidance::Both)
    }
}

macro_rules! str_enum {
    ($ty:ty, $field:literal, $($variant:path => $name:literal),+) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::config($field, format!("unknown value `{s}`"))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self {
                    $($variant => $name,)+
                })
            }
        }
    };
}

str_enum!(ContrastiveSource, "contrastive_source", ContrastiveSource::Generated => "generated", ContrastiveSource::Encoder => "encoder");
str_enum!(Guidance, "text_guidance", Guidance::None => "none", Guidance::Fine => "fine", Guidance::Coarse => "coarse", Guidance::Both => "both");
str_enum!(Stage, "stage", Stage::Encoder => "encoder", Stage::Diffusion => "diffusion", Stage::Joint => "joint", Stage::Baseline => "baseline");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Encoder,
    Diffusion,
    Joint,
    Baseline,
}

impl Stage {
    /// Prefixes of the tensors updated in this stage.
    fn trainable(self) -> &'static [&'static str] {
        match self {
            Stage::Encoder | Stage::Baseline => &["encoder.", "classifier."],
            Stage::Diffusion => &["denoiser.", "projection."],
            Stage::Joint => &["encoder.", "classifier.", "projection.", "denoiser."],
        }
    }

    /// Shuffle stream; the classifier-training stages share one so the
    /// baseline and the joint stage see identical batch orders.
    fn shuffle_stream(self) -> u64 {
        match self {
            Stage::Encoder | Stage::Baseline | Stage::Joint => 0,
            Stage::Diffusion => 1,
        }
    }

    fn noise_stream(self) -> u64 {
        match self {
            Stage::Diffusion => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Epochs of the joint stage and of the baseline.
    pub epochs: usize,
    pub encoder_epochs: usize,
    pub diffusion_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub diffusion_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub warmup_epochs: usize,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Rescale the beta bounds from a 1000-step reference to `steps`.
    pub scale_betas: bool,
    pub targets: TargetMode,
    pub contrastive_source: ContrastiveSource,
    pub guidance: Guidance,
    pub pretrain_encoder: bool,
    pub pretrain_diffusion: bool,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub noise_seed: u64,
    /// Fraction of each class held out to pick the best epoch; 0 keeps the
    /// final epoch.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            encoder_epochs: 60,
            diffusion_epochs: 60,
            batch_size: 64,
            lr: 0.1,
            diffusion_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0004,
            grad_clip: 0.0,
            warmup_epochs: 5,
            lr_decay_epochs: vec![40, 50],
            lr_decay_factor: 0.1,
            lambda: 0.075,
            temperature: 0.07,
            steps: 30,
            beta_start: 1e-4,
            beta_end: 0.02,
            scale_betas: true,
            targets: TargetMode::Normalized,
            contrastive_source: ContrastiveSource::Generated,
            guidance: Guidance::Both,
            pretrain_encoder: true,
            pretrain_diffusion: true,
            init_seed: 0,
            shuffle_seed: 0,
            noise_seed: 0,
            val_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    // negated comparisons reject NaN too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        self.lr_schedule(Stage::Joint).validate(self.epochs)?;
        if !(self.diffusion_lr > 0.0) {
            return Err(Error::config("diffusion_lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::config("grad_clip", "must be >= 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        self.loss_weights().validate()?;
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("val_fraction", "must be in [0, 1)"));
        }
        self.schedule().map(|_| ())
    }

    pub fn beta_bounds(&self) -> (f64, f64) {
        if self.scale_betas {
            scaled_beta_bounds(self.steps, self.beta_start, self.beta_end)
        } else {
            (self.beta_start, self.beta_end)
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let (a, b) = self.beta_bounds();
        make_schedule(self.steps, a, b)
    }

    pub fn lr_schedule(&self, stage: Stage) -> LrSchedule {
        LrSchedule {
            lr: if stage == Stage::Diffusion { self.diffusion_lr } else { self.lr },
            warmup_epochs: self.warmup_epochs,
            decay_epochs: self.lr_decay_epochs.clone(),
            decay_factor: self.lr_decay_factor,
        }
    }

    pub fn stage_epochs(&self, stage: Stage) -> usize {
        match stage {
            Stage::Encoder => self.encoder_epochs,
            Stage::Diffusion => self.diffusion_epochs,
            Stage::Joint | Stage::Baseline => self.epochs,
        }
    }

    /// `lambda` as applied; zero when the coarse text is switched off.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: if self.guidance.uses_coarse() { self.lambda } else { 0.0 },
        }
    }
}

/// Independent 64-bit seed for `(stream, epoch)` under `base`.
pub fn derive_seed(base: u64, stream: u64, epoch: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream((stream << 32) | epoch);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub accuracy: f64,
    pub params: Vec<f64>,
}

/// Resumable position within one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: Stage,
    pub next_epoch: usize,
    pub sgd: Sgd,
    pub best: Option<BestEpoch>,
}

/// Losses of one mini-batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub n: usize,
    pub cls: f64,
    pub recon: f64,
    pub con: f64,
    pub diff: f64,
    pub total: f64,
    /// Correct top-1 predictions on real features.
    pub correct: usize,
}

pub struct Trainer<'a> {
    pub cfg: &'a TrainConfig,
    pub train: &'a SkeletonDataset,
    /// Dataset used to pick the best epoch of the classifier stages.
    pub select: Option<&'a SkeletonDataset>,
    pub cond: &'a TextConditioning,
    pub schedule: NoiseSchedule,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: &'a TrainConfig,
        train: &'a SkeletonDataset,
        select: Option<&'a SkeletonDataset>,
        cond: &'a TextConditioning,
    ) -> Result<Self> {
        cfg.validate()?;
        train.validate()?;
        if train.is_empty() {
            return Err(Error::config("data", "training set is empty"));
        }
        if cond.coarse.nrows() != train.num_classes() {
            return Err(Error::shape("text classes", train.num_classes(), cond.coarse.nrows()));
        }
        Ok(Self {
            cfg,
            train,
            select,
            cond,
            schedule: cfg.schedule()?,
        })
    }

    pub fn start(&self, stage: Stage, model: &CocoModel) -> Progress {
        let mut sgd = Sgd::new(self.cfg.momentum, self.cfg.weight_decay, stage.trainable(), model.num_params());
        sgd.clip_norm = self.cfg.grad_clip;
        if stage == Stage::Joint {
            sgd.lr_scale = vec![("denoiser.".into(), self.cfg.diffusion_lr / self.cfg.lr)];
        }
        Progress {
            stage,
            next_epoch: 0,
            sgd,
            best: None,
        }
    }

    /// Run the remaining epochs of `progress.stage`. Returns `false` when the
    /// observer halted the run early.
    pub fn run(
        &self,
        model: &mut CocoModel,
        progress: &mut Progress,
        history: &mut Vec<EpochMetrics>,
        observer: &mut Observer,
    ) -> Result<bool> {
        let cached = match progress.stage {
            Stage::Diffusion => {
                let seqs: Vec<_> = self.train.sequences.iter().collect();
                Some(model.skeleton.encode(&seqs, self.train.shape)?)
            }
            _ => None,
        };
        self.run_inner(model, progress, history, observer, cached.as_ref())
    }

    /// Stage-1 training on precomputed features, one row per training
    /// sample; labels and sample ids still come from the training set.
    pub fn run_on_features(
        &self,
        model: &mut CocoModel,
        progress: &mut Progress,
        features: &Array2<f64>,
        history: &mut Vec<EpochMetrics>,
        observer: &mut Observer,
    ) -> Result<bool> {
        if progress.stage != Stage::Diffusion {
            return Err(Error::config("stage", "precomputed features only drive the diffusion stage"));
        }
        if features.nrows() != self.train.len() {
            return Err(Error::shape("features", self.train.len(), features.nrows()));
        }
        self.run_inner(model, progress, history, observer, Some(features))
    }

    fn run_inner(
        &self,
        model: &mut CocoModel,
        progress: &mut Progress,
        history: &mut Vec<EpochMetrics>,
        observer: &mut Observer,
        cached: Option<&Array2<f64>>,
    ) -> Result<bool> {
        let stage = progress.stage;
        let epochs = self.cfg.stage_epochs(stage);
        let schedule = self.cfg.lr_schedule(stage);
        while progress.next_epoch < epochs {
            let epoch = progress.next_epoch;
            let lr = lr_at(&schedule, epoch);
            let losses = match stage {
                Stage::Encoder | Stage::Baseline => self.classifier_epoch(stage, model, &mut progress.sgd, epoch, lr)?,
                Stage::Diffusion => self.diffusion_epoch(model, &mut progress.sgd, cached.expect("features cached"), epoch, lr)?,
                Stage::Joint => self.joint_epoch(model, &mut progress.sgd, epoch, lr)?,
            };
            let mut m = EpochMetrics::from_batches(stage, epoch, lr, &losses);
            if let (Some(sel), Stage::Joint | Stage::Baseline) = (self.select, stage) {
                let acc = accuracy(&model.skeleton, sel)?;
                m.select_acc = Some(acc);
                if progress.best.as_ref().is_none_or(|b| acc > b.accuracy) {
                    progress.best = Some(BestEpoch {
                        epoch,
                        accuracy: acc,
                        params: model.to_flat(),
                    });
                }
            }
            history.push(m);
            progress.next_epoch = epoch + 1;
            if observer(model, progress, history)? == Flow::Halt {
                return Ok(false);
            }
        }
        if let Some(best) = &progress.best {
            model.set_flat(&best.params);
        }
        Ok(true)
    }

    fn check(&self, stage: Stage, epoch: usize, batch: usize, quantity: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                stage: stage.to_string(),
                epoch,
                batch,
                quantity: quantity.to_string(),
            })
        }
    }

    fn check_all(&self, stage: Stage, epoch: usize, batch: usize, quantity: &str, x: &Array2<f64>) -> Result<()> {
        let bad = x.iter().find(|v| !v.is_finite()).copied().unwrap_or(0.0);
        self.check(stage, epoch, batch, quantity, bad)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_step(&self, stage: Stage, epoch: usize, batch: usize, model: &mut CocoModel, sgd: &mut Sgd, grad: &CocoModel, lr: f64) -> Result<()> {
        sgd.step(model, grad, lr)?;
        if !model.all_finite() {
            return Err(Error::Divergence {
                stage: stage.to_string(),
                epoch,
                batch,
                quantity: "parameters".into(),
            });
        }
        Ok(())
    }

    fn text_rows(&self, labels: &[usize], ids: &[u64]) -> Array2<f64> {
        if self.cfg.guidance.uses_fine() {
            self.cond.fine_rows(labels, ids)
        } else {
            Array2::zeros((labels.len(), self.cond.embed_dim()))
        }
    }

    /// Per-sample steps and Gaussian noise for one batch.
    fn draw_noise(&self, rng: &mut ChaCha8Rng, b: usize, d: usize) -> (Vec<usize>, Array2<f64>) {
        let t: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=self.schedule.steps())).collect();
        let eps = Array2::from_shape_simple_fn((b, d), || rng.sample(StandardNormal));
        (t, eps)
    }

    fn noise_rng(&self, stage: Stage, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.noise_seed);
        rng.set_stream((stage.noise_stream() << 32) | epoch as u64);
        rng
    }

    fn shuffle_seed(&self, stage: Stage, epoch: usize) -> u64 {
        derive_seed(self.cfg.shuffle_seed, stage.shuffle_stream(), epoch as u64)
    }

    /// Contrastive loss of `features` against the coarse label rows; returns
    /// the loss, `dL/dfeatures` and the projection gradient, both unscaled.
    fn contrastive(&self, projection: &Linear, features: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>, Linear)> {
        let raw = projection.forward(features);
        let (s, norms) = normalize_rows(&raw)?;
        let l = self.cond.coarse_rows(labels);
        let (loss, ds, _) = contrastive_loss_grad(&s, &l, labels, self.cfg.temperature, self.cfg.targets)?;
        let draw = normalize_rows_backward(&s, &norms, &ds);
        let mut g = Linear::zeros(projection.input_dim(), projection.output_dim());
        let dfeat = projection.backward(features, &draw, &mut g);
        Ok((loss, dfeat, g))
    }

    fn zero_grad(model: &CocoModel) -> CocoModel {
        let mut g = model.clone();
        g.fill(0.0);
        g
    }

    fn classifier_epoch(&self, stage: Stage, model: &mut CocoModel, sgd: &mut Sgd, epoch: usize, lr: f64) -> Result<Vec<BatchLoss>> {
        let mut out = Vec::new();
        for (bi, batch) in batch_iter(self.train, self.cfg.batch_size, self.shuffle_seed(stage, epoch), false).iter().enumerate() {
            let sk = &model.skeleton;
            let (x0, traces) = sk.encoder.encode_traced(&batch.sequences, self.train.shape)?;
            let logits = sk.classify(&x0)?;
            let (l_cls, dlogits) = classification_loss_grad(&logits, &batch.labels)?;
            self.check(stage, epoch, bi, "L_cls", l_cls)?;
            let mut grad = Self::zero_grad(model);
            let dx0 = sk.classifier.backward(&x0, &dlogits, &mut grad.skeleton.classifier);
            grad.skeleton.encoder = sk.encoder.backward(&traces, &dx0);
            out.push(BatchLoss {
                n: batch.labels.len(),
                cls: l_cls,
                recon: 0.0,
                con: 0.0,
                diff: 0.0,
                total: l_cls,
                correct: correct(&logits, &batch.labels),
            });
            self.finish_step(stage, epoch, bi, model, sgd, &grad, lr)?;
        }
        Ok(out)
    }

    fn diffusion_epoch(&self, model: &mut CocoModel, sgd: &mut Sgd, features: &Array2<f64>, epoch: usize, lr: f64) -> Result<Vec<BatchLoss>> {
        let stage = Stage::Diffusion;
        let mut rng = self.noise_rng(stage, epoch);
        let lambda = self.cfg.loss_weights().lambda;
        let mut out = Vec::new();
        for (bi, idx) in batch_indices(self.train.len(), self.cfg.batch_size, self.shuffle_seed(stage, epoch), false).iter().enumerate() {
            let labels: Vec<usize> = idx.iter().map(|&i| self.train.sequences[i].label).collect();
            let ids: Vec<u64> = idx.iter().map(|&i| self.train.sequences[i].sample_id).collect();
            let x0 = features.select(Axis(0), idx);
            let (t, eps) = self.draw_noise(&mut rng, idx.len(), x0.ncols());
            let x_t = self.schedule.q_sample_batch(&x0, &t, &eps)?;
            let e_f = self.text_rows(&labels, &ids);
            let (x0_hat, trace) = model.denoiser.forward_traced(&x_t, &t, &e_f)?;
            self.check_all(stage, epoch, bi, "x0_hat", &x0_hat)?;
            let (l_recon, mut dx0_hat) = recon_loss_grad(&x0_hat, &x0)?;
            let mut grad = Self::zero_grad(model);
            let con_input = match self.cfg.contrastive_source {
                ContrastiveSource::Generated => &x0_hat,
                ContrastiveSource::Encoder => &x0,
            };
            let (l_con, dfeat, gproj) = self.contrastive(&model.skeleton.projection, con_input, &labels)?;
            if lambda > 0.0 {
                if self.cfg.contrastive_source == ContrastiveSource::Generated {
                    dx0_hat.scaled_add(lambda, &dfeat);
                }
                grad.skeleton.projection.weight.scaled_add(lambda, &gproj.weight);
                grad.skeleton.projection.bias.scaled_add(lambda, &gproj.bias);
            }
            let l_diff = diffusion_loss(l_recon, l_con, self.cfg.loss_weights());
            self.check(stage, epoch, bi, "L_diff", l_diff)?;
            model.denoiser.backward(&trace, &dx0_hat, &mut grad.denoiser);
            let logits = model.skeleton.classify(&x0_hat)?;
            out.push(BatchLoss {
                n: idx.len(),
                cls: 0.0,
                recon: l_recon,
                con: l_con,
                diff: l_diff,
                total: l_diff,
                correct: correct(&logits, &labels),
            });
            self.finish_step(stage, epoch, bi, model, sgd, &grad, lr)?;
        }
        Ok(out)
    }

    fn joint_epoch(&self, model: &mut CocoModel, sgd: &mut Sgd, epoch: usize, lr: f64) -> Result<Vec<BatchLoss>> {
        let stage = Stage::Joint;
        let mut rng = self.noise_rng(stage, epoch);
        let mut out = Vec::new();
        for (bi, batch) in batch_iter(self.train, self.cfg.batch_size, self.shuffle_seed(stage, epoch), false).iter().enumerate() {
            let (t, eps) = self.draw_noise(&mut rng, batch.len(), model.skeleton.encoder.feature_dim());
            let (loss, grad) = self.joint_gradient(model, &batch.sequences, &batch.sample_ids, &t, &eps)?;
            self.check(stage, epoch, bi, "L", loss.total)?;
            out.push(loss);
            self.finish_step(stage, epoch, bi, model, sgd, &grad, lr)?;
        }
        Ok(out)
    }

    /// Stage-2 losses and gradients of one batch for the given steps and
    /// noise. The reconstruction target `x0` is held constant.
    pub fn joint_gradient(
        &self,
        model: &CocoModel,
        sequences: &[&SkeletonSequence],
        sample_ids: &[u64],
        t: &[usize],
        eps: &Array2<f64>,
    ) -> Result<(BatchLoss, CocoModel)> {
        let sk = &model.skeleton;
        let labels: Vec<usize> = sequences.iter().map(|s| s.label).collect();
        let lambda = self.cfg.loss_weights().lambda;
        let (x0, traces) = sk.encoder.encode_traced(sequences, self.train.shape)?;
        let x_t = self.schedule.q_sample_batch(&x0, t, eps)?;
        let e_f = self.text_rows(&labels, sample_ids);
        let (x0_hat, trace) = model.denoiser.forward_traced(&x_t, t, &e_f)?;

        let mut grad = Self::zero_grad(model);
        let logits_real = sk.classify(&x0)?;
        let logits_gen = sk.classify(&x0_hat)?;
        let (ce_real, g_real) = classification_loss_grad(&logits_real, &labels)?;
        let (ce_gen, g_gen) = classification_loss_grad(&logits_gen, &labels)?;
        let l_cls = 0.5 * (ce_real + ce_gen);
        let mut dx0 = sk.classifier.backward(&x0, &(g_real * 0.5), &mut grad.skeleton.classifier);
        let mut dx0_hat = sk.classifier.backward(&x0_hat, &(g_gen * 0.5), &mut grad.skeleton.classifier);

        // x0 as the reconstruction target is a constant
        let (l_recon, d_recon) = recon_loss_grad(&x0_hat, &x0)?;
        dx0_hat += &d_recon;

        let con_input = match self.cfg.contrastive_source {
            ContrastiveSource::Generated => &x0_hat,
            ContrastiveSource::Encoder => &x0,
        };
        let (l_con, dfeat, gproj) = self.contrastive(&sk.projection, con_input, &labels)?;
        if lambda > 0.0 {
            match self.cfg.contrastive_source {
                ContrastiveSource::Generated => dx0_hat.scaled_add(lambda, &dfeat),
                ContrastiveSource::Encoder => dx0.scaled_add(lambda, &dfeat),
            }
            grad.skeleton.projection.weight.scaled_add(lambda, &gproj.weight);
            grad.skeleton.projection.bias.scaled_add(lambda, &gproj.bias);
        }
        let l_diff = diffusion_loss(l_recon, l_con, self.cfg.loss_weights());

        let dx_t = model.denoiser.backward(&trace, &dx0_hat, &mut grad.denoiser);
        for (i, &ti) in t.iter().enumerate() {
            dx0.row_mut(i).scaled_add(self.schedule.alpha_bar(ti).sqrt(), &dx_t.row(i));
        }
        grad.skeleton.encoder = sk.encoder.backward(&traces, &dx0);
        let loss = BatchLoss {
            n: labels.len(),
            cls: l_cls,
            recon: l_recon,
            con: l_con,
            diff: l_diff,
            total: total_loss(l_cls, l_diff),
            correct: correct(&logits_real, &labels),
        };
        Ok((loss, grad))
    }
}

fn correct(logits: &Array2<f64>, labels: &[usize]) -> usize {
    argmax_rows(logits).iter().zip(labels).filter(|(p, l)| p == l).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_epoch() {
        let a = derive_seed(7, 0, 0);
        assert_eq!(a, derive_seed(7, 0, 0));
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(8, 0, 0));
    }

    #[test]
    fn guidance_switches() {
        let mut c = TrainConfig::default();
        assert_eq!(c.loss_weights().lambda, 0.075);
        c.guidance = Guidance::Fine;
        assert_eq!(c.loss_weights().lambda, 0.0);
        assert!(!Guidance::None.uses_fine() && !Guidance::None.uses_coarse());
        assert_eq!("coarse".parse::<Guidance>().unwrap(), Guidance::Coarse);
        assert_eq!(Stage::Joint.to_string(), "joint");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr_decay_epochs: vec![60],
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
