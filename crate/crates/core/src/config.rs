//! Flat `key=value` run configuration covering data generation, text
//! encoding, both networks, training and evaluation.

use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::dataset::{GenerationSpec, GraphTopology, SkeletonDataset};
use crate::diffusion::DenoiserConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::DivOptions;
use crate::model::ModelSpec;
use crate::text::{build_text_bank, load_embedding_table, EncoderKind, TextConditioning, TextEncoder, TextEncoderConfig};
use crate::train::{Hooks, Pipeline, TrainConfig, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: GenerationSpec,
    pub text: TextEncoderConfig,
    pub text_table: Option<PathBuf>,
    pub widths: Vec<usize>,
    pub temporal_kernel: usize,
    pub feature_norm: bool,
    pub feature_gain: f64,
    pub strides: Vec<usize>,
    pub denoiser_hidden: Vec<usize>,
    pub time_embed_dim: usize,
    /// Per-coordinate data variance behind the denoiser's fixed `x_t`
    /// skip; 0 disables the skip.
    pub skip_data_var: f64,
    pub train: TrainConfig,
    pub div_pairs: usize,
    pub div_seed: u64,
    /// Start step of generation chains; 0 means the last step.
    pub gen_steps: usize,
    pub gen_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let den = DenoiserConfig::default();
        Self {
            data: GenerationSpec::default(),
            text: TextEncoderConfig::default(),
            text_table: None,
            widths: enc.widths,
            temporal_kernel: enc.temporal_kernel,
            feature_norm: enc.feature_norm,
            feature_gain: enc.feature_gain,
            strides: enc.strides,
            denoiser_hidden: den.hidden,
            time_embed_dim: den.time_embed_dim,
            skip_data_var: 0.002,
            train: TrainConfig::default(),
            div_pairs: 1000,
            div_seed: 0,
            gen_steps: 0,
            gen_seed: 0,
        }
    }
}

/// Every key, in the order `pairs()` emits them.
pub const KEYS: &[&str] = &[
    "classes",
    "per_class",
    "topology",
    "frames",
    "actors",
    "jitter_std",
    "scale_min",
    "scale_max",
    "speed_min",
    "speed_max",
    "phase_min",
    "phase_max",
    "data_seed",
    "text_dim",
    "text_encoder",
    "text_seed",
    "text_table",
    "widths",
    "temporal_kernel",
    "feature_norm",
    "feature_gain",
    "strides",
    "denoiser_hidden",
    "time_embed_dim",
    "skip_data_var",
    "epochs",
    "encoder_epochs",
    "diffusion_epochs",
    "batch_size",
    "lr",
    "diffusion_lr",
    "momentum",
    "weight_decay",
    "grad_clip",
    "warmup_epochs",
    "lr_decay_epochs",
    "lr_decay_factor",
    "lambda",
    "temperature",
    "T",
    "beta_start",
    "beta_end",
    "scale_betas",
    "contrastive_targets",
    "contrastive_source",
    "text_guidance",
    "pretrain_gcn",
    "pretrain_diffusion",
    "init_seed",
    "shuffle_seed",
    "noise_seed",
    "val_fraction",
    "div_pairs",
    "div_seed",
    "gen_steps",
    "gen_seed",
];

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse(key, x)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
    }
}

fn topology_name(t: &GraphTopology) -> String {
    if *t == GraphTopology::ntu25() {
        "ntu25".into()
    } else {
        format!("chain:{}", t.num_joints)
    }
}

fn parse_topology(v: &str) -> Result<GraphTopology> {
    match v.trim() {
        "ntu25" => Ok(GraphTopology::ntu25()),
        other => match other.strip_prefix("chain:") {
            Some(n) => Ok(GraphTopology::chain(parse("topology", n)?)),
            None => Err(Error::config("topology", format!("unknown topology `{other}`"))),
        },
    }
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let d = &self.data;
        let t = &self.train;
        Some(match key {
            "classes" => d.num_classes.to_string(),
            "per_class" => d.samples_per_class.to_string(),
            "topology" => topology_name(&d.topology),
            "frames" => d.frames.to_string(),
            "actors" => d.actors.to_string(),
            "jitter_std" => d.jitter_std.to_string(),
            "scale_min" => d.scale_range.0.to_string(),
            "scale_max" => d.scale_range.1.to_string(),
            "speed_min" => d.speed_range.0.to_string(),
            "speed_max" => d.speed_range.1.to_string(),
            "phase_min" => d.phase_range.0.to_string(),
            "phase_max" => d.phase_range.1.to_string(),
            "data_seed" => d.seed.to_string(),
            "text_dim" => self.text.embed_dim.to_string(),
            "text_encoder" => self.text.kind.to_string(),
            "text_seed" => self.text.seed.to_string(),
            "text_table" => self.text_table.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "widths" => list(&self.widths),
            "temporal_kernel" => self.temporal_kernel.to_string(),
            "feature_norm" => self.feature_norm.to_string(),
            "feature_gain" => self.feature_gain.to_string(),
            "strides" => list(&self.strides),
            "denoiser_hidden" => list(&self.denoiser_hidden),
            "time_embed_dim" => self.time_embed_dim.to_string(),
            "skip_data_var" => self.skip_data_var.to_string(),
            "epochs" => t.epochs.to_string(),
            "encoder_epochs" => t.encoder_epochs.to_string(),
            "diffusion_epochs" => t.diffusion_epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.lr.to_string(),
            "diffusion_lr" => t.diffusion_lr.to_string(),
            "momentum" => t.momentum.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "grad_clip" => t.grad_clip.to_string(),
            "warmup_epochs" => t.warmup_epochs.to_string(),
            "lr_decay_epochs" => list(&t.lr_decay_epochs),
            "lr_decay_factor" => t.lr_decay_factor.to_string(),
            "lambda" => t.lambda.to_string(),
            "temperature" => t.temperature.to_string(),
            "T" => t.steps.to_string(),
            "beta_start" => t.beta_start.to_string(),
            "beta_end" => t.beta_end.to_string(),
            "scale_betas" => t.scale_betas.to_string(),
            "contrastive_targets" => t.targets.to_string(),
            "contrastive_source" => t.contrastive_source.to_string(),
            "text_guidance" => t.guidance.to_string(),
            "pretrain_gcn" => t.pretrain_encoder.to_string(),
            "pretrain_diffusion" => t.pretrain_diffusion.to_string(),
            "init_seed" => t.init_seed.to_string(),
            "shuffle_seed" => t.shuffle_seed.to_string(),
            "noise_seed" => t.noise_seed.to_string(),
            "val_fraction" => t.val_fraction.to_string(),
            "div_pairs" => self.div_pairs.to_string(),
            "div_seed" => self.div_seed.to_string(),
            "gen_steps" => self.gen_steps.to_string(),
            "gen_seed" => self.gen_seed.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.data;
        let t = &mut self.train;
        match key {
            "classes" => d.num_classes = parse(key, v)?,
            "per_class" => d.samples_per_class = parse(key, v)?,
            "topology" => d.topology = parse_topology(v)?,
            "frames" => d.frames = parse(key, v)?,
            "actors" => d.actors = parse(key, v)?,
            "jitter_std" => d.jitter_std = parse(key, v)?,
            "scale_min" => d.scale_range.0 = parse(key, v)?,
            "scale_max" => d.scale_range.1 = parse(key, v)?,
            "speed_min" => d.speed_range.0 = parse(key, v)?,
            "speed_max" => d.speed_range.1 = parse(key, v)?,
            "phase_min" => d.phase_range.0 = parse(key, v)?,
            "phase_max" => d.phase_range.1 = parse(key, v)?,
            "data_seed" => d.seed = parse(key, v)?,
            "text_dim" => self.text.embed_dim = parse(key, v)?,
            "text_encoder" => self.text.kind = v.trim().parse()?,
            "text_seed" => self.text.seed = parse(key, v)?,
            "text_table" => self.text_table = (!v.trim().is_empty()).then(|| PathBuf::from(v.trim())),
            "widths" => self.widths = parse_list(key, v)?,
            "temporal_kernel" => self.temporal_kernel = parse(key, v)?,
            "feature_norm" => self.feature_norm = parse(key, v)?,
            "feature_gain" => self.feature_gain = parse(key, v)?,
            "strides" => self.strides = parse_list(key, v)?,
            "denoiser_hidden" => self.denoiser_hidden = parse_list(key, v)?,
            "time_embed_dim" => self.time_embed_dim = parse(key, v)?,
            "skip_data_var" => self.skip_data_var = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "encoder_epochs" => t.encoder_epochs = parse(key, v)?,
            "diffusion_epochs" => t.diffusion_epochs = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "diffusion_lr" => t.diffusion_lr = parse(key, v)?,
            "momentum" => t.momentum = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "grad_clip" => t.grad_clip = parse(key, v)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, v)?,
            "lr_decay_epochs" => t.lr_decay_epochs = parse_list(key, v)?,
            "lr_decay_factor" => t.lr_decay_factor = parse(key, v)?,
            "lambda" => t.lambda = parse(key, v)?,
            "temperature" => t.temperature = parse(key, v)?,
            "T" => t.steps = parse(key, v)?,
            "beta_start" => t.beta_start = parse(key, v)?,
            "beta_end" => t.beta_end = parse(key, v)?,
            "scale_betas" => t.scale_betas = parse_bool(key, v)?,
            "contrastive_targets" => t.targets = v.trim().parse()?,
            "contrastive_source" => t.contrastive_source = v.trim().parse()?,
            "text_guidance" => t.guidance = v.trim().parse()?,
            "pretrain_gcn" => t.pretrain_encoder = parse_bool(key, v)?,
            "pretrain_diffusion" => t.pretrain_diffusion = parse_bool(key, v)?,
            "init_seed" => t.init_seed = parse(key, v)?,
            "shuffle_seed" => t.shuffle_seed = parse(key, v)?,
            "noise_seed" => t.noise_seed = parse(key, v)?,
            "val_fraction" => t.val_fraction = parse(key, v)?,
            "div_pairs" => self.div_pairs = parse(key, v)?,
            "div_seed" => self.div_seed = parse(key, v)?,
            "gen_steps" => self.gen_steps = parse(key, v)?,
            "gen_seed" => self.gen_seed = parse(key, v)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Set every seed at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.init_seed = seed;
        self.train.shuffle_seed = seed;
        self.train.noise_seed = seed;
        self.div_seed = seed;
        self.gen_seed = seed;
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Apply `key=value` lines on top of `self`; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config { field, msg } => Error::Parse {
                    line: i + 1,
                    msg: format!("{field}: {msg}"),
                },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn generation_spec(&self) -> GenerationSpec {
        self.data.clone()
    }

    pub fn encoder_config(&self, num_classes: usize) -> EncoderConfig {
        EncoderConfig {
            widths: self.widths.clone(),
            temporal_kernel: self.temporal_kernel,
            strides: self.strides.clone(),
            feature_dim: self.widths.last().copied().unwrap_or(0),
            num_classes,
            init_seed: self.train.init_seed,
            feature_norm: self.feature_norm,
            feature_gain: self.feature_gain,
        }
    }

    pub fn denoiser_config(&self, feature_dim: usize) -> DenoiserConfig {
        DenoiserConfig {
            feature_dim,
            time_embed_dim: self.time_embed_dim,
            text_embed_dim: self.text.embed_dim,
            hidden: self.denoiser_hidden.clone(),
            init_seed: self.train.init_seed ^ 0x9e37_79b9_7f4a_7c15,
            input_skip: self.input_skip_weights(),
        }
    }

    /// Empty when the skip is off or the schedule is invalid (training
    /// reports the latter).
    fn input_skip_weights(&self) -> Vec<f64> {
        if self.skip_data_var <= 0.0 {
            return Vec::new();
        }
        self.train.schedule().map(|s| s.skip_weights(self.skip_data_var)).unwrap_or_default()
    }

    pub fn model_spec(&self, ds: &SkeletonDataset) -> ModelSpec {
        let encoder = self.encoder_config(ds.num_classes());
        let denoiser = Some(self.denoiser_config(encoder.feature_dim));
        ModelSpec {
            encoder,
            topology: ds.topology.clone(),
            text_dim: self.text.embed_dim,
            denoiser,
        }
    }

    pub fn text_encoder(&self) -> Result<TextEncoder> {
        self.text.validate()?;
        match self.text.kind {
            EncoderKind::ToyHash => TextEncoder::toy(self.text.clone()),
            EncoderKind::External => {
                let path = self
                    .text_table
                    .as_ref()
                    .ok_or_else(|| Error::config("text_table", "required for the external text encoder"))?;
                let (dim, table) = load_embedding_table(path)?;
                if dim != self.text.embed_dim {
                    return Err(Error::config("text_dim", format!("table has dimension {dim}")));
                }
                TextEncoder::external(self.text.clone(), table)
            }
        }
    }

    pub fn conditioning(&self, class_names: &[String]) -> Result<TextConditioning> {
        TextConditioning::build(&self.text_encoder()?, &build_text_bank(class_names)?)
    }

    pub fn div_options(&self) -> DivOptions {
        DivOptions {
            num_pairs: self.div_pairs,
            seed: self.div_seed,
        }
    }

    /// Generation start step with 0 resolved to `T`.
    pub fn gen_start(&self) -> usize {
        if self.gen_steps == 0 {
            self.train.steps
        } else {
            self.gen_steps
        }
    }
}

/// Train on `train`, picking the best epoch on `select` if given, or on a
/// held-out split when `val_fraction > 0`.
pub fn run_training(
    cfg: &RunConfig,
    train: &SkeletonDataset,
    select: Option<&SkeletonDataset>,
    baseline: bool,
    resume: Option<&Checkpoint>,
    hooks: &mut Hooks<'_>,
) -> Result<Option<Checkpoint>> {
    let split;
    let (train, select) = match (select, cfg.train.val_fraction > 0.0) {
        (None, true) => {
            split = train.split(cfg.train.val_fraction);
            (&split.0, Some(&split.1))
        }
        _ => (train, select),
    };
    let cond = cfg.conditioning(&train.class_names)?;
    let pipeline = Pipeline {
        trainer: Trainer::new(&cfg.train, train, select, &cond)?,
        spec: cfg.model_spec(train),
        config: cfg.pairs(),
        baseline,
    };
    pipeline.run(resume, hooks)
}
