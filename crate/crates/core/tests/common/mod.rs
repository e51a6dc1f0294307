#![allow(dead_code)]

use cocodiff::config::RunConfig;
use cocodiff::dataset::{class_name, GraphTopology, SequenceShape, SkeletonDataset, SkeletonSequence};
use cocodiff::diffusion::DenoiserConfig;
use cocodiff::encoder::EncoderConfig;
use cocodiff::model::ModelSpec;
use cocodiff::text::{build_text_bank, TextConditioning, TextEncoder, TextEncoderConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Placeholder clips that only carry labels and ids, for driving the
/// diffusion stage on precomputed features.
pub fn label_only_dataset(labels: &[usize], num_classes: usize) -> SkeletonDataset {
    let shape = SequenceShape {
        channels: 3,
        frames: 1,
        joints: 1,
        actors: 1,
    };
    SkeletonDataset {
        shape,
        sequences: labels
            .iter()
            .enumerate()
            .map(|(i, &label)| SkeletonSequence {
                data: vec![0.0; shape.len()],
                label,
                sample_id: i as u64,
            })
            .collect(),
        class_names: (0..num_classes).map(class_name).collect(),
        topology: GraphTopology::chain(1),
    }
}

pub struct Clusters {
    pub centroids: Array2<f64>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

/// `per_class` isotropic Gaussian draws around random sign-vector
/// centroids.
pub fn gaussian_clusters(classes: usize, dim: usize, per_class: usize, std: f64, seed: u64) -> Clusters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids = Array2::from_shape_simple_fn((classes, dim), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.signum()
    });
    let noise = Normal::new(0.0, std).unwrap();
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut features = Array2::zeros((n, dim));
    for (i, &c) in labels.iter().enumerate() {
        for k in 0..dim {
            features[[i, k]] = centroids[[c, k]] + noise.sample(&mut rng);
        }
    }
    Clusters {
        centroids,
        features,
        labels,
    }
}

pub fn conditioning(classes: usize, dim: usize) -> TextConditioning {
    let names: Vec<String> = (0..classes).map(class_name).collect();
    let encoder = TextEncoder::toy(TextEncoderConfig {
        embed_dim: dim,
        ..TextEncoderConfig::default()
    })
    .unwrap();
    TextConditioning::build(&encoder, &build_text_bank(&names).unwrap()).unwrap()
}

/// A model whose skeleton side is a stub, sized for `dim`-wide features.
pub fn feature_model_spec(dim: usize, classes: usize, text_dim: usize, hidden: Vec<usize>, seed: u64) -> ModelSpec {
    ModelSpec {
        encoder: EncoderConfig {
            widths: vec![dim],
            temporal_kernel: 1,
            strides: vec![1],
            feature_dim: dim,
            num_classes: classes,
            init_seed: seed,
            ..EncoderConfig::default()
        },
        topology: GraphTopology::chain(1),
        text_dim,
        denoiser: Some(DenoiserConfig {
            feature_dim: dim,
            time_embed_dim: 16,
            text_embed_dim: text_dim,
            hidden,
            init_seed: seed ^ 0x9e37_79b9,
            ..DenoiserConfig::default()
        }),
    }
}

/// Desk-scale end-to-end setup: six classes, short clips, a narrow encoder.
pub fn desk_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    for (k, v) in [
        ("classes", "6"),
        ("per_class", "20"),
        ("frames", "32"),
        ("jitter_std", "0.15"),
        ("widths", "8,16,32"),
        ("denoiser_hidden", "64,32"),
        ("text_dim", "32"),
        ("time_embed_dim", "16"),
        ("epochs", "60"),
        ("encoder_epochs", "60"),
        ("diffusion_epochs", "60"),
        ("batch_size", "16"),
        ("lr_decay_epochs", "40,50"),
        ("warmup_epochs", "5"),
    ] {
        c.set(k, v).unwrap();
    }
    c.set_seed(seed);
    c
}
