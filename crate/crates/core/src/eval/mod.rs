//! Accuracy metrics, feature diversity, embedding export and ablation
//! sweeps.

mod sweep;

pub use sweep::{run_sweep, sweep_csv, sweep_timing_csv, SweepAxis, SweepRow, SweepSpec, SWEEP_HEADER};

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::SkeletonDataset;
use crate::diffusion::{sample, Denoise, NoiseSchedule};
use crate::encoder::SkeletonModel;
use crate::error::{Error, Result};
use crate::objectives::argmax_rows;
use crate::text::TextConditioning;
use crate::train::Guidance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub top1: f64,
    pub top5: f64,
    /// Accuracy per class; `NaN` for classes absent from the data.
    pub per_class: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub div: f64,
    pub num_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivOptions {
    pub num_pairs: usize,
    pub seed: u64,
}

impl Default for DivOptions {
    fn default() -> Self {
        Self { num_pairs: 1000, seed: 0 }
    }
}

fn check_compatible(model: &SkeletonModel, ds: &SkeletonDataset) -> Result<()> {
    model.encoder.check_shape(ds.shape)?;
    if ds.num_classes() != model.num_classes() {
        return Err(Error::shape("classes", model.num_classes(), ds.num_classes()));
    }
    Ok(())
}

pub fn features(model: &SkeletonModel, ds: &SkeletonDataset) -> Result<Array2<f64>> {
    check_compatible(model, ds)?;
    let seqs: Vec<_> = ds.sequences.iter().collect();
    model.encode(&seqs, ds.shape)
}

pub fn accuracy(model: &SkeletonModel, ds: &SkeletonDataset) -> Result<f64> {
    let logits = model.classify(&features(model, ds)?)?;
    let hits = argmax_rows(&logits).iter().zip(&ds.sequences).filter(|(p, s)| **p == s.label).count();
    Ok(hits as f64 / ds.len().max(1) as f64)
}

/// Position of `label` when classes are ranked by logit, ties to the lower
/// index.
fn rank_of(row: ndarray::ArrayView1<'_, f64>, label: usize) -> usize {
    let target = row[label];
    row.iter()
        .enumerate()
        .filter(|&(k, &v)| v > target || (v == target && k < label))
        .count()
}

/// Metrics from logits, features for DIV, and true labels.
pub fn report_from_logits(logits: &Array2<f64>, features: &Array2<f64>, labels: &[usize], div: DivOptions) -> Result<MetricReport> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape("labels", logits.nrows(), labels.len()));
    }
    let c = logits.ncols();
    let k = c.min(5);
    let (mut top1, mut top5) = (0usize, 0usize);
    let mut hits = vec![0usize; c];
    let mut counts = vec![0usize; c];
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        if y >= c {
            return Err(Error::Index(format!("label {y} with {c} classes")));
        }
        let r = rank_of(row, y);
        counts[y] += 1;
        if r == 0 {
            top1 += 1;
            hits[y] += 1;
        }
        if r < k {
            top5 += 1;
        }
    }
    let n = labels.len().max(1) as f64;
    Ok(MetricReport {
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &m)| if m == 0 { f64::NAN } else { h as f64 / m as f64 })
            .collect(),
        class_counts: counts,
        div: if features.nrows() >= 2 {
            diversity(features, div.num_pairs, div.seed)?
        } else {
            0.0
        },
        num_samples: labels.len(),
    })
}

/// Classification metrics from encoder and classifier only.
pub fn evaluate_model(model: &SkeletonModel, ds: &SkeletonDataset, div: DivOptions) -> Result<MetricReport> {
    let f = features(model, ds)?;
    let logits = model.classify(&f)?;
    report_from_logits(&logits, &f, &ds.labels(), div)
}

pub fn evaluate(ckpt: &Checkpoint, ds: &SkeletonDataset, div: DivOptions) -> Result<MetricReport> {
    evaluate_model(&ckpt.model()?.skeleton, ds, div)
}

/// Per-class accuracy of `a` minus `b`.
pub fn per_class_delta(a: &MetricReport, b: &MetricReport) -> Result<Vec<f64>> {
    if a.per_class.len() != b.per_class.len() {
        return Err(Error::Metric(format!(
            "class counts differ: {} vs {}",
            a.per_class.len(),
            b.per_class.len()
        )));
    }
    Ok(a.per_class.iter().zip(&b.per_class).map(|(x, y)| x - y).collect())
}

/// Mean L2 distance over `num_pairs` seeded random pairs of distinct rows.
pub fn diversity(features: &Array2<f64>, num_pairs: usize, seed: u64) -> Result<f64> {
    let k = features.nrows();
    if k < 2 {
        return Err(Error::Metric(format!("diversity needs at least 2 features, got {k}")));
    }
    if num_pairs == 0 {
        return Err(Error::Metric("num_pairs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..num_pairs {
        let i = rng.gen_range(0..k);
        let mut j = rng.gen_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        let d = &features.row(i) - &features.row(j);
        total += d.dot(&d).sqrt();
    }
    Ok(total / num_pairs as f64)
}

/// Full-chain samples started from `q_sample(x0, t_gen)`.
#[allow(clippy::too_many_arguments)]
pub fn generate_features<D: Denoise + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    cond: &TextConditioning,
    guidance: Guidance,
    x0: &Array2<f64>,
    labels: &[usize],
    sample_ids: &[u64],
    t_gen: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if t_gen == 0 || t_gen > schedule.steps() {
        return Err(Error::Index(format!("generation step {t_gen} outside [1, {}]", schedule.steps())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Array2::from_shape_simple_fn(x0.dim(), || rng.sample(StandardNormal));
    let x_t = schedule.q_sample_batch(x0, &vec![t_gen; x0.nrows()], &eps)?;
    let e_f = if guidance.uses_fine() {
        cond.fine_rows(labels, sample_ids)
    } else {
        Array2::zeros((labels.len(), cond.embed_dim()))
    };
    sample(denoiser, schedule, &x_t, t_gen, &e_f, rng.gen())
}

pub fn checkpoint_guidance(ckpt: &Checkpoint) -> Result<Guidance> {
    ckpt.config_value("text_guidance").map_or(Ok(Guidance::Both), str::parse)
}

/// Original (and optionally generated) features of `ckpt` on `ds`.
pub fn embedding_rows(ckpt: &Checkpoint, ds: &SkeletonDataset, include_generated: bool, t_gen: usize, seed: u64) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    let model = ckpt.model()?;
    let f = features(&model.skeleton, ds)?;
    if !include_generated {
        return Ok((f, None));
    }
    let ids: Vec<u64> = ds.sequences.iter().map(|s| s.sample_id).collect();
    let g = generate_features(
        &model.denoiser,
        &ckpt.schedule()?,
        &ckpt.conditioning()?,
        checkpoint_guidance(ckpt)?,
        &f,
        &ds.labels(),
        &ids,
        t_gen,
        seed,
    )?;
    Ok((f, Some(g)))
}

/// CSV with columns `sample_id,label,generated,f0..f{D-1}`.
pub fn embeddings_csv(ds: &SkeletonDataset, original: &Array2<f64>, generated: Option<&Array2<f64>>) -> String {
    let d = original.ncols();
    let mut s = String::from("sample_id,label,generated");
    for k in 0..d {
        let _ = write!(s, ",f{k}");
    }
    s.push('\n');
    let mut emit = |m: &Array2<f64>, flag: u8| {
        for (row, seq) in m.rows().into_iter().zip(&ds.sequences) {
            let _ = write!(s, "{},{},{flag}", seq.sample_id, seq.label);
            for v in row {
                let _ = write!(s, ",{v:.8e}");
            }
            s.push('\n');
        }
    };
    emit(original, 0);
    if let Some(g) = generated {
        emit(g, 1);
    }
    s
}

pub fn export_embeddings(ckpt: &Checkpoint, ds: &SkeletonDataset, path: impl AsRef<Path>, include_generated: bool, t_gen: usize, seed: u64) -> Result<()> {
    let (f, g) = embedding_rows(ckpt, ds, include_generated, t_gen, seed)?;
    let path = path.as_ref();
    std::fs::write(path, embeddings_csv(ds, &f, g.as_ref())).map_err(|e| Error::io(path, e))
}

pub const REPORT_HEADER: &str = "metric,value";

/// Two-column CSV: `top1`, `top5`, `div`, `num_samples`, then
/// `class<k>` rows.
pub fn report_csv(r: &MetricReport) -> String {
    let mut s = format!("{REPORT_HEADER}\ntop1,{:.8e}\ntop5,{:.8e}\ndiv,{:.8e}\nnum_samples,{}\n", r.top1, r.top5, r.div, r.num_samples);
    for (k, a) in r.per_class.iter().enumerate() {
        let _ = writeln!(s, "class{k},{a:.8e}");
    }
    s
}
