//! Minimal spatio-temporal graph-convolutional backbone with classification
//! and text-projection heads.
//!
//! Per-sample activations are stored as `[channels, frames * actors * joints]`
//! matrices (frame-major, then actor, then joint), so channel mixing is one
//! GEMM and joint aggregation acts on contiguous runs of `V` values.

use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GraphTopology, SequenceShape, SkeletonDataset, SkeletonSequence};
use crate::error::{Error, Result};
use crate::nn::{self, join, Linear, Parameters};
use crate::par;

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(topology: &GraphTopology) -> Result<Array2<f64>> {
    topology.validate()?;
    let v = topology.num_joints;
    let mut a = Array2::<f64>::eye(v);
    for &(i, j) in &topology.edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(j) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::config("topology.edges", format!("joint {j} is isolated")));
    }
    for i in 0..v {
        for j in 0..v {
            a[[i, j]] /= (deg[i] * deg[j]).sqrt();
        }
    }
    Ok(a)
}

/// Row-sparse copy of a symmetric normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseAdjacency {
    pub fn from_dense(a: &Array2<f64>) -> Self {
        let rows = a
            .rows()
            .into_iter()
            .map(|r| r.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, w)| (j, *w)).collect())
            .collect();
        Self { rows }
    }

    pub fn num_joints(&self) -> usize {
        self.rows.len()
    }

    /// `out[g*V + v] = sum_u A[v,u] * inp[g*V + u]` over every run of `V`.
    fn apply(&self, inp: &[f64], out: &mut [f64]) {
        let v = self.rows.len();
        for (src, dst) in inp.chunks_exact(v).zip(out.chunks_exact_mut(v)) {
            for (d, row) in dst.iter_mut().zip(&self.rows) {
                *d = row.iter().map(|&(u, w)| w * src[u]).sum();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
    pub temporal_kernel: usize,
    pub strides: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub init_seed: u64,
    /// Standardize each pooled feature vector to zero mean and an RMS of
    /// `feature_gain`.
    #[serde(default = "enabled")]
    pub feature_norm: bool,
    #[serde(default = "default_gain")]
    pub feature_gain: f64,
}

fn enabled() -> bool {
    true
}

fn default_gain() -> f64 {
    0.5
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128],
            temporal_kernel: 9,
            strides: vec![1, 2, 2],
            feature_dim: 128,
            num_classes: 6,
            init_seed: 0,
            feature_norm: true,
            feature_gain: default_gain(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("encoder.widths", "need at least one positive width"));
        }
        if self.strides.len() != self.widths.len() || self.strides.contains(&0) {
            return Err(Error::config(
                "encoder.strides",
                "need one positive stride per block",
            ));
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::config("encoder.temporal_kernel", "must be odd"));
        }
        if self.feature_dim != *self.widths.last().unwrap() {
            return Err(Error::config(
                "encoder.feature_dim",
                format!("must equal the final block width {}", self.widths.last().unwrap()),
            ));
        }
        if self.num_classes == 0 {
            return Err(Error::config("encoder.num_classes", "must be positive"));
        }
        if !(self.feature_gain > 0.0 && self.feature_gain.is_finite()) {
            return Err(Error::config("encoder.feature_gain", "must be positive"));
        }
        Ok(())
    }
}

/// One spatial-GCN + temporal-conv block with a residual path.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnBlock {
    /// `[out, in]` channel mixing applied before joint aggregation.
    pub spatial: Array2<f64>,
    pub spatial_bias: Array1<f64>,
    /// `[out, kernel]` depthwise temporal filter.
    pub temporal: Array2<f64>,
    pub temporal_bias: Array1<f64>,
    /// `None` when the block keeps width and frame rate (identity shortcut).
    pub residual: Option<Linear>,
    pub stride: usize,
}

struct BlockCache {
    input: Array2<f64>,
    frames_in: usize,
    pre_spatial: Array2<f64>,
    spatial_act: Array2<f64>,
    pre_out: Array2<f64>,
    strided_input: Option<Array2<f64>>,
}

impl GcnBlock {
    fn init(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let residual = (c_in != c_out || stride != 1).then(|| Linear::init(c_in, c_out, 1.0, rng));
        Self {
            spatial: nn::normal_matrix(c_out, c_in, (2.0 / c_in as f64).sqrt(), rng),
            spatial_bias: Array1::zeros(c_out),
            temporal: nn::normal_matrix(c_out, kernel, (1.0 / kernel as f64).sqrt(), rng),
            temporal_bias: Array1::zeros(c_out),
            residual,
            stride,
        }
    }

    fn out_frames(&self, frames_in: usize) -> usize {
        (frames_in - 1) / self.stride + 1
    }

    fn forward(&self, x: &Array2<f64>, frames_in: usize, adj: &SparseAdjacency, keep: bool) -> (Array2<f64>, Option<BlockCache>) {
        let c_out = self.spatial.nrows();
        let l_in = x.ncols();
        let group = l_in / frames_in;
        let frames_out = self.out_frames(frames_in);
        let l_out = frames_out * group;
        let kernel = self.temporal.ncols();
        let pad = kernel / 2;

        let mixed = self.spatial.dot(x);
        let mut pre_spatial = Array2::zeros((c_out, l_in));
        for c in 0..c_out {
            let src = mixed.row(c);
            let mut dst = pre_spatial.row_mut(c);
            adj.apply(src.as_slice().unwrap(), dst.as_slice_mut().unwrap());
            let b = self.spatial_bias[c];
            dst.mapv_inplace(|v| v + b);
        }
        let spatial_act = pre_spatial.mapv(|v| v.max(0.0));

        let mut pre_out = Array2::zeros((c_out, l_out));
        for c in 0..c_out {
            let z = spatial_act.row(c);
            let z = z.as_slice().unwrap();
            let mut o = pre_out.row_mut(c);
            let o = o.as_slice_mut().unwrap();
            o.fill(self.temporal_bias[c]);
            for t in 0..frames_out {
                let dst = &mut o[t * group..(t + 1) * group];
                for k in 0..kernel {
                    let src_t = (t * self.stride + k) as isize - pad as isize;
                    if src_t < 0 || src_t >= frames_in as isize {
                        continue;
                    }
                    let w = self.temporal[[c, k]];
                    let src = &z[src_t as usize * group..(src_t as usize + 1) * group];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
                }
            }
        }

        let strided_input = self.residual.as_ref().map(|_| strided(x, frames_in, self.stride));
        match (&self.residual, &strided_input) {
            (Some(r), Some(xs)) => {
                let mut res = r.weight.dot(xs);
                for (mut row, b) in res.rows_mut().into_iter().zip(r.bias.iter()) {
                    row.mapv_inplace(|v| v + b);
                }
                pre_out += &res;
            }
            _ => pre_out += x,
        }
        let out = pre_out.mapv(|v| v.max(0.0));
        let cache = keep.then(|| BlockCache {
            input: x.clone(),
            frames_in,
            pre_spatial,
            spatial_act,
            pre_out,
            strided_input,
        });
        (out, cache)
    }

    fn backward(&self, cache: &BlockCache, dout: &Array2<f64>, adj: &SparseAdjacency, grad: &mut GcnBlock) -> Array2<f64> {
        let frames_in = cache.frames_in;
        let l_in = cache.input.ncols();
        let group = l_in / frames_in;
        let frames_out = self.out_frames(frames_in);
        let kernel = self.temporal.ncols();
        let pad = kernel / 2;
        let c_out = self.spatial.nrows();

        let mut d_pre = dout.clone();
        d_pre.zip_mut_with(&cache.pre_out, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });

        let mut d_act = Array2::<f64>::zeros((c_out, l_in));
        for c in 0..c_out {
            let dp = d_pre.row(c);
            let dp = dp.as_slice().unwrap();
            grad.temporal_bias[c] += dp.iter().sum::<f64>();
            let z = cache.spatial_act.row(c);
            let z = z.as_slice().unwrap();
            let mut dz = d_act.row_mut(c);
            let dz = dz.as_slice_mut().unwrap();
            for t in 0..frames_out {
                let g = &dp[t * group..(t + 1) * group];
                for k in 0..kernel {
                    let src_t = (t * self.stride + k) as isize - pad as isize;
                    if src_t < 0 || src_t >= frames_in as isize {
                        continue;
                    }
                    let range = src_t as usize * group..(src_t as usize + 1) * group;
                    grad.temporal[[c, k]] += g.iter().zip(&z[range.clone()]).map(|(a, b)| a * b).sum::<f64>();
                    let w = self.temporal[[c, k]];
                    dz[range].iter_mut().zip(g).for_each(|(d, s)| *d += w * s);
                }
            }
        }

        d_act.zip_mut_with(&cache.pre_spatial, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        grad.spatial_bias += &d_act.sum_axis(Axis(1));
        let mut d_mixed = Array2::<f64>::zeros((c_out, l_in));
        for c in 0..c_out {
            // the normalized adjacency is symmetric, so its transpose is itself
            adj.apply(d_act.row(c).as_slice().unwrap(), d_mixed.row_mut(c).as_slice_mut().unwrap());
        }
        grad.spatial += &d_mixed.dot(&cache.input.t());
        let mut dx = self.spatial.t().dot(&d_mixed);

        match (&self.residual, &cache.strided_input, &mut grad.residual) {
            (Some(r), Some(xs), Some(gr)) => {
                gr.weight += &d_pre.dot(&xs.t());
                gr.bias += &d_pre.sum_axis(Axis(1));
                let dxs = r.weight.t().dot(&d_pre);
                for t in 0..frames_out {
                    let src = t * self.stride;
                    let mut dst = dx.slice_mut(s![.., src * group..(src + 1) * group]);
                    dst += &dxs.slice(s![.., t * group..(t + 1) * group]);
                }
            }
            _ => dx += &d_pre,
        }
        dx
    }
}

fn strided(x: &Array2<f64>, frames: usize, stride: usize) -> Array2<f64> {
    let group = x.ncols() / frames;
    let frames_out = (frames - 1) / stride + 1;
    let mut out = Array2::zeros((x.nrows(), frames_out * group));
    for t in 0..frames_out {
        let src = t * stride;
        out.slice_mut(s![.., t * group..(t + 1) * group])
            .assign(&x.slice(s![.., src * group..(src + 1) * group]));
    }
    out
}

impl Parameters for GcnBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&join(prefix, "spatial"), self.spatial.view().into_dyn());
        f(&join(prefix, "spatial_bias"), self.spatial_bias.view().into_dyn());
        f(&join(prefix, "temporal"), self.temporal.view().into_dyn());
        f(&join(prefix, "temporal_bias"), self.temporal_bias.view().into_dyn());
        if let Some(r) = &self.residual {
            r.visit(&join(prefix, "residual"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "spatial"), self.spatial.view_mut().into_dyn());
        f(&join(prefix, "spatial_bias"), self.spatial_bias.view_mut().into_dyn());
        f(&join(prefix, "temporal"), self.temporal.view_mut().into_dyn());
        f(&join(prefix, "temporal_bias"), self.temporal_bias.view_mut().into_dyn());
        if let Some(r) = &mut self.residual {
            r.visit_mut(&join(prefix, "residual"), f);
        }
    }
}

/// The backbone: input scaling, a stack of [`GcnBlock`]s, and global average
/// pooling over frames, actors and joints.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    pub blocks: Vec<GcnBlock>,
    /// Per-channel divisor applied to raw coordinates. Not trained.
    pub input_scale: Array1<f64>,
    pub adjacency: SparseAdjacency,
    pub in_channels: usize,
    pub feature_norm: bool,
    pub feature_gain: f64,
}

/// Variance floor of the feature standardization.
pub const FEATURE_NORM_EPS: f64 = 1e-5;

/// Cached activations for one sample's backward pass.
pub struct EncoderTrace {
    blocks: Vec<BlockCache>,
    final_len: usize,
    /// Standardized feature and `1/sigma`, when normalization is on.
    norm: Option<(Array1<f64>, f64)>,
}

impl GcnEncoder {
    pub fn new(cfg: &EncoderConfig, topology: &GraphTopology, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let adjacency = SparseAdjacency::from_dense(&normalize_adjacency(topology)?);
        let mut c_in = 3;
        let mut blocks = Vec::with_capacity(cfg.widths.len());
        for (&w, &s) in cfg.widths.iter().zip(&cfg.strides) {
            blocks.push(GcnBlock::init(c_in, w, cfg.temporal_kernel, s, rng));
            c_in = w;
        }
        Ok(Self {
            blocks,
            input_scale: Array1::ones(3),
            adjacency,
            in_channels: 3,
            feature_norm: cfg.feature_norm,
            feature_gain: cfg.feature_gain,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.blocks.last().map(|b| b.spatial.nrows()).unwrap_or(0)
    }

    /// Set the per-channel input scale to the RMS of each coordinate channel.
    pub fn fit_input_scale(&mut self, ds: &SkeletonDataset) {
        let shape = ds.shape;
        let mut acc = vec![0.0f64; shape.channels];
        let mut n = 0usize;
        for s in &ds.sequences {
            for (c, a) in acc.iter_mut().enumerate() {
                let start = shape.offset(c, 0, 0, 0);
                let end = start + shape.frames * shape.joints * shape.actors;
                *a += s.data[start..end].iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
            }
            n += shape.frames * shape.joints * shape.actors;
        }
        self.input_scale = Array1::from_iter(acc.into_iter().map(|a| {
            let rms = if n > 0 { (a / n as f64).sqrt() } else { 1.0 };
            if rms > 1e-8 {
                rms
            } else {
                1.0
            }
        }));
    }

    pub fn check_shape(&self, shape: SequenceShape) -> Result<()> {
        if shape.channels != self.in_channels {
            return Err(Error::shape("channels", self.in_channels, shape.channels));
        }
        if shape.joints != self.adjacency.num_joints() {
            return Err(Error::shape("joints", self.adjacency.num_joints(), shape.joints));
        }
        if shape.frames == 0 {
            return Err(Error::shape("frames", 1, 0));
        }
        if shape.actors == 0 {
            return Err(Error::shape("actors", 1, 0));
        }
        Ok(())
    }

    /// Rearrange `[C, T, V, M]` into `[C, T*M*V]` and apply the input scale.
    fn layout(&self, seq: &SkeletonSequence, shape: SequenceShape) -> Result<Array2<f64>> {
        if seq.data.len() != shape.len() {
            return Err(Error::shape("sequence", shape.len(), seq.data.len()));
        }
        let (t_n, v_n, m_n) = (shape.frames, shape.joints, shape.actors);
        let mut x = Array2::zeros((shape.channels, t_n * m_n * v_n));
        for c in 0..shape.channels {
            let inv = 1.0 / self.input_scale[c];
            for t in 0..t_n {
                for v in 0..v_n {
                    for m in 0..m_n {
                        x[[c, (t * m_n + m) * v_n + v]] = seq.data[shape.offset(c, t, v, m)] as f64 * inv;
                    }
                }
            }
        }
        Ok(x)
    }

    fn run(&self, seq: &SkeletonSequence, shape: SequenceShape, keep: bool) -> Result<(Array1<f64>, Option<EncoderTrace>)> {
        let mut h = self.layout(seq, shape)?;
        let mut frames = shape.frames;
        let mut caches = Vec::new();
        for block in &self.blocks {
            let (out, cache) = block.forward(&h, frames, &self.adjacency, keep);
            frames = block.out_frames(frames);
            if let Some(c) = cache {
                caches.push(c);
            }
            h = out;
        }
        let final_len = h.ncols();
        let mut feature = h.mean_axis(Axis(1)).expect("nonempty activation");
        let mut norm = None;
        if self.feature_norm {
            let mean = feature.mean().unwrap_or(0.0);
            let var = feature.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / feature.len() as f64;
            let inv_std = 1.0 / (var + FEATURE_NORM_EPS).sqrt();
            feature.mapv_inplace(|x| (x - mean) * inv_std);
            norm = Some((feature.clone(), inv_std));
            feature *= self.feature_gain;
        }
        Ok((feature, keep.then_some(EncoderTrace { blocks: caches, final_len, norm })))
    }

    pub fn encode_one(&self, seq: &SkeletonSequence, shape: SequenceShape) -> Result<Array1<f64>> {
        Ok(self.run(seq, shape, false)?.0)
    }

    pub fn encode_one_traced(&self, seq: &SkeletonSequence, shape: SequenceShape) -> Result<(Array1<f64>, EncoderTrace)> {
        let (f, t) = self.run(seq, shape, true)?;
        Ok((f, t.expect("trace requested")))
    }

    /// Accumulate parameter gradients for one sample given `dL/dfeature`.
    pub fn backward_one(&self, trace: &EncoderTrace, dfeature: &[f64], grad: &mut GcnEncoder) {
        let d = self.feature_dim();
        let inv = 1.0 / trace.final_len as f64;
        let dpool: Vec<f64> = match &trace.norm {
            None => dfeature.to_vec(),
            Some((y, inv_std)) => {
                let n = d as f64;
                let g: Vec<f64> = dfeature.iter().map(|x| x * self.feature_gain).collect();
                let mean_g = g.iter().sum::<f64>() / n;
                let mean_gy = g.iter().zip(y).map(|(g, y)| g * y).sum::<f64>() / n;
                g.iter().zip(y).map(|(g, y)| inv_std * (g - mean_g - y * mean_gy)).collect()
            }
        };
        let mut dh = Array2::zeros((d, trace.final_len));
        for (mut row, g) in dh.rows_mut().into_iter().zip(&dpool) {
            row.fill(g * inv);
        }
        for (i, block) in self.blocks.iter().enumerate().rev() {
            dh = block.backward(&trace.blocks[i], &dh, &self.adjacency, &mut grad.blocks[i]);
        }
    }

    /// Features `[B, D]` for a list of sequences (parallel over samples).
    pub fn encode(&self, seqs: &[&SkeletonSequence], shape: SequenceShape) -> Result<Array2<f64>> {
        self.check_shape(shape)?;
        let rows = par::map(seqs, |s| self.encode_one(s, shape));
        stack_rows(rows, self.feature_dim())
    }

    pub fn encode_traced(&self, seqs: &[&SkeletonSequence], shape: SequenceShape) -> Result<(Array2<f64>, Vec<EncoderTrace>)> {
        self.check_shape(shape)?;
        let out = par::map(seqs, |s| self.encode_one_traced(s, shape));
        let mut feats = Vec::with_capacity(out.len());
        let mut traces = Vec::with_capacity(out.len());
        for r in out {
            let (f, t) = r?;
            feats.push(Ok(f));
            traces.push(t);
        }
        Ok((stack_rows(feats, self.feature_dim())?, traces))
    }

    /// Sum of per-sample gradients, reduced in fixed-size chunks.
    pub fn backward(&self, traces: &[EncoderTrace], dfeatures: &Array2<f64>) -> GcnEncoder {
        let zero = || {
            let mut g = self.clone();
            g.fill(0.0);
            g
        };
        par::chunked_fold(
            traces,
            GRAD_CHUNK,
            zero,
            |g, i, t| self.backward_one(t, dfeatures.row(i).as_slice().unwrap(), g),
            |a, b| a.add_assign_from(&b),
        )
        .unwrap_or_else(zero)
    }
}

/// Samples per gradient partial sum; fixed so results don't depend on the
/// thread count.
const GRAD_CHUNK: usize = 4;

fn stack_rows(rows: Vec<Result<Array1<f64>>>, d: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&r?);
    }
    Ok(out)
}

impl Parameters for GcnEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
    }
}

/// Encoder plus classification head (`D -> classes`) and projection head
/// (`D -> N`, row-normalized) into the text-embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonModel {
    pub encoder: GcnEncoder,
    pub classifier: Linear,
    pub projection: Linear,
}

impl SkeletonModel {
    pub fn new(cfg: &EncoderConfig, topology: &GraphTopology, text_dim: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let encoder = GcnEncoder::new(cfg, topology, &mut rng)?;
        let d = cfg.feature_dim;
        Ok(Self {
            encoder,
            classifier: Linear::init(d, cfg.num_classes, std::f64::consts::FRAC_1_SQRT_2, &mut rng),
            projection: Linear::init(d, text_dim, 1.0, &mut rng),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn encode(&self, seqs: &[&SkeletonSequence], shape: SequenceShape) -> Result<Array2<f64>> {
        self.encoder.encode(seqs, shape)
    }

    pub fn classify(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.classifier.check_input(features, "feature")?;
        Ok(self.classifier.forward(features))
    }

    /// Returns the unit-norm projections and the pre-normalization norms.
    pub fn project(&self, features: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.projection.check_input(features, "feature")?;
        nn::normalize_rows(&self.projection.forward(features))
    }
}

impl Parameters for SkeletonModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
        self.projection.visit(&join(prefix, "projection"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
        self.projection.visit_mut(&join(prefix, "projection"), f);
    }
}
