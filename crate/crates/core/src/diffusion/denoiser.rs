use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::time_embedding;
use crate::error::{Error, Result};
use crate::nn::{join, silu, silu_grad, Linear, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub feature_dim: usize,
    pub time_embed_dim: usize,
    pub text_embed_dim: usize,
    /// Encoder-side widths, outermost first; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub init_seed: u64,
    /// Per-step weight of `x_t` added to the prediction; empty means no
    /// skip.
    #[serde(default)]
    pub input_skip: Vec<f64>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            feature_dim: 128,
            time_embed_dim: 32,
            text_embed_dim: 64,
            hidden: vec![128, 64],
            init_seed: 1,
            input_skip: Vec::new(),
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::config("denoiser.feature_dim", "must be positive"));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::config("denoiser.time_embed_dim", "must be a positive even number"));
        }
        if self.text_embed_dim == 0 {
            return Err(Error::config("denoiser.text_embed_dim", "must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("denoiser.hidden", "need at least one positive width"));
        }
        if self.input_skip.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("denoiser.input_skip", "weights must be finite"));
        }
        Ok(())
    }
}

/// Hidden layer: `silu(W h + b + U_t E_t + U_f E_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondLayer {
    pub main: Linear,
    pub time: Linear,
    pub text: Linear,
}

impl CondLayer {
    fn init(input: usize, output: usize, cfg: &DenoiserConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut time = Linear::init(cfg.time_embed_dim, output, 0.5, rng);
        let mut text = Linear::init(cfg.text_embed_dim, output, 0.5, rng);
        // the main bias already covers these
        time.bias.fill(0.0);
        text.bias.fill(0.0);
        Self {
            main: Linear::init(input, output, 1.0, rng),
            time,
            text,
        }
    }

    fn pre(&self, h: &Array2<f64>, e_t: &Array2<f64>, e_f: &Array2<f64>) -> Array2<f64> {
        self.main.forward(h) + self.time.forward(e_t) + self.text.forward(e_f)
    }
}

impl Parameters for CondLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.main.visit(&join(prefix, "main"), f);
        self.time.visit(&join(prefix, "time"), f);
        self.text.visit(&join(prefix, "text"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.main.visit_mut(&join(prefix, "main"), f);
        self.time.visit_mut(&join(prefix, "time"), f);
        self.text.visit_mut(&join(prefix, "text"), f);
    }
}

/// Skip-connected bottleneck MLP predicting `x0` from `(x_t, E_t, E_f)`.
///
/// Down path `D -> h0 -> ... -> h_last`, up path back to `h0` with the
/// matching down activation added after each up layer, then a linear read-out
/// to `D`, plus a fixed per-step `input_skip[t] * x_t` when configured.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub down: Vec<CondLayer>,
    pub up: Vec<CondLayer>,
    pub out: Linear,
    pub time_embed_dim: usize,
    pub input_skip: Vec<f64>,
}

pub struct DenoiserTrace {
    e_t: Array2<f64>,
    e_f: Array2<f64>,
    down_in: Vec<Array2<f64>>,
    down_pre: Vec<Array2<f64>>,
    up_in: Vec<Array2<f64>>,
    up_pre: Vec<Array2<f64>>,
    last: Array2<f64>,
    steps: Vec<usize>,
}

impl DenoiserNet {
    pub fn new(cfg: &DenoiserConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut down = Vec::new();
        let mut width = cfg.feature_dim;
        for &h in &cfg.hidden {
            down.push(CondLayer::init(width, h, cfg, &mut rng));
            width = h;
        }
        let mut up = Vec::new();
        for &h in cfg.hidden.iter().rev().skip(1) {
            up.push(CondLayer::init(width, h, cfg, &mut rng));
            width = h;
        }
        let out = Linear::init(width, cfg.feature_dim, 0.5, &mut rng);
        Ok(Self {
            down,
            up,
            out,
            time_embed_dim: cfg.time_embed_dim,
            input_skip: cfg.input_skip.clone(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.out.output_dim()
    }

    pub fn text_dim(&self) -> usize {
        self.down[0].text.input_dim()
    }

    fn check(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<()> {
        if x_t.ncols() != self.feature_dim() {
            return Err(Error::shape("feature", self.feature_dim(), x_t.ncols()));
        }
        if e_f.ncols() != self.text_dim() {
            return Err(Error::shape("text", self.text_dim(), e_f.ncols()));
        }
        if e_f.nrows() != x_t.nrows() {
            return Err(Error::shape("batch", x_t.nrows(), e_f.nrows()));
        }
        if t.len() != x_t.nrows() {
            return Err(Error::shape("steps", x_t.nrows(), t.len()));
        }
        if !self.input_skip.is_empty() {
            if let Some(&bad) = t.iter().find(|&&ti| ti >= self.input_skip.len()) {
                return Err(Error::Index(format!("step {bad} outside the skip table of {} steps", self.input_skip.len() - 1)));
            }
        }
        Ok(())
    }

    fn time_rows(&self, t: &[usize]) -> Result<Array2<f64>> {
        let mut e = Array2::zeros((t.len(), self.time_embed_dim));
        for (i, &ti) in t.iter().enumerate() {
            let v = time_embedding(ti, self.time_embed_dim)?;
            e.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(e)
    }

    pub fn forward_traced(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<(Array2<f64>, DenoiserTrace)> {
        self.check(x_t, t, e_f)?;
        let e_t = self.time_rows(t)?;
        let mut h = x_t.clone();
        let (mut down_in, mut down_pre, mut acts) = (Vec::new(), Vec::new(), Vec::new());
        for layer in &self.down {
            let pre = layer.pre(&h, &e_t, e_f);
            let a = pre.mapv(silu);
            down_in.push(std::mem::replace(&mut h, a.clone()));
            down_pre.push(pre);
            acts.push(a);
        }
        let k = self.down.len();
        let (mut up_in, mut up_pre) = (Vec::new(), Vec::new());
        for (j, layer) in self.up.iter().enumerate() {
            let pre = layer.pre(&h, &e_t, e_f);
            let a = pre.mapv(silu) + &acts[k - 2 - j];
            up_in.push(std::mem::replace(&mut h, a));
            up_pre.push(pre);
        }
        let mut y = self.out.forward(&h);
        if !self.input_skip.is_empty() {
            for ((mut row, x), &ti) in y.rows_mut().into_iter().zip(x_t.rows()).zip(t) {
                row.scaled_add(self.input_skip[ti], &x);
            }
        }
        Ok((
            y,
            DenoiserTrace {
                e_t,
                e_f: e_f.clone(),
                down_in,
                down_pre,
                up_in,
                up_pre,
                last: h,
                steps: t.to_vec(),
            },
        ))
    }

    /// Accumulates parameter gradients and returns `dL/dx_t`.
    pub fn backward(&self, trace: &DenoiserTrace, dy: &Array2<f64>, grad: &mut DenoiserNet) -> Array2<f64> {
        let k = self.down.len();
        let mut dh = self.out.backward(&trace.last, dy, &mut grad.out);
        let mut dskip: Vec<Option<Array2<f64>>> = vec![None; k];
        for j in (0..self.up.len()).rev() {
            let s = &mut dskip[k - 2 - j];
            *s = Some(match s.take() {
                Some(acc) => acc + &dh,
                None => dh.clone(),
            });
            dh = cond_backward(&self.up[j], &mut grad.up[j], &trace.up_in[j], &trace.up_pre[j], &dh, trace);
        }
        for l in (0..k).rev() {
            if let Some(s) = dskip[l].take() {
                dh += &s;
            }
            dh = cond_backward(&self.down[l], &mut grad.down[l], &trace.down_in[l], &trace.down_pre[l], &dh, trace);
        }
        if !self.input_skip.is_empty() {
            for (i, &ti) in trace.steps.iter().enumerate() {
                dh.row_mut(i).scaled_add(self.input_skip[ti], &dy.row(i));
            }
        }
        dh
    }
}

fn cond_backward(
    layer: &CondLayer,
    grad: &mut CondLayer,
    input: &Array2<f64>,
    pre: &Array2<f64>,
    dact: &Array2<f64>,
    trace: &DenoiserTrace,
) -> Array2<f64> {
    let mut dpre = dact.clone();
    dpre.zip_mut_with(pre, |d, &p| *d *= silu_grad(p));
    layer.time.backward(&trace.e_t, &dpre, &mut grad.time);
    layer.text.backward(&trace.e_f, &dpre, &mut grad.text);
    layer.main.backward(input, &dpre, &mut grad.main)
}

impl Parameters for DenoiserNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (i, l) in self.down.iter().enumerate() {
            l.visit(&join(prefix, &format!("down{i}")), f);
        }
        for (i, l) in self.up.iter().enumerate() {
            l.visit(&join(prefix, &format!("up{i}")), f);
        }
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (i, l) in self.down.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("down{i}")), f);
        }
        for (i, l) in self.up.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("up{i}")), f);
        }
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

/// Anything that can predict `x0` from a noisy batch.
pub trait Denoise {
    fn predict(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<Array2<f64>>;
}

impl Denoise for DenoiserNet {
    fn predict(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_traced(x_t, t, e_f)?.0)
    }
}

/// A trainable network or the parameter-free identity `f(x_t) = x_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Denoiser {
    Network(DenoiserNet),
    Identity,
}

#[allow(clippy::large_enum_variant)]
pub enum Trace {
    Network(DenoiserTrace),
    Identity,
}

impl Denoiser {
    pub fn forward_traced(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<(Array2<f64>, Trace)> {
        match self {
            Denoiser::Network(n) => {
                let (y, tr) = n.forward_traced(x_t, t, e_f)?;
                Ok((y, Trace::Network(tr)))
            }
            Denoiser::Identity => Ok((x_t.clone(), Trace::Identity)),
        }
    }

    pub fn backward(&self, trace: &Trace, dy: &Array2<f64>, grad: &mut Denoiser) -> Array2<f64> {
        match (self, trace, grad) {
            (Denoiser::Network(n), Trace::Network(tr), Denoiser::Network(g)) => n.backward(tr, dy, g),
            _ => dy.clone(),
        }
    }
}

impl Denoise for Denoiser {
    fn predict(&self, x_t: &Array2<f64>, t: &[usize], e_f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_traced(x_t, t, e_f)?.0)
    }
}

impl Parameters for Denoiser {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        if let Denoiser::Network(n) = self {
            n.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        if let Denoiser::Network(n) = self {
            n.visit_mut(prefix, f);
        }
    }
}
