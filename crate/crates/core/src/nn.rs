//! Shared layer primitives and named-parameter plumbing.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visits every trainable tensor under a stable, dotted name.
///
/// Gradient containers are the same type as the parameters they describe, so
/// `visit` on params and grads yields tensors in matching order.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, t| out.extend(t.iter().copied()));
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut("", &mut |_, mut t| {
            for x in t.iter_mut() {
                *x = flat[off];
                off += 1;
            }
        });
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, mut t| t.fill(value));
    }

    fn add_assign_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.to_flat();
        let mut off = 0;
        self.visit_mut("", &mut |_, mut t| {
            for x in t.iter_mut() {
                *x += flat[off];
                off += 1;
            }
        });
    }

    fn scale(&mut self, s: f64) {
        self.visit_mut("", &mut |_, mut t| t.mapv_inplace(|x| x * s));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }

    fn to_named(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |name, t| {
            out.push(NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.iter().copied().collect(),
            })
        });
        out
    }

    /// Overwrite from named tensors; every visited name must be present with
    /// a matching shape.
    fn load_named(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        let mut err = None;
        self.visit_mut(prefix, &mut |name, mut t| {
            if err.is_some() {
                return;
            }
            match tensors.iter().find(|n| n.name == name) {
                None => err = Some(Error::Checkpoint(format!("missing tensor `{name}`"))),
                Some(n) if n.shape != t.shape() => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        n.shape,
                        t.shape()
                    )))
                }
                Some(n) => t.iter_mut().zip(&n.data).for_each(|(x, v)| *x = *v),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Affine map `y = x W^T + b` over row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: normal_matrix(output, input, gain * (2.0 / input.max(1) as f64).sqrt(), rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    pub fn check_input(&self, x: &Array2<f64>, axis: &str) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(axis, self.input_dim(), x.ncols()));
        }
        Ok(())
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&join(prefix, "weight"), self.weight.view().into_dyn());
        f(&join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&join(prefix, "weight"), self.weight.view_mut().into_dyn());
        f(&join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}

pub fn normal_matrix<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Row-wise L2 normalization; errors on a zero row.
pub fn normalize_rows(x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::Projection { row });
    }
    let mut y = x.clone();
    for (mut r, n) in y.rows_mut().into_iter().zip(norms.iter()) {
        r.mapv_inplace(|v| v / n);
    }
    Ok((y, norms))
}

/// Backward of [`normalize_rows`]: `dx = (dy - y (y . dy)) / |x|`.
pub fn normalize_rows_backward(y: &Array2<f64>, norms: &Array1<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for ((mut d, yr), n) in dx.rows_mut().into_iter().zip(y.rows()).zip(norms.iter()) {
        let proj = yr.dot(&d);
        d.zip_mut_with(&yr, |dv, &yv| *dv = (*dv - yv * proj) / n);
    }
    dx
}
