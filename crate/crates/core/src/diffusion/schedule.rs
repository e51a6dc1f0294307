use ndarray::Array2;

use crate::error::{Error, Result};

/// Precomputed forward-process tables for steps `t = 1..=T`.
///
/// `alpha_bar(0) = 1` by convention, which makes the posterior variance at
/// `t = 1` exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
}

/// Linearly spaced betas from `beta_start` to `beta_end` over `steps`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::config("diffusion.steps", "must be at least 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::config(
            "diffusion.beta",
            format!("need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"),
        ));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// Beta bounds rescaled from a 1000-step reference schedule to `steps`,
/// capped below one.
pub fn scaled_beta_bounds(steps: usize, beta_start: f64, beta_end: f64) -> (f64, f64) {
    let scale = 1000.0 / steps.max(1) as f64;
    let end = (beta_end * scale).min(0.999);
    ((beta_start * scale).min(end), end)
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("diffusion.steps", "must be at least 1"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::config("diffusion.beta", format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for b in &betas {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        if *alpha_bar.last().unwrap() <= 0.0 {
            return Err(Error::config("diffusion.beta", "cumulative signal underflows to zero"));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("diffusion.beta", "cumulative signal is not strictly decreasing"));
        }
        let mut posterior_var = vec![0.0; betas.len() + 1];
        for t in 1..=betas.len() {
            posterior_var[t] = betas[t - 1] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
        }
        Ok(Self {
            betas,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index(format!("diffusion step {t} outside [1, {}]", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// Defined for `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Per-step weight `sqrt(abar) s / (abar s + 1 - abar)` of the linear
    /// least-squares estimate of `x0` from `x_t`, for data of per-coordinate
    /// variance `s`; index 0 is the clean input.
    pub fn skip_weights(&self, data_var: f64) -> Vec<f64> {
        (0..=self.steps())
            .map(|t| {
                let ab = self.alpha_bar(t);
                ab.sqrt() * data_var / (ab * data_var + 1.0 - ab)
            })
            .collect()
    }

    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_var[t]
    }

    /// Coefficients `(c_x0, c_xt)` of the forward-process posterior mean
    /// `c_x0 * x0 + c_xt * x_t`.
    pub fn posterior_coefficients(&self, t: usize) -> Result<(f64, f64)> {
        self.check_step(t)?;
        if t == 1 {
            // alpha_bar(0) = 1: the mean is x0 itself
            return Ok((1.0, 0.0));
        }
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];
        let beta = self.beta(t);
        Ok((
            ab_prev.sqrt() * beta / (1.0 - ab),
            self.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab),
        ))
    }

    /// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
    pub fn q_sample(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if eps.len() != x0.len() {
            return Err(Error::shape("eps", x0.len(), eps.len()));
        }
        let (a, b) = (self.alpha_bar[t].sqrt(), (1.0 - self.alpha_bar[t]).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Row-wise [`q_sample`](Self::q_sample) with a step per row.
    pub fn q_sample_batch(&self, x0: &Array2<f64>, t: &[usize], eps: &Array2<f64>) -> Result<Array2<f64>> {
        if eps.dim() != x0.dim() {
            return Err(Error::shape("eps", x0.ncols(), eps.ncols()));
        }
        if t.len() != x0.nrows() {
            return Err(Error::shape("steps", x0.nrows(), t.len()));
        }
        let mut out = Array2::zeros(x0.dim());
        for (i, &ti) in t.iter().enumerate() {
            self.check_step(ti)?;
            let (a, b) = (self.alpha_bar[ti].sqrt(), (1.0 - self.alpha_bar[ti]).sqrt());
            let mut row = out.row_mut(i);
            for ((o, x), e) in row.iter_mut().zip(x0.row(i)).zip(eps.row(i)) {
                *o = a * x + b * e;
            }
        }
        Ok(out)
    }

    /// One reverse step: posterior mean plus `sqrt(posterior_var) * noise`.
    pub fn posterior_step(&self, x_t: &[f64], x0_hat: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let (c0, ct) = self.posterior_coefficients(t)?;
        if x0_hat.len() != x_t.len() {
            return Err(Error::shape("x0_hat", x_t.len(), x0_hat.len()));
        }
        let sigma = self.posterior_var[t].sqrt();
        if sigma > 0.0 && noise.len() != x_t.len() {
            return Err(Error::shape("noise", x_t.len(), noise.len()));
        }
        Ok(x_t
            .iter()
            .zip(x0_hat)
            .enumerate()
            .map(|(i, (xt, x0))| {
                let mean = c0 * x0 + ct * xt;
                if sigma > 0.0 {
                    mean + sigma * noise[i]
                } else {
                    mean
                }
            })
            .collect())
    }
}

/// Sinusoidal embedding of step `t`: `sin(t w_k)` in the first half,
/// `cos(t w_k)` in the second, `w_k = 10000^(-k / (dim/2))`.
pub fn time_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config("diffusion.time_embed_dim", format!("{dim} is not a positive even number")));
    }
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let w = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let a = t as f64 * w;
        out[k] = a.sin();
        out[half + k] = a.cos();
    }
    Ok(out)
}
