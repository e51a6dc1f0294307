//! Losses and their gradients.
//!
//! Every `*_grad` function returns the loss value alongside the gradient with
//! respect to its tensor inputs.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.075 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// How contrastive targets weight multiple positives in a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Each positive gets `1 / #positives`, so rows are distributions.
    #[default]
    Normalized,
    /// Each positive gets 1.
    MultiHot,
}

impl std::str::FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "multi_hot" => Ok(Self::MultiHot),
            _ => Err(Error::config("contrastive_targets", format!("unknown mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for TargetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Normalized => "normalized",
            Self::MultiHot => "multi_hot",
        })
    }
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>, axis: &str) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!("{axis} rows"), a.nrows(), b.nrows()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!("{axis} cols"), a.ncols(), b.ncols()));
    }
    Ok(())
}

/// Mean over rows of `0.5 * |x0_hat - x0|^2`.
pub fn recon_loss(x0_hat: &Array2<f64>, x0: &Array2<f64>) -> Result<f64> {
    Ok(recon_loss_grad(x0_hat, x0)?.0)
}

/// Gradient is with respect to `x0_hat` only.
pub fn recon_loss_grad(x0_hat: &Array2<f64>, x0: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    same_shape(x0_hat, x0, "reconstruction")?;
    let b = x0.nrows().max(1) as f64;
    let diff = x0_hat - x0;
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / b;
    Ok((loss, diff / b))
}

pub fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    log_softmax_rows(z).mapv(f64::exp)
}

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config("temperature", format!("must be positive, got {tau}")));
    }
    Ok(())
}

/// `S L^T / tau`; rows of both inputs are assumed unit norm, so entries are
/// cosines over the temperature.
pub fn similarity_logits(s: &Array2<f64>, l: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    check_temperature(tau)?;
    same_shape(s, l, "embedding")?;
    Ok(s.dot(&l.t()) / tau)
}

/// `(p_s2l, p_l2s)`: row softmaxes of `cos(s_i, l_j) / tau` and of its
/// transpose.
pub fn similarity_probs(s: &Array2<f64>, l: &Array2<f64>, tau: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    let z = similarity_logits(s, l, tau)?;
    Ok((softmax_rows(&z), softmax_rows(&z.t().to_owned())))
}

/// `(y_s2l, y_l2s)`; identical because label matching is symmetric.
pub fn target_distributions(labels: &[usize], mode: TargetMode) -> (Array2<f64>, Array2<f64>) {
    let b = labels.len();
    let mut y = Array2::zeros((b, b));
    for i in 0..b {
        let positives = labels.iter().filter(|&&l| l == labels[i]).count() as f64;
        let w = match mode {
            TargetMode::Normalized => 1.0 / positives,
            TargetMode::MultiHot => 1.0,
        };
        for j in 0..b {
            if labels[j] == labels[i] {
                y[[i, j]] = w;
            }
        }
    }
    (y.clone(), y)
}

/// Mean over rows of `sum_j y log(y / p)`, with `0 log 0 = 0` and `p`
/// floored at [`LOG_EPS`].
pub fn mean_kl(p: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    same_shape(p, y, "distribution")?;
    let mut total = 0.0;
    for (pr, yr) in p.rows().into_iter().zip(y.rows()) {
        for (&pv, &yv) in pr.iter().zip(yr.iter()) {
            if yv > 0.0 {
                total += yv * (yv.ln() - pv.max(LOG_EPS).ln());
            }
        }
    }
    Ok(total / p.nrows().max(1) as f64)
}

/// Symmetric KL contrastive loss over precomputed probabilities.
pub fn contrastive_loss(p_s2l: &Array2<f64>, y_s2l: &Array2<f64>, p_l2s: &Array2<f64>, y_l2s: &Array2<f64>) -> Result<f64> {
    Ok(0.5 * (mean_kl(p_s2l, y_s2l)? + mean_kl(p_l2s, y_l2s)?))
}

/// Row-wise KL from logits and the gradient with respect to those logits,
/// `(p * sum(y) - y) / B`.
fn kl_from_logits(z: &Array2<f64>, y: &Array2<f64>) -> (f64, Array2<f64>) {
    let logp = log_softmax_rows(z);
    let b = z.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(z.dim());
    for i in 0..z.nrows() {
        let ysum: f64 = y.row(i).sum();
        for j in 0..z.ncols() {
            let yv = y[[i, j]];
            if yv > 0.0 {
                loss += yv * (yv.ln() - logp[[i, j]].max(LOG_EPS.ln()));
            }
            grad[[i, j]] = (logp[[i, j]].exp() * ysum - yv) / b;
        }
    }
    (loss / b, grad)
}

/// Contrastive loss between unit-norm skeleton embeddings `s` and label
/// embeddings `l`, with gradients with respect to both.
pub fn contrastive_loss_grad(
    s: &Array2<f64>,
    l: &Array2<f64>,
    labels: &[usize],
    tau: f64,
    mode: TargetMode,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let z = similarity_logits(s, l, tau)?;
    if labels.len() != z.nrows() {
        return Err(Error::shape("labels", z.nrows(), labels.len()));
    }
    let (y1, y2) = target_distributions(labels, mode);
    let (l1, g1) = kl_from_logits(&z, &y1);
    let (l2, g2) = kl_from_logits(&z.t().to_owned(), &y2);
    // z2 = z^T, so fold its gradient back onto z
    let dz = (g1 + g2.t()) * (0.5 / tau);
    let ds = dz.dot(l);
    let dl = dz.t().dot(s);
    Ok((0.5 * (l1 + l2), ds, dl))
}

pub fn diffusion_loss(l_recon: f64, l_con: f64, w: LossWeights) -> f64 {
    l_recon + w.lambda * l_con
}

fn check_labels(logits: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.nrows() {
        return Err(Error::shape("labels", logits.nrows(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::Index(format!("label {bad} with {} classes", logits.ncols())));
    }
    Ok(())
}

/// Mean cross-entropy of row softmaxes at the true class.
pub fn classification_loss(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(classification_loss_grad(logits, labels)?.0)
}

pub fn classification_loss_grad(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_labels(logits, labels)?;
    let b = logits.nrows().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // exp(z_y - m) is exactly 1 when y is the argmax, which keeps the
        // saturated case from rounding to zero
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != y)
            .map(|(_, v)| (v - m).exp())
            .sum();
        let lse = m + ((row[y] - m).exp() + rest).ln();
        loss += if row[y] == m { rest.ln_1p() } else { lse - row[y] };
        for (k, v) in row.iter().enumerate() {
            grad[[i, k]] = ((v - lse).exp() - if k == y { 1.0 } else { 0.0 }) / b;
        }
    }
    Ok((loss / b, grad))
}

pub fn total_loss(l_cls: f64, l_diff: f64) -> f64 {
    l_cls + l_diff
}

/// Index of the largest entry per row, ties to the lowest index.
pub fn argmax_rows(x: &Array2<f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn recon_cases() {
        let x = array![[1.0, 2.0, 3.0]];
        assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
        let y = array![[0.0, 1.0, 2.0]];
        assert_eq!(recon_loss(&x, &y).unwrap(), 1.5);
        assert!(recon_loss(&x, &array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn probs_hand_softmax() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let (p1, p2) = similarity_probs(&s, &s, 1.0).unwrap();
        for p in [p1, p2] {
            assert_abs_diff_eq!(p[[0, 0]], 0.731_058_578_6, epsilon = 1e-9);
            assert_abs_diff_eq!(p[[0, 1]], 0.268_941_421_4, epsilon = 1e-9);
            assert_abs_diff_eq!(p[[1, 1]], 0.731_058_578_6, epsilon = 1e-9);
        }
    }

    #[test]
    fn identical_embeddings_give_uniform_rows() {
        let s = array![[0.6, 0.8], [0.6, 0.8], [0.6, 0.8]];
        let (p, _) = similarity_probs(&s, &s, 0.07).unwrap();
        p.iter().for_each(|&v| assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12));
    }

    #[test]
    fn small_temperature_approaches_one_hot() {
        let s = array![[1.0, 0.0]];
        let l = array![[0.0, 1.0], [1.0, 0.0]];
        let z = s.dot(&l.t()) / 0.01;
        let p = softmax_rows(&z);
        assert!(p[[0, 1]] > 1.0 - 1e-12);
        assert!(similarity_probs(&s, &s, 0.0).is_err());
        assert!(similarity_probs(&s, &s, -1.0).is_err());
    }

    #[test]
    fn targets() {
        let (y, _) = target_distributions(&[0, 1, 2], TargetMode::Normalized);
        assert_eq!(y, Array2::<f64>::eye(3));
        let (y, _) = target_distributions(&[0, 0], TargetMode::Normalized);
        assert_eq!(y, array![[0.5, 0.5], [0.5, 0.5]]);
        let (y, y2) = target_distributions(&[0, 0, 1], TargetMode::Normalized);
        assert_eq!(y, array![[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(y, y2);
        let (y, _) = target_distributions(&[0, 0, 1], TargetMode::MultiHot);
        assert_eq!(y, array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn kl_closed_forms() {
        let (y, _) = target_distributions(&[0, 1, 2, 3], TargetMode::Normalized);
        assert_eq!(contrastive_loss(&y, &y, &y, &y).unwrap(), 0.0);
        let u = Array2::from_elem((4, 4), 0.25);
        assert_abs_diff_eq!(contrastive_loss(&u, &y, &u, &y).unwrap(), 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn zero_probability_is_floored() {
        let y = array![[1.0, 0.0]];
        let p = array![[0.0, 1.0]];
        assert_abs_diff_eq!(mean_kl(&p, &y).unwrap(), -(LOG_EPS.ln()), epsilon = 1e-9);
    }

    #[test]
    fn weighted_sums() {
        let w = LossWeights::default();
        assert_eq!(w.lambda, 0.075);
        assert_eq!(diffusion_loss(3.0, 5.0, LossWeights { lambda: 0.0 }), 3.0);
        assert_abs_diff_eq!(diffusion_loss(1.0, 2.0, w), 1.15, epsilon = 1e-15);
        assert_abs_diff_eq!(diffusion_loss(1.0, 2.0, LossWeights { lambda: 0.8 }), 2.6, epsilon = 1e-15);
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(total_loss(1.0, 1.15), 2.15, epsilon = 1e-15);
        assert!(LossWeights { lambda: -0.1 }.validate().is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let z = Array2::zeros((2, 6));
        assert_abs_diff_eq!(classification_loss(&z, &[0, 5]).unwrap(), 6f64.ln(), epsilon = 1e-15);
        let z = array![[50.0, 0.0, 0.0]];
        let l = classification_loss(&z, &[0]).unwrap();
        assert!((0.0..1e-20).contains(&l));
        assert!(matches!(classification_loss(&z, &[3]), Err(Error::Index(_))));
        assert!(classification_loss(&z, &[0, 1]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&array![[1.0, 3.0, 3.0], [0.0, 0.0, 0.0]]), vec![1, 0]);
    }
}
