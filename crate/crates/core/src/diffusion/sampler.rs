use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::denoiser::Denoise;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// Reverse chain from `x_start` at step `t_start` down to `x0`, one step at
/// a time, with noise drawn from a ChaCha stream seeded by `seed`.
pub fn sample<D: Denoise + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x_start: &Array2<f64>,
    t_start: usize,
    e_f: &Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>> {
    if t_start == 0 || t_start > schedule.steps() {
        return Err(Error::Index(format!("start step {t_start} outside [1, {}]", schedule.steps())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, d) = x_start.dim();
    let mut x = x_start.clone();
    for t in (1..=t_start).rev() {
        let x0_hat = denoiser.predict(&x, &vec![t; b], e_f)?;
        if x0_hat.dim() != (b, d) {
            return Err(Error::shape("prediction", d, x0_hat.ncols()));
        }
        let (c0, ct) = schedule.posterior_coefficients(t)?;
        let sigma = schedule.posterior_variance(t).sqrt();
        let mut next = x0_hat * c0 + &(&x * ct);
        if sigma > 0.0 {
            next.mapv_inplace(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * z
            });
        }
        x = next;
    }
    Ok(x)
}

/// Single-row convenience wrapper around [`sample`].
pub fn sample_one<D: Denoise + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x_start: &[f64],
    t_start: usize,
    e_f: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let x = Array2::from_shape_vec((1, x_start.len()), x_start.to_vec()).expect("row");
    let e = Array2::from_shape_vec((1, e_f.len()), e_f.to_vec()).expect("row");
    Ok(sample(denoiser, schedule, &x, t_start, &e, seed)?.into_raw_vec_and_offset().0)
}
