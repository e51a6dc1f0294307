//! Forward corruption, the conditional `x0` denoiser and reverse sampling over
//! feature vectors.

mod denoiser;
mod sampler;
mod schedule;

pub use denoiser::{CondLayer, Denoise, Denoiser, DenoiserConfig, DenoiserNet, DenoiserTrace, Trace};
pub use sampler::{sample, sample_one};
pub use schedule::{make_schedule, scaled_beta_bounds, time_embedding, NoiseSchedule};
