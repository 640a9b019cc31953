//! K-space guided diffusion sampling for undersampled MRI reconstruction.
//!
//! A pre-trained (or analytic) noise predictor is steered towards acquired
//! k-space data at every reverse-diffusion step, and a coarse-to-fine
//! Monte-Carlo scheme estimates the posterior mean and a per-pixel variance
//! map at a fraction of the cost of running full-length chains.

pub mod denoiser;
pub mod error;
pub mod kspace;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use denoiser::{Denoiser, GaussianPriorDenoiser, RemoteDenoiser, ZeroDenoiser};
pub use error::{Error, Result};
pub use kspace::{apply_mask, fft2c, ifft2c, ComplexImage, KSpace, Mask, RealMap};
pub use sampler::{c2f_reconstruct, speedup_factor, ReconResult, SamplerConfig};
pub use schedule::Schedule;
