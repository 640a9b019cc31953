//! Reverse diffusion with k-space guidance and coarse-to-fine Monte-Carlo
//! reconstruction.
//!
//! A guided chain alternates two updates from `t = T` down to 1:
//!
//! ```text
//! y'_{t-1} = (y_t - (1 - a_t)/sqrt(1 - ab_t) · eps(y_t, t)) / sqrt(a_t) + sigma_t·z
//! y_{t-1}  = F⁻¹((1 - M)·F y'_{t-1} + M·(x_obs + F n)),   n ~ N(0, (1 - ab_{t-1})·I)
//! ```
//!
//! so the last update (`ab_0 = 1`) restores the acquired coefficients exactly.
//! Coarse-to-fine reconstruction runs `N` such chains on a re-spaced schedule,
//! averages them, and optionally refines the average with the final
//! `T_refine` steps of the full schedule using plain data replacement.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::kspace::{apply_mask, fft2c, ifft2c, ComplexImage, KSpace, Mask, RealMap};
use crate::rng::{self, gaussian_field, Purpose};
use crate::schedule::{Schedule, StepCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Length `T` of the full schedule.
    pub total_steps: usize,
    /// Re-spacing factor `k`; coarse chains run `floor(T / k)` steps.
    pub respacing: usize,
    /// Number of Monte-Carlo chains `N`.
    pub chains: usize,
    pub refine_steps: usize,
    /// Noise the observation to the current diffusion level before mixing.
    pub ksg_noise: bool,
    pub refine: bool,
    pub keep_samples: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_steps: 4000,
            respacing: 40,
            chains: 10,
            refine_steps: 20,
            ksg_noise: true,
            refine: true,
            keep_samples: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::invalid("total_steps must be positive"));
        }
        if self.respacing == 0 || self.total_steps / self.respacing == 0 {
            return Err(Error::invalid(format!(
                "respacing factor {} leaves no coarse steps out of {}",
                self.respacing, self.total_steps
            )));
        }
        if self.chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.refine && self.refine_steps >= self.total_steps {
            return Err(Error::invalid(format!(
                "refine_steps ({}) must be smaller than total_steps ({})",
                self.refine_steps, self.total_steps
            )));
        }
        Ok(())
    }

    pub fn coarse_steps(&self) -> usize {
        self.total_steps / self.respacing
    }
}

/// Cost of naive Monte-Carlo (`T·N` steps) over coarse-to-fine
/// (`T·N/k + T_refine` steps); exactly `k` without refinement.
pub fn speedup_factor(config: &SamplerConfig) -> f64 {
    let k = config.respacing as f64;
    if !config.refine {
        return k;
    }
    let naive = config.total_steps as f64 * config.chains as f64;
    naive / (naive / k + config.refine_steps as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub coarse_seconds: f64,
    pub refine_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconMetadata {
    pub config: SamplerConfig,
    pub schedule: String,
    pub coarse_schedule: String,
    pub coarse_steps: usize,
    pub speedup_factor: f64,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    /// Average of the coarse samples, refined when enabled.
    pub mean: ComplexImage,
    /// Per-pixel variance of `|y|` across the coarse samples.
    pub variance: RealMap,
    pub samples: Option<Vec<ComplexImage>>,
    pub metadata: ReconMetadata,
}

/// `(y - (1 - a)/sqrt(1 - ab)·eps)/sqrt(a) + sigma·z`
pub(crate) fn reverse_update(
    y: &ComplexImage,
    eps: &ComplexImage,
    c: &StepCoefficients,
    z: Option<&ComplexImage>,
) -> ComplexImage {
    let inv_sqrt_alpha = 1.0 / c.alpha.sqrt();
    let eps_coef = (1.0 - c.alpha) / (1.0 - c.alpha_bar).sqrt();
    let sigma = c.sigma2.sqrt();
    let mut data: Vec<Complex64> = y
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&y, &e)| (y - e * eps_coef) * inv_sqrt_alpha)
        .collect();
    if let Some(z) = z {
        data.iter_mut().zip(z.data()).for_each(|(v, &z)| *v += z * sigma);
    }
    ComplexImage::from_raw(y.height(), y.width(), data)
}

/// One ancestral denoising step at schedule position `t`; returns `y'_{t-1}`.
pub fn reverse_step<D, R>(
    y_t: &ComplexImage,
    t: usize,
    schedule: &Schedule,
    denoiser: &D,
    rng: &mut R,
) -> Result<ComplexImage>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let c = schedule.step(t)?;
    let eps = denoiser.predict_noise(y_t, c.label, schedule)?;
    eps.ensure_shape(y_t.shape())?;
    if !eps.is_finite() {
        return Err(Error::NonFinite(format!(
            "denoiser output at timestep {}",
            c.label
        )));
    }
    let z = (c.sigma2 > 0.0).then(|| gaussian_field(rng, y_t.height(), y_t.width(), 1.0));
    let next = reverse_update(y_t, &eps, &c, z.as_ref());
    if !next.is_finite() {
        return Err(Error::NonFinite(format!("chain state after timestep {}", c.label)));
    }
    Ok(next)
}

/// K-space guidance at schedule position `t` (the level `y_prime` sits at).
///
/// Acquired coefficients are replaced by `x_obs` plus, when `ksg_noise` is
/// set, the Fourier transform of image-domain noise with variance
/// `1 - alpha_bar(t)`. At `t = 0` the replacement is exact.
pub fn ksg_step<R: Rng + ?Sized>(
    y_prime: &ComplexImage,
    t: usize,
    x_obs: &KSpace,
    mask: &Mask,
    schedule: &Schedule,
    ksg_noise: bool,
    rng: &mut R,
) -> Result<ComplexImage> {
    y_prime.ensure_shape(mask.shape())?;
    x_obs.grid().ensure_shape(mask.shape())?;
    let alpha_bar = schedule.alpha_bar(t)?;
    let noise = (ksg_noise && alpha_bar < 1.0).then(|| {
        let (h, w) = y_prime.shape();
        fft2c(&gaussian_field(rng, h, w, 1.0 - alpha_bar))
    });
    let mut k = fft2c(y_prime);
    let coeffs = k.grid_mut().data_mut();
    for (i, &m) in mask.entries().iter().enumerate() {
        if m == 1 {
            coeffs[i] = x_obs.data()[i] + noise.as_ref().map_or(Complex64::new(0.0, 0.0), |n| n.data()[i]);
        }
    }
    Ok(ifft2c(&k))
}

/// Direct data replacement: `F⁻¹((1 - M)·F y + M·x_obs)`.
pub fn replace_observed(y: &ComplexImage, x_obs: &KSpace, mask: &Mask) -> Result<ComplexImage> {
    y.ensure_shape(mask.shape())?;
    x_obs.grid().ensure_shape(mask.shape())?;
    let mut k = fft2c(y);
    let coeffs = k.grid_mut().data_mut();
    for (i, &m) in mask.entries().iter().enumerate() {
        if m == 1 {
            coeffs[i] = x_obs.data()[i];
        }
    }
    Ok(ifft2c(&k))
}

fn initial_noise(height: usize, width: usize, seed: u64, chain: u64) -> ComplexImage {
    let mut rng = rng::stream(seed, chain, 0, Purpose::InitialNoise);
    gaussian_field(&mut rng, height, width, 1.0)
}

struct Guidance<'a> {
    x_obs: &'a KSpace,
    mask: &'a Mask,
    noise: bool,
}

fn run_chain<D: Denoiser + ?Sized>(
    shape: (usize, usize),
    schedule: &Schedule,
    denoiser: &D,
    guidance: Option<&Guidance<'_>>,
    seed: u64,
    chain: u64,
) -> Result<ComplexImage> {
    let mut y = initial_noise(shape.0, shape.1, seed, chain);
    for t in (1..=schedule.num_steps()).rev() {
        let mut rng = rng::stream(seed, chain, t as u64, Purpose::ReverseNoise);
        let y_prime = reverse_step(&y, t, schedule, denoiser, &mut rng)?;
        y = match guidance {
            Some(g) => {
                let mut rng = rng::stream(seed, chain, t as u64, Purpose::KsgNoise);
                ksg_step(&y_prime, t - 1, g.x_obs, g.mask, schedule, g.noise, &mut rng)?
            }
            None => y_prime,
        };
    }
    Ok(y)
}

/// Plain ancestral sampling from `y_T ~ N(0, I)`.
pub fn sample_unconditional<D: Denoiser + ?Sized>(
    shape: (usize, usize),
    schedule: &Schedule,
    denoiser: &D,
    seed: u64,
) -> Result<ComplexImage> {
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    run_chain(shape, schedule, denoiser, None, seed, 0)
}

/// A single guided chain; the result reproduces `x_obs` on the mask.
pub fn sample_ksg<D: Denoiser + ?Sized>(
    x_obs: &KSpace,
    mask: &Mask,
    schedule: &Schedule,
    denoiser: &D,
    ksg_noise: bool,
    seed: u64,
) -> Result<ComplexImage> {
    sample_ksg_chain(x_obs, mask, schedule, denoiser, ksg_noise, seed, 0)
}

/// Guided chain `chain` of the stream family rooted at `seed`.
pub fn sample_ksg_chain<D: Denoiser + ?Sized>(
    x_obs: &KSpace,
    mask: &Mask,
    schedule: &Schedule,
    denoiser: &D,
    ksg_noise: bool,
    seed: u64,
    chain: u64,
) -> Result<ComplexImage> {
    let x_obs = apply_mask(x_obs, mask)?;
    let guidance = Guidance {
        x_obs: &x_obs,
        mask,
        noise: ksg_noise,
    };
    run_chain(mask.shape(), schedule, denoiser, Some(&guidance), seed, chain)
}

/// Unbiased per-pixel variance of `|y|` across samples (0 for one sample).
pub fn variance_map(samples: &[ComplexImage]) -> Result<RealMap> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("variance_map needs at least one sample"))?;
    let (h, w) = first.shape();
    for s in samples {
        s.ensure_shape((h, w))?;
    }
    let n = samples.len();
    if n == 1 {
        return Ok(RealMap::from_raw(h, w, vec![0.0; h * w]));
    }
    let data = (0..h * w)
        .map(|i| {
            let mean = samples.iter().map(|s| s.data()[i].norm()).sum::<f64>() / n as f64;
            samples
                .iter()
                .map(|s| (s.data()[i].norm() - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect();
    Ok(RealMap::from_raw(h, w, data))
}

fn average(samples: &[ComplexImage]) -> ComplexImage {
    let (h, w) = samples[0].shape();
    let n = samples.len() as f64;
    let mut acc = vec![Complex64::new(0.0, 0.0); h * w];
    for s in samples {
        acc.iter_mut().zip(s.data()).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= n);
    ComplexImage::from_raw(h, w, acc)
}

/// Coarse-to-fine reconstruction.
///
/// Runs `N` guided chains on `full_schedule.respace(T / k)` (in parallel,
/// with per-chain random streams so the result is independent of thread
/// count), averages them, and, when refinement is enabled, treats the average
/// as the state at full-schedule step `T_refine` and runs the remaining
/// steps with direct data replacement. A final replacement projects the
/// result onto `M·F(y) = x_obs`.
pub fn c2f_reconstruct<D: Denoiser + ?Sized>(
    x_obs: &KSpace,
    mask: &Mask,
    full_schedule: &Schedule,
    denoiser: &D,
    config: &SamplerConfig,
) -> Result<ReconResult> {
    config.validate()?;
    if full_schedule.num_steps() != config.total_steps {
        return Err(Error::invalid(format!(
            "config expects T={} but the schedule has {} steps",
            config.total_steps,
            full_schedule.num_steps()
        )));
    }
    let x_obs = apply_mask(x_obs, mask)?;
    let coarse = full_schedule.respace(config.coarse_steps())?;
    let started = Instant::now();

    let samples = (0..config.chains as u64)
        .into_par_iter()
        .map(|chain| {
            sample_ksg_chain(&x_obs, mask, &coarse, denoiser, config.ksg_noise, config.seed, chain)
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse_seconds = started.elapsed().as_secs_f64();

    let refine_started = Instant::now();
    let mut mean = average(&samples);
    if config.refine {
        for t in (1..=config.refine_steps).rev() {
            let mut rng = rng::stream(config.seed, 0, t as u64, Purpose::RefineNoise);
            let y_prime = reverse_step(&mean, t, full_schedule, denoiser, &mut rng)?;
            mean = replace_observed(&y_prime, &x_obs, mask)?;
        }
    }
    // one last replacement keeps M·F(mean) = x_obs tight despite fp drift
    let mean = replace_observed(&mean, &x_obs, mask)?;
    let refine_seconds = refine_started.elapsed().as_secs_f64();

    let variance = variance_map(&samples)?;
    Ok(ReconResult {
        mean,
        variance,
        samples: config.keep_samples.then_some(samples),
        metadata: ReconMetadata {
            config: config.clone(),
            schedule: full_schedule.to_string(),
            coarse_schedule: coarse.to_string(),
            coarse_steps: coarse.num_steps(),
            speedup_factor: speedup_factor(config),
            timings: PhaseTimings {
                coarse_seconds,
                refine_seconds,
                total_seconds: started.elapsed().as_secs_f64(),
            },
        },
    })
}

/// Largest `|M·F(y) - x_obs|` over acquired coefficients.
pub fn consistency_error(y: &ComplexImage, x_obs: &KSpace, mask: &Mask) -> Result<f64> {
    let k = fft2c(y);
    let masked = apply_mask(x_obs, mask)?;
    Ok(mask
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| (k.data()[i] - masked.data()[i]).norm())
        .fold(0.0, f64::max))
}
