use num_complex::Complex64;

use super::Denoiser;
use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::schedule::Schedule;

/// Exact noise predictor for a Gaussian image prior `y_0 ~ N(mu, s2·I)`.
///
/// Under `y_t = sqrt(ab)·y_0 + sqrt(1 - ab)·eps` the posterior mean of `y_0` is
/// `m(y_t) = (sqrt(ab)·s2·y_t + (1 - ab)·mu) / (ab·s2 + 1 - ab)` and the
/// optimal noise estimate is `(y_t - sqrt(ab)·m(y_t)) / sqrt(1 - ab)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPriorDenoiser {
    mu: ComplexImage,
    s2: f64,
}

impl GaussianPriorDenoiser {
    pub fn new(mu: ComplexImage, s2: f64) -> Result<Self> {
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::invalid(format!("prior variance must be positive, got {s2}")));
        }
        Ok(Self { mu, s2 })
    }

    pub fn mu(&self) -> &ComplexImage {
        &self.mu
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    /// Noise estimate for an explicit `alpha_bar` in `[0, 1)`.
    pub fn predict_noise_at(&self, y_t: &ComplexImage, alpha_bar: f64) -> Result<ComplexImage> {
        if !(0.0..1.0).contains(&alpha_bar) {
            return Err(Error::invalid(format!("alpha_bar {alpha_bar} outside [0, 1)")));
        }
        y_t.ensure_shape(self.mu.shape())?;
        let sab = alpha_bar.sqrt();
        let one_minus = 1.0 - alpha_bar;
        let denom = alpha_bar * self.s2 + one_minus;
        let noise_scale = one_minus.sqrt();
        let data = y_t
            .data()
            .iter()
            .zip(self.mu.data())
            .map(|(&y, &mu)| {
                let post: Complex64 = (y * (sab * self.s2) + mu * one_minus) / denom;
                (y - post * sab) / noise_scale
            })
            .collect();
        Ok(ComplexImage::from_raw(y_t.height(), y_t.width(), data))
    }
}

impl Denoiser for GaussianPriorDenoiser {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        let alpha_bar = schedule.alpha_bar_for_label(t)?;
        self.predict_noise_at(y_t, alpha_bar)
    }
}
