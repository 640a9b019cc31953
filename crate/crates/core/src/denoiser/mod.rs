//! Noise predictors `ε(y_t, t)`.

mod gaussian;
pub mod plugin;

use std::sync::Arc;

pub use gaussian::GaussianPriorDenoiser;
pub use plugin::{Geometry, PluginEndpoint, PluginError, RemoteDenoiser};

use crate::error::Result;
use crate::kspace::ComplexImage;
use crate::schedule::Schedule;

/// Predicts the noise field present in a diffused image.
///
/// `t` is the timestep label of the original (un-respaced) schedule. Real and
/// imaginary parts are treated as two independent channels. Implementations
/// must be deterministic and return an image of the same shape.
pub trait Denoiser: Send + Sync {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule)
        -> Result<ComplexImage>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        (**self).predict_noise(y_t, t, schedule)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        (**self).predict_noise(y_t, t, schedule)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        (**self).predict_noise(y_t, t, schedule)
    }
}

/// Always predicts a zero noise field.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_noise(&self, y_t: &ComplexImage, t: usize, schedule: &Schedule) -> Result<ComplexImage> {
        schedule.alpha_bar_for_label(t)?;
        Ok(ComplexImage::zeros(y_t.height(), y_t.width()))
    }
}
