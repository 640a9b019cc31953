//! Exact posterior for a Gaussian image prior observed through `M·F`.
//!
//! With `y_0 ~ N(mu, s2·I)` and a unitary `F`, k-space coefficients are
//! independent `N(F mu, s2)`. Observing the masked coefficients pins them to
//! `x_obs` and leaves the rest at their prior, so the posterior is diagonal
//! in k-space.

use crate::error::{Error, Result};
use crate::kspace::{apply_mask, fft2c, ifft2c, ComplexImage, KSpace, Mask, RealMap};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: ComplexImage,
    /// Per-component posterior variance of each k-space coefficient.
    pub kspace_variance: RealMap,
}

pub fn gaussian_posterior(
    mu: &ComplexImage,
    s2: f64,
    mask: &Mask,
    x_obs: &KSpace,
) -> Result<GaussianPosterior> {
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::invalid(format!("prior variance must be positive, got {s2}")));
    }
    mu.ensure_shape(mask.shape())?;
    let observed = apply_mask(x_obs, mask)?;
    let prior_k = fft2c(mu);
    let (h, w) = mask.shape();
    let data = mask
        .entries()
        .iter()
        .enumerate()
        .map(|(i, &m)| if m == 1 { observed.data()[i] } else { prior_k.data()[i] })
        .collect();
    let mean = ifft2c(&KSpace::new(h, w, data)?);
    let variance = mask
        .entries()
        .iter()
        .map(|&m| if m == 1 { 0.0 } else { s2 })
        .collect();
    Ok(GaussianPosterior {
        mean,
        kspace_variance: RealMap::new(h, w, variance)?,
    })
}
