//! PSNR and SSIM on magnitude images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{ComplexImage, RealMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the square uniform window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `f64::INFINITY` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

fn magnitudes(reference: &ComplexImage, test: &ComplexImage) -> Result<(RealMap, RealMap)> {
    test.ensure_shape(reference.shape())?;
    Ok((reference.magnitude(), test.magnitude()))
}

fn resolve_range(reference: &RealMap, data_range: Option<f64>) -> Result<f64> {
    let range = data_range.unwrap_or_else(|| reference.max());
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::invalid(format!("data range must be positive, got {range}")));
    }
    Ok(range)
}

/// `10·log10(L² / MSE)` over magnitudes; `L` defaults to the reference's
/// largest magnitude.
pub fn psnr(reference: &ComplexImage, test: &ComplexImage, data_range: Option<f64>) -> Result<f64> {
    let (a, b) = magnitudes(reference, test)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let range = resolve_range(&a, data_range)?;
    Ok(10.0 * (range * range / mse).log10())
}

pub fn ssim(reference: &ComplexImage, test: &ComplexImage, data_range: Option<f64>) -> Result<f64> {
    ssim_with(reference, test, data_range, SsimParams::default())
}

/// Mean SSIM over every fully contained `window × window` patch, using
/// sample (N-1) variances as in scikit-image.
pub fn ssim_with(
    reference: &ComplexImage,
    test: &ComplexImage,
    data_range: Option<f64>,
    params: SsimParams,
) -> Result<f64> {
    let (a, b) = magnitudes(reference, test)?;
    let (h, w) = a.shape();
    let win = params.window;
    if win < 2 || h < win || w < win {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {win}x{win}, got {h}x{w}"
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let range = resolve_range(&a, data_range)?;
    let c1 = (params.k1 * range).powi(2);
    let c2 = (params.k2 * range).powi(2);

    let x = a.data();
    let y = b.data();
    let sx = box_sums(h, w, win, |i| x[i]);
    let sy = box_sums(h, w, win, |i| y[i]);
    let sxx = box_sums(h, w, win, |i| x[i] * x[i]);
    let syy = box_sums(h, w, win, |i| y[i] * y[i]);
    let sxy = box_sums(h, w, win, |i| x[i] * y[i]);

    let n = (win * win) as f64;
    let cov_norm = n / (n - 1.0);
    let total: f64 = (0..sx.len())
        .map(|i| {
            let (ux, uy) = (sx[i] / n, sy[i] / n);
            let vx = cov_norm * (sxx[i] / n - ux * ux);
            let vy = cov_norm * (syy[i] / n - uy * uy);
            let vxy = cov_norm * (sxy[i] / n - ux * uy);
            ((2.0 * ux * uy + c1) * (2.0 * vxy + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / sx.len() as f64)
}

/// Sums of `f` over every valid `win × win` window, row-major over the
/// `(h - win + 1) × (w - win + 1)` window origins. Separable: horizontal
/// sums first, then vertical.
fn box_sums(h: usize, w: usize, win: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (c..c + win).map(|k| f(r * w + k)).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (r..r + win).map(|k| rows[k * ow + c]).sum();
        }
    }
    out
}

pub fn evaluate(reference: &ComplexImage, test: &ComplexImage, data_range: Option<f64>)
    -> Result<MetricReport>
{
    let range = resolve_range(&reference.magnitude(), data_range)?;
    Ok(MetricReport {
        psnr: psnr(reference, test, Some(range))?,
        ssim: ssim(reference, test, Some(range))?,
        data_range: range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, gaussian_field, Purpose};
    use num_complex::Complex64;

    fn constant(h: usize, w: usize, v: f64) -> ComplexImage {
        ComplexImage::from_fn(h, w, |_, _| Complex64::new(v, 0.0)).unwrap()
    }

    fn random(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = rng::stream(seed, 0, 0, Purpose::InitialNoise);
        gaussian_field(&mut rng, h, w, 1.0)
    }

    fn naive_psnr(a: &ComplexImage, b: &ComplexImage, range: f64) -> f64 {
        let mut se = 0.0;
        for r in 0..a.height() {
            for c in 0..a.width() {
                let (x, y) = (a.get(r, c), b.get(r, c));
                let d = x.re.hypot(x.im) - y.re.hypot(y.im);
                se += d * d;
            }
        }
        let mse = se / (a.height() * a.width()) as f64;
        20.0 * range.log10() - 10.0 * mse.log10()
    }

    /// Per-window SSIM from explicitly gathered patches with centered moments.
    fn naive_ssim(a: &ComplexImage, b: &ComplexImage, range: f64) -> f64 {
        let (h, w) = a.shape();
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let mut total = 0.0;
        let mut count = 0;
        for r0 in 0..=h - 7 {
            for c0 in 0..=w - 7 {
                let mut px = Vec::new();
                let mut py = Vec::new();
                for r in r0..r0 + 7 {
                    for c in c0..c0 + 7 {
                        px.push(a.get(r, c).norm());
                        py.push(b.get(r, c).norm());
                    }
                }
                let n = px.len() as f64;
                let mx = px.iter().sum::<f64>() / n;
                let my = py.iter().sum::<f64>() / n;
                let vx = px.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
                let vy = py.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
                let cxy = px.iter().zip(&py).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0);
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_images() {
        let a = random(9, 11, 1);
        assert_eq!(psnr(&a, &a, None).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&a, &a, None).unwrap(), 1.0);
        let z = ComplexImage::zeros(8, 8);
        assert_eq!(psnr(&z, &z, None).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&z, &z, None).unwrap(), 1.0);
    }

    #[test]
    fn psnr_hand_value() {
        let v = psnr(&constant(4, 4, 1.0), &constant(4, 4, 0.9), Some(1.0)).unwrap();
        assert!((v - 20.0).abs() < 1e-9);
    }

    #[test]
    fn against_independent_implementations() {
        for (h, w, seed) in [(7, 7, 1), (16, 16, 2), (20, 13, 3), (33, 40, 4)] {
            let a = random(h, w, seed);
            let b = random(h, w, seed + 100);
            let range = a.magnitude().max();
            assert!((psnr(&a, &b, None).unwrap() - naive_psnr(&a, &b, range)).abs() < 1e-9);
            assert!((ssim(&a, &b, None).unwrap() - naive_ssim(&a, &b, range)).abs() < 1e-9);
            assert!((ssim(&a, &b, Some(2.0)).unwrap() - naive_ssim(&a, &b, 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn luminance_shift_lowers_ssim() {
        let a = random(12, 12, 7);
        let range = a.magnitude().max();
        let shifted = ComplexImage::from_fn(12, 12, |r, c| {
            let z = a.get(r, c);
            z * ((z.norm() + 5.0) / z.norm())
        })
        .unwrap();
        assert!(ssim(&a, &shifted, Some(range)).unwrap() < 1.0);
    }

    #[test]
    fn psnr_falls_with_noise() {
        let a = random(16, 16, 11);
        let noise = random(16, 16, 12);
        let values: Vec<f64> = [0.01, 0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|amp| {
                let b = ComplexImage::from_fn(16, 16, |r, c| a.get(r, c) + noise.get(r, c) * *amp)
                    .unwrap();
                psnr(&a, &b, None).unwrap()
            })
            .collect();
        assert!(values.windows(2).all(|p| p[1] < p[0]), "{values:?}");
    }

    #[test]
    fn global_phase_invariance() {
        let a = random(10, 10, 21);
        let b = random(10, 10, 22);
        let rot = Complex64::from_polar(1.0, 0.7);
        let ra = ComplexImage::from_fn(10, 10, |r, c| a.get(r, c) * rot).unwrap();
        let rb = ComplexImage::from_fn(10, 10, |r, c| b.get(r, c) * rot).unwrap();
        assert!((psnr(&a, &b, None).unwrap() - psnr(&ra, &rb, None).unwrap()).abs() < 1e-9);
        assert!((ssim(&a, &b, None).unwrap() - ssim(&ra, &rb, None).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn error_paths() {
        let a = random(6, 8, 1);
        assert!(ssim(&a, &a.clone(), None).is_err());
        assert!(psnr(&random(8, 8, 1), &random(8, 9, 1), None).is_err());
        let z = ComplexImage::zeros(8, 8);
        assert!(psnr(&z, &random(8, 8, 2), None).is_err());
    }

    #[test]
    fn report_shares_range() {
        let a = random(8, 8, 3);
        let b = random(8, 8, 4);
        let r = evaluate(&a, &b, None).unwrap();
        assert_eq!(r.data_range, a.magnitude().max());
        assert_eq!(r.psnr, psnr(&a, &b, None).unwrap());
    }
}
