//! Mask generation, phantoms, metrics and the Gaussian-posterior oracle.

use std::path::Path;

use ksgdiffuse::kspace::format::{Cim, Domain};
use ksgdiffuse::oracle::gaussian_posterior;
use ksgdiffuse::rng::{self, gaussian_field, Purpose};
use ksgdiffuse::{apply_mask, fft2c, ifft2c, ComplexImage, KSpace, Mask};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::commands::reconstruct::score;
use crate::config::{make_mask, MaskKind, MetricSpec};
use crate::error::{CliResult, Failure};
use crate::io;
use crate::report::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub height: usize,
    pub width: usize,
    pub columns: Option<Vec<usize>>,
    pub sampled: usize,
    pub realized_acceleration: f64,
}

pub fn mask_make(
    kind: MaskKind,
    height: usize,
    width: usize,
    acceleration: f64,
    center_fraction: Option<f64>,
    seed: u64,
    out: &Path,
) -> CliResult<MaskSummary> {
    let mask = make_mask(kind, height, width, acceleration, center_fraction, seed)?;
    io::write_mask_file(out, &mask)?;
    Ok(summarize(&mask))
}

pub fn summarize(mask: &Mask) -> MaskSummary {
    let (height, width) = mask.shape();
    MaskSummary {
        height,
        width,
        columns: mask.columns().map(<[usize]>::to_vec),
        sampled: mask.sampled_count(),
        realized_acceleration: mask.realized_acceleration(),
    }
}

/// Smooth complex bump: `amplitude·exp(-d²/(2·radius²))·e^{i·phase}`
/// centered on the grid.
pub fn bump(height: usize, width: usize, amplitude: f64, radius: f64, phase: f64) -> ComplexImage {
    let rot = Complex64::from_polar(1.0, phase);
    ComplexImage::from_fn(height, width, |r, c| {
        let dr = r as f64 - height as f64 / 2.0;
        let dc = c as f64 - width as f64 / 2.0;
        rot * (amplitude * (-(dr * dr + dc * dc) / (2.0 * radius * radius)).exp())
    })
    .expect("finite by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub amplitude: f64,
    pub radius: f64,
    pub phase: f64,
    pub s2: f64,
    pub seed: u64,
}

/// Prior mean and one draw `mu + sqrt(s2)·z` from the Gaussian prior.
pub fn phantom(spec: &PhantomSpec) -> CliResult<(ComplexImage, ComplexImage)> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Failure::invalid("phantom dimensions must be positive"));
    }
    if !(spec.s2 >= 0.0 && spec.radius > 0.0) {
        return Err(Failure::invalid("phantom needs s2 >= 0 and radius > 0"));
    }
    let mu = bump(spec.height, spec.width, spec.amplitude, spec.radius, spec.phase);
    let mut rng = rng::stream(spec.seed, 0, 0, Purpose::InitialNoise);
    let noise = gaussian_field(&mut rng, spec.height, spec.width, spec.s2);
    let truth = ComplexImage::new(
        spec.height,
        spec.width,
        mu.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
    )?;
    Ok((mu, truth))
}

/// Reads a CIM1 file as an image, inverse-transforming k-space content.
pub fn read_as_image(path: &Path) -> CliResult<ComplexImage> {
    Ok(match io::read_cim_file(path)? {
        Cim::Image(img) => img,
        Cim::KSpace(k) => ifft2c(&k),
    })
}

/// Reads a CIM1 file as k-space, forward-transforming image content.
pub fn read_as_kspace(path: &Path) -> CliResult<KSpace> {
    Ok(match io::read_cim_file(path)? {
        Cim::Image(img) => fft2c(&img),
        Cim::KSpace(k) => k,
    })
}

pub fn metrics(reference: &Path, test: &Path, spec: &MetricSpec) -> CliResult<Metrics> {
    let a = read_as_image(reference)?;
    let b = read_as_image(test)?;
    score(&a, &b, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub observed: usize,
    pub unobserved: usize,
    pub s2: f64,
}

/// Writes the exact posterior mean (image CIM1) and, optionally, the
/// per-coefficient k-space variance grid.
pub fn oracle(
    mu: Option<&Path>,
    s2: f64,
    mask: &Path,
    kspace: &Path,
    out: &Path,
    variance_out: Option<&Path>,
) -> CliResult<OracleSummary> {
    let mask = io::read_mask_file(mask)?;
    let x = read_as_kspace(kspace)?;
    let (h, w) = mask.shape();
    let mu = match mu {
        Some(p) => read_as_image(p)?,
        None => ComplexImage::zeros(h, w),
    };
    let post = gaussian_posterior(&mu, s2, &mask, &apply_mask(&x, &mask)?)?;
    io::write_cim_file(out, &post.mean, Domain::Image)?;
    if let Some(v) = variance_out {
        io::write_f32_grid(v, &post.kspace_variance, "posterior variance per k-space component")?;
    }
    let observed = mask.sampled_count();
    Ok(OracleSummary {
        observed,
        unobserved: h * w - observed,
        s2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_file_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.msk"), dir.path().join("b.msk"));
        mask_make(MaskKind::Cartesian, 4, 320, 8.0, Some(0.04), 7, &a).unwrap();
        let s = mask_make(MaskKind::Cartesian, 4, 320, 8.0, Some(0.04), 7, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let cols = s.columns.unwrap();
        assert!((154..167).all(|c| cols.contains(&c)));
    }

    #[test]
    fn infeasible_mask_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let err = mask_make(MaskKind::Cartesian, 8, 100, 8.0, Some(0.5), 0, &dir.path().join("m"))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message.contains("acceleration"), "{}", err.message);
    }

    #[test]
    fn phantom_is_seeded() {
        let spec = PhantomSpec { height: 8, width: 10, amplitude: 4.0, radius: 2.0, phase: 0.3, s2: 1.0, seed: 1 };
        let (mu, a) = phantom(&spec).unwrap();
        let (_, b) = phantom(&spec).unwrap();
        assert_eq!(a, b);
        assert!((mu.get(4, 5).norm() - 4.0).abs() < 1e-12);
        let (_, c) = phantom(&PhantomSpec { seed: 2, ..spec.clone() }).unwrap();
        assert_ne!(a, c);
        let (m, d) = phantom(&PhantomSpec { s2: 0.0, ..spec }).unwrap();
        assert_eq!(m, d);
    }

    #[test]
    fn oracle_with_full_mask_inverts() {
        let dir = tempfile::tempdir().unwrap();
        let truth = bump(4, 4, 2.0, 1.0, 0.0);
        let k = dir.path().join("k.cim");
        io::write_cim_file(&k, fft2c(&truth).grid(), Domain::KSpace).unwrap();
        let m = dir.path().join("m.msk");
        io::write_mask_file(&m, &Mask::full(4, 4)).unwrap();
        let out = dir.path().join("mean.cim");
        let s = oracle(None, 1.0, &m, &k, &out, None).unwrap();
        assert_eq!((s.observed, s.unobserved), (16, 0));
        assert!(io::read_image_file(&out).unwrap().max_abs_diff(&truth).unwrap() < 1e-6);
    }
}
