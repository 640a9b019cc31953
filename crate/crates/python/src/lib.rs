//! Python bindings. Grids cross the boundary as nested lists (rows of
//! complex numbers); numpy arrays are accepted anywhere a grid is.

use ksgdiffuse::kspace::mask::default_center_fraction;
use ksgdiffuse::{
    c2f_reconstruct, metrics, oracle, ComplexImage, Denoiser, Error, GaussianPriorDenoiser, KSpace,
    Mask, SamplerConfig, ZeroDenoiser,
};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Grid = Vec<Vec<Complex64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

pub fn to_image(rows: Grid) -> PyResult<ComplexImage> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("grid rows must all have the same length"));
    }
    ComplexImage::new(height, width, rows.into_iter().flatten().collect()).map_err(py_err)
}

pub fn to_rows(img: &ComplexImage) -> Grid {
    img.data().chunks(img.width()).map(<[Complex64]>::to_vec).collect()
}

fn to_mask(rows: Vec<Vec<u8>>) -> PyResult<Mask> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("mask rows must all have the same length"));
    }
    Mask::from_entries(height, width, rows.into_iter().flatten().collect()).map_err(py_err)
}

/// `Vec<u8>` would surface as `bytes`; masks go out as lists of ints.
fn mask_rows(mask: &Mask) -> Vec<Vec<u32>> {
    mask.entries()
        .chunks(mask.shape().1)
        .map(|row| row.iter().map(|&v| u32::from(v)).collect())
        .collect()
}

fn resolve_fraction(acceleration: f64, center_fraction: Option<f64>) -> PyResult<f64> {
    center_fraction
        .or_else(|| default_center_fraction(acceleration))
        .ok_or_else(|| {
            PyValueError::new_err(format!(
                "no default center fraction for acceleration {acceleration}; pass center_fraction"
            ))
        })
}

/// Noise schedule with 1-based timesteps.
#[pyclass(name = "Schedule", frozen)]
pub struct PySchedule(ksgdiffuse::Schedule);

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn cosine(steps: usize) -> PyResult<Self> {
        ksgdiffuse::Schedule::new_cosine(steps).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (steps, beta_start = 1e-4, beta_end = 0.02))]
    fn linear(steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Self> {
        ksgdiffuse::Schedule::new_linear(steps, beta_start, beta_end).map(Self).map_err(py_err)
    }

    fn respace(&self, steps: usize) -> PyResult<Self> {
        self.0.respace(steps).map(Self).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.num_steps()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.0.betas().to_vec()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.0.alphas().to_vec()
    }

    #[getter]
    fn alpha_bars(&self) -> Vec<f64> {
        self.0.alpha_bars().to_vec()
    }

    #[getter]
    fn sigma2s(&self) -> Vec<f64> {
        self.0.sigma2s().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.labels().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Schedule({})", self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (height, width, acceleration, center_fraction = None, seed = 0))]
fn cartesian_mask(
    height: usize,
    width: usize,
    acceleration: f64,
    center_fraction: Option<f64>,
    seed: u64,
) -> PyResult<Vec<Vec<u32>>> {
    let cf = resolve_fraction(acceleration, center_fraction)?;
    Mask::cartesian(height, width, acceleration, cf, seed).map(|m| mask_rows(&m)).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (height, width, acceleration, center_fraction = None, seed = 0))]
fn gaussian_mask(
    height: usize,
    width: usize,
    acceleration: f64,
    center_fraction: Option<f64>,
    seed: u64,
) -> PyResult<Vec<Vec<u32>>> {
    let cf = resolve_fraction(acceleration, center_fraction)?;
    Mask::gaussian_1d(height, width, acceleration, cf, seed).map(|m| mask_rows(&m)).map_err(py_err)
}

#[pyfunction]
fn fft2c(image: Grid) -> PyResult<Grid> {
    Ok(to_rows(ksgdiffuse::fft2c(&to_image(image)?).grid()))
}

#[pyfunction]
fn ifft2c(kspace: Grid) -> PyResult<Grid> {
    Ok(to_rows(&ksgdiffuse::ifft2c(&KSpace::from_grid(to_image(kspace)?))))
}

#[pyfunction]
#[pyo3(signature = (total_steps = 4000, respacing = 40, chains = 10, refine_steps = 20, refine = true))]
fn speedup_factor(total_steps: usize, respacing: usize, chains: usize, refine_steps: usize, refine: bool) -> f64 {
    ksgdiffuse::speedup_factor(&SamplerConfig {
        total_steps,
        respacing,
        chains,
        refine_steps,
        refine,
        ..SamplerConfig::default()
    })
}

/// Coarse-to-fine reconstruction with the Gaussian-prior (or zero) denoiser
/// on a cosine schedule. `x_obs` is k-space; unsampled entries are ignored.
#[pyfunction]
#[pyo3(signature = (
    x_obs, mask, mu = None, s2 = 1.0, denoiser = "gaussian", total_steps = 4000,
    respacing = 40, chains = 10, refine_steps = 20, ksg_noise = true, refine = true,
    seed = 0, keep_samples = false
))]
#[allow(clippy::too_many_arguments)]
fn reconstruct<'py>(
    py: Python<'py>,
    x_obs: Grid,
    mask: Vec<Vec<u8>>,
    mu: Option<Grid>,
    s2: f64,
    denoiser: &str,
    total_steps: usize,
    respacing: usize,
    chains: usize,
    refine_steps: usize,
    ksg_noise: bool,
    refine: bool,
    seed: u64,
    keep_samples: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let x_obs = KSpace::from_grid(to_image(x_obs)?);
    let mask = to_mask(mask)?;
    let (h, w) = mask.shape();
    let den: Box<dyn Denoiser + Send + Sync> = match denoiser {
        "gaussian" => {
            let mu = match mu {
                Some(mu) => to_image(mu)?,
                None => ComplexImage::zeros(h, w),
            };
            Box::new(GaussianPriorDenoiser::new(mu, s2).map_err(py_err)?)
        }
        "zero" => Box::new(ZeroDenoiser),
        other => return Err(PyValueError::new_err(format!("unknown denoiser {other:?}"))),
    };
    let config = SamplerConfig {
        total_steps,
        respacing,
        chains,
        refine_steps,
        ksg_noise,
        refine,
        keep_samples,
        seed,
    };
    let schedule = ksgdiffuse::Schedule::new_cosine(total_steps).map_err(py_err)?;
    let result = py
        .detach(|| c2f_reconstruct(&x_obs, &mask, &schedule, den.as_ref(), &config))
        .map_err(py_err)?;

    let out = PyDict::new(py);
    out.set_item("mean", to_rows(&result.mean))?;
    let variance: Vec<Vec<f64>> = result
        .variance
        .data()
        .chunks(result.variance.width())
        .map(<[f64]>::to_vec)
        .collect();
    out.set_item("variance", variance)?;
    out.set_item("samples", result.samples.map(|s| s.iter().map(to_rows).collect::<Vec<_>>()))?;
    out.set_item("coarse_steps", result.metadata.coarse_steps)?;
    out.set_item("speedup_factor", result.metadata.speedup_factor)?;
    out.set_item("schedule", result.metadata.schedule)?;
    out.set_item("coarse_schedule", result.metadata.coarse_schedule)?;
    Ok(out)
}

/// Exact posterior mean (image) and per-component k-space variance.
#[pyfunction]
fn gaussian_posterior(mu: Grid, s2: f64, mask: Vec<Vec<u8>>, x_obs: Grid) -> PyResult<(Grid, Vec<Vec<f64>>)> {
    let mask = to_mask(mask)?;
    let post = oracle::gaussian_posterior(&to_image(mu)?, s2, &mask, &KSpace::from_grid(to_image(x_obs)?))
        .map_err(py_err)?;
    let var = post.kspace_variance;
    Ok((to_rows(&post.mean), var.data().chunks(var.width()).map(<[f64]>::to_vec).collect()))
}

#[pyfunction]
#[pyo3(signature = (reference, test, data_range = None))]
fn psnr(reference: Grid, test: Grid, data_range: Option<f64>) -> PyResult<f64> {
    metrics::psnr(&to_image(reference)?, &to_image(test)?, data_range).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (reference, test, data_range = None))]
fn ssim(reference: Grid, test: Grid, data_range: Option<f64>) -> PyResult<f64> {
    metrics::ssim(&to_image(reference)?, &to_image(test)?, data_range).map_err(py_err)
}

/// Adds every binding to `m`; shared by the extension entry point and
/// embedded tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(cartesian_mask, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_mask, m)?)?;
    m.add_function(wrap_pyfunction!(fft2c, m)?)?;
    m.add_function(wrap_pyfunction!(ifft2c, m)?)?;
    m.add_function(wrap_pyfunction!(speedup_factor, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    Ok(())
}

#[pymodule]
fn ksgdiffuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
