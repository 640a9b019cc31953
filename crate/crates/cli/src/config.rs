//! Run configuration: one JSON file, every field optional except the input.

use std::path::{Path, PathBuf};
use std::time::Duration;

use ksgdiffuse::denoiser::plugin::DEFAULT_TIMEOUT;
use ksgdiffuse::denoiser::{Geometry, PluginEndpoint, RemoteDenoiser};
use ksgdiffuse::kspace::default_center_fraction;
use ksgdiffuse::{Denoiser, GaussianPriorDenoiser, Mask, SamplerConfig, Schedule, ZeroDenoiser};
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Cosine {
        #[serde(default = "default_steps")]
        steps: usize,
    },
    Linear {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_beta_start")]
        beta_start: f64,
        #[serde(default = "default_beta_end")]
        beta_end: f64,
    },
}

fn default_steps() -> usize {
    4000
}

fn default_beta_start() -> f64 {
    1e-4
}

fn default_beta_end() -> f64 {
    0.02
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Cosine {
            steps: default_steps(),
        }
    }
}

impl ScheduleSpec {
    pub fn steps(&self) -> usize {
        match self {
            ScheduleSpec::Cosine { steps } | ScheduleSpec::Linear { steps, .. } => *steps,
        }
    }

    pub fn set_steps(&mut self, value: usize) {
        match self {
            ScheduleSpec::Cosine { steps } | ScheduleSpec::Linear { steps, .. } => *steps = value,
        }
    }

    pub fn build(&self) -> CliResult<Schedule> {
        Ok(match *self {
            ScheduleSpec::Cosine { steps } => Schedule::new_cosine(steps)?,
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
            } => Schedule::new_linear(steps, beta_start, beta_end)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Cartesian,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub acceleration: f64,
    /// Defaults to the standard fraction for the acceleration.
    pub center_fraction: Option<f64>,
    pub seed: u64,
    /// Use a stored MSK1 mask instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            kind: MaskKind::Cartesian,
            acceleration: 8.0,
            center_fraction: None,
            seed: 0,
            path: None,
        }
    }
}

pub fn resolve_center_fraction(acceleration: f64, center_fraction: Option<f64>) -> CliResult<f64> {
    center_fraction
        .or_else(|| default_center_fraction(acceleration))
        .ok_or_else(|| {
            Failure::invalid(format!(
                "no default center_fraction for acceleration {acceleration}; pass one explicitly"
            ))
        })
}

pub fn make_mask(
    kind: MaskKind,
    height: usize,
    width: usize,
    acceleration: f64,
    center_fraction: Option<f64>,
    seed: u64,
) -> CliResult<Mask> {
    let cf = resolve_center_fraction(acceleration, center_fraction)?;
    let mask = match kind {
        MaskKind::Cartesian => Mask::cartesian(height, width, acceleration, cf, seed),
        MaskKind::Gaussian => Mask::gaussian_1d(height, width, acceleration, cf, seed),
    };
    mask.map_err(|e| Failure::from(e).context("mask"))
}

impl MaskSpec {
    pub fn build(&self, height: usize, width: usize) -> CliResult<Mask> {
        if let Some(path) = &self.path {
            let mask = io::read_mask_file(path)?;
            if mask.shape() != (height, width) {
                return Err(Failure::invalid(format!(
                    "mask {} is {:?} but the input is {:?}",
                    path.display(),
                    mask.shape(),
                    (height, width)
                )));
            }
            return Ok(mask);
        }
        make_mask(self.kind, height, width, self.acceleration, self.center_fraction, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum PluginTransport {
    Tcp { address: String },
    Stdio { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    Gaussian {
        /// Prior mean image; zero when absent.
        mu: Option<PathBuf>,
        #[serde(default = "default_s2")]
        s2: f64,
    },
    Zero,
    Plugin {
        #[serde(flatten)]
        transport: PluginTransport,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_s2() -> f64 {
    1.0
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT.as_millis() as u64
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        DenoiserSpec::Gaussian { mu: None, s2: 1.0 }
    }
}

impl DenoiserSpec {
    pub fn build(&self, height: usize, width: usize, steps: usize) -> CliResult<Box<dyn Denoiser>> {
        Ok(match self {
            DenoiserSpec::Gaussian { mu, s2 } => {
                let mu = match mu {
                    Some(path) => {
                        let img = io::read_image_file(path)?;
                        if img.shape() != (height, width) {
                            return Err(Failure::invalid(format!(
                                "prior mean {} is {:?} but the input is {:?}",
                                path.display(),
                                img.shape(),
                                (height, width)
                            )));
                        }
                        img
                    }
                    None => ksgdiffuse::ComplexImage::zeros(height, width),
                };
                Box::new(GaussianPriorDenoiser::new(mu, *s2)?)
            }
            DenoiserSpec::Zero => Box::new(ZeroDenoiser),
            DenoiserSpec::Plugin {
                transport,
                timeout_ms,
            } => {
                let endpoint = match transport {
                    PluginTransport::Tcp { address } => PluginEndpoint::Tcp(address.clone()),
                    PluginTransport::Stdio { command } => PluginEndpoint::Command(command.clone()),
                };
                let geometry = Geometry::new(height, width, steps);
                Box::new(RemoteDenoiser::connect(
                    endpoint,
                    geometry,
                    Duration::from_millis(*timeout_ms),
                )?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub respacing: usize,
    pub chains: usize,
    pub refine_steps: usize,
    pub ksg_noise: bool,
    pub refine: bool,
    pub seed: u64,
    pub keep_samples: bool,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            respacing: d.respacing,
            chains: d.chains,
            refine_steps: d.refine_steps,
            ksg_noise: d.ksg_noise,
            refine: d.refine,
            seed: d.seed,
            keep_samples: d.keep_samples,
        }
    }
}

impl SamplerSpec {
    pub fn to_config(&self, total_steps: usize) -> SamplerConfig {
        SamplerConfig {
            total_steps,
            respacing: self.respacing,
            chains: self.chains,
            refine_steps: self.refine_steps,
            ksg_noise: self.ksg_noise,
            refine: self.refine,
            keep_samples: self.keep_samples,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSpec {
    /// Defaults to the ground truth's largest magnitude.
    pub data_range: Option<f64>,
    pub ssim_window: usize,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
}

impl Default for MetricSpec {
    fn default() -> Self {
        let p = ksgdiffuse::metrics::SsimParams::default();
        Self {
            data_range: None,
            ssim_window: p.window,
            ssim_k1: p.k1,
            ssim_k2: p.k2,
        }
    }
}

impl MetricSpec {
    pub fn ssim_params(&self) -> ksgdiffuse::metrics::SsimParams {
        ksgdiffuse::metrics::SsimParams {
            window: self.ssim_window,
            k1: self.ssim_k1,
            k2: self.ssim_k2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Wall-clock timings are the only non-reproducible report field.
    pub timings: bool,
    pub png: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            timings: true,
            png: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleSpec,
    pub sampler: SamplerSpec,
    pub mask: MaskSpec,
    pub denoiser: DenoiserSpec,
    /// CIM1 image (treated as ground truth) or k-space measurement.
    pub input: Option<PathBuf>,
    /// Reference image for metrics when the input is k-space.
    pub ground_truth: Option<PathBuf>,
    pub output: PathBuf,
    pub metrics: MetricSpec,
    pub report: OutputSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::from(e).context(path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    /// Makes relative paths relative to `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.input.iter_mut().for_each(fix);
        self.ground_truth.iter_mut().for_each(fix);
        self.mask.path.iter_mut().for_each(fix);
        if let DenoiserSpec::Gaussian { mu: Some(p), .. } = &mut self.denoiser {
            fix(p);
        }
        if !self.output.as_os_str().is_empty() {
            fix(&mut self.output);
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        self.sampler.to_config(self.schedule.steps())
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Failure::invalid("no input file given"))
    }

    pub fn output_dir(&self) -> PathBuf {
        if self.output.as_os_str().is_empty() {
            PathBuf::from("out")
        } else {
            self.output.clone()
        }
    }
}
