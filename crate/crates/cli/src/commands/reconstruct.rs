use std::path::Path;

use ksgdiffuse::kspace::format::{Cim, Domain};
use ksgdiffuse::metrics::{psnr, ssim_with};
use ksgdiffuse::sampler::consistency_error;
use ksgdiffuse::{
    apply_mask, c2f_reconstruct, fft2c, ComplexImage, Denoiser, KSpace, Mask, ReconResult,
    SamplerConfig, Schedule,
};

use crate::config::{MetricSpec, RunConfig};
use crate::error::{CliResult, Failure, FailureKind};
use crate::io;
use crate::report::{
    Consistency, InputSummary, MaskSummary, Metrics, Outputs, Report, CONSISTENCY_TOLERANCE,
    REPORT_FORMAT,
};

/// Everything a reconstruction needs besides the denoiser.
pub struct Problem {
    pub x_obs: KSpace,
    pub mask: Mask,
    pub schedule: Schedule,
    pub truth: Option<ComplexImage>,
    pub domain: Domain,
}

impl Problem {
    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }
}

pub fn prepare(config: &RunConfig) -> CliResult<Problem> {
    let input = config.input()?;
    let cim = io::read_cim_file(input)?;
    let domain = cim.domain();
    let (h, w) = cim.grid().shape();
    let mask = config.mask.build(h, w)?;
    let (x_obs, truth) = match cim {
        Cim::Image(img) => (apply_mask(&fft2c(&img), &mask)?, Some(img)),
        Cim::KSpace(k) => {
            let truth = match &config.ground_truth {
                Some(path) => {
                    let img = io::read_image_file(path)?;
                    if img.shape() != (h, w) {
                        return Err(Failure::invalid(format!(
                            "ground truth {} is {:?} but the input is {:?}",
                            path.display(),
                            img.shape(),
                            (h, w)
                        )));
                    }
                    Some(img)
                }
                None => None,
            };
            (apply_mask(&k, &mask)?, truth)
        }
    };
    let schedule = config.schedule.build()?;
    config.sampler_config().validate()?;
    Ok(Problem {
        x_obs,
        mask,
        schedule,
        truth,
        domain,
    })
}

pub fn build_denoiser(config: &RunConfig, problem: &Problem) -> CliResult<Box<dyn Denoiser>> {
    let (h, w) = problem.shape();
    config.denoiser.build(h, w, problem.schedule.num_steps())
}

pub fn score(truth: &ComplexImage, mean: &ComplexImage, spec: &MetricSpec) -> CliResult<Metrics> {
    let range = spec.data_range.unwrap_or_else(|| truth.magnitude().max());
    Ok(Metrics {
        psnr: psnr(truth, mean, Some(range))?,
        ssim: ssim_with(truth, mean, Some(range), spec.ssim_params())?,
        data_range: range,
    })
}

pub fn run(problem: &Problem, denoiser: &dyn Denoiser, sampler: &SamplerConfig) -> CliResult<ReconResult> {
    c2f_reconstruct(&problem.x_obs, &problem.mask, &problem.schedule, denoiser, sampler)
        .map_err(Failure::from)
}

fn sample_name(i: usize) -> String {
    format!("samples/sample_{i:04}.cim")
}

/// Runs one reconstruction and writes every artifact into the output
/// directory; returns the report that was written.
pub fn reconstruct(config: &RunConfig) -> CliResult<Report> {
    let problem = prepare(config)?;
    let denoiser = build_denoiser(config, &problem)?;
    let result = run(&problem, denoiser.as_ref(), &config.sampler_config())?;
    let out = config.output_dir();
    write_outputs(config, &problem, &result, &out)
}

fn write_outputs(
    config: &RunConfig,
    problem: &Problem,
    result: &ReconResult,
    out: &Path,
) -> CliResult<Report> {
    if !result.mean.is_finite() {
        return Err(Failure::new(FailureKind::Numerical, "reconstruction is not finite"));
    }
    io::write_cim_file(&out.join("mean.cim"), &result.mean, Domain::Image)?;
    let variance = out.join("variance.f32");
    io::write_f32_grid(&variance, &result.variance, "variance of |y| across coarse samples")?;

    let samples = match &result.samples {
        Some(samples) => {
            let mut names = Vec::with_capacity(samples.len());
            for (i, s) in samples.iter().enumerate() {
                let name = sample_name(i);
                io::write_cim_file(&out.join(&name), s, Domain::Image)?;
                names.push(name);
            }
            Some(names)
        }
        None => None,
    };

    let png = if config.report.png {
        io::write_png(&out.join("mean.png"), &result.mean.magnitude())?;
        io::write_png(&out.join("variance.png"), &result.variance)?;
        Some(vec!["mean.png".to_string(), "variance.png".to_string()])
    } else {
        None
    };

    let max_error = consistency_error(&result.mean, &problem.x_obs, &problem.mask)?;
    let metrics = match &problem.truth {
        Some(truth) => Some(score(truth, &result.mean, &config.metrics)?),
        None => None,
    };
    let (h, w) = problem.shape();
    let meta = &result.metadata;
    let report = Report {
        format: REPORT_FORMAT.into(),
        config: config.clone(),
        input: InputSummary {
            path: config.input()?.display().to_string(),
            domain: match problem.domain {
                Domain::Image => "image".into(),
                Domain::KSpace => "kspace".into(),
            },
            height: h,
            width: w,
            ground_truth: problem.truth.is_some(),
        },
        mask: MaskSummary {
            source: match &config.mask.path {
                Some(p) => p.display().to_string(),
                None => format!("{:?}", config.mask.kind).to_lowercase(),
            },
            sampled: problem.mask.sampled_count(),
            total: h * w,
            realized_acceleration: problem.mask.realized_acceleration(),
        },
        schedule: meta.schedule.clone(),
        coarse_schedule: meta.coarse_schedule.clone(),
        coarse_steps: meta.coarse_steps,
        speedup_factor: meta.speedup_factor,
        timings: config.report.timings.then(|| meta.timings.clone()),
        consistency: Consistency {
            max_error,
            tolerance: CONSISTENCY_TOLERANCE,
            consistent: max_error <= CONSISTENCY_TOLERANCE,
        },
        metrics,
        outputs: Outputs {
            mean: "mean.cim".into(),
            variance: "variance.f32".into(),
            variance_sidecar: "variance.json".into(),
            samples,
            png,
        },
    };
    io::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
