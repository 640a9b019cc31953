use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::commands::reconstruct::{build_denoiser, prepare, run, score};
use crate::config::RunConfig;
use crate::error::{CliResult, Failure, FailureKind};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub k: usize,
    #[serde(rename = "N")]
    pub chains: usize,
    pub ksg_noise: bool,
    pub refine: bool,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match (self.ksg_noise, self.refine) {
            (false, false) => "nonoise",
            (false, true) => "nonoise_refine",
            (true, false) => "norefine",
            (true, true) => "refine",
        }
    }
}

/// `nonoise` at k=40 and `norefine` at k in {8, 40} over N in {1, 2, 5, 10},
/// plus `refine` at k in {8, 40} with N=10.
pub fn default_sweep() -> Vec<Variant> {
    let ns = [1, 2, 5, 10];
    let mut out = Vec::new();
    for &n in &ns {
        out.push(Variant { k: 40, chains: n, ksg_noise: false, refine: false });
    }
    for k in [8, 40] {
        for &n in &ns {
            out.push(Variant { k, chains: n, ksg_noise: true, refine: false });
        }
    }
    for k in [8, 40] {
        out.push(Variant { k, chains: 10, ksg_noise: true, refine: true });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub variant: String,
    pub k: usize,
    #[serde(rename = "N")]
    pub chains: usize,
    pub ksg_noise: bool,
    pub refine: bool,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub k: usize,
    #[serde(rename = "N")]
    pub chains: usize,
    pub ksg_noise: bool,
    pub refine: bool,
    pub seeds: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub struct Ablation {
    pub summary: Vec<SummaryRow>,
    pub per_seed: Vec<SeedRow>,
}

/// Runs every variant for seeds `base.sampler.seed + 0..seeds`. The mask and
/// the measurement are shared by all cells.
pub fn ablate(base: &RunConfig, sweep: &[Variant], seeds: usize) -> CliResult<Ablation> {
    if sweep.is_empty() || seeds == 0 {
        return Err(Failure::invalid("the sweep needs at least one variant and one seed"));
    }
    let problem = prepare(base)?;
    let truth = problem.truth.as_ref().ok_or_else(|| {
        Failure::invalid("ablation needs a ground truth: pass an image input or ground_truth")
    })?;
    let denoiser = build_denoiser(base, &problem)?;
    let mut summary = Vec::with_capacity(sweep.len());
    let mut per_seed = Vec::with_capacity(sweep.len() * seeds);
    for v in sweep {
        let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
        for i in 0..seeds as u64 {
            let mut sampler = base.sampler_config();
            sampler.respacing = v.k;
            sampler.chains = v.chains;
            sampler.ksg_noise = v.ksg_noise;
            sampler.refine = v.refine;
            sampler.keep_samples = false;
            sampler.seed = base.sampler.seed + i;
            let result = run(&problem, denoiser.as_ref(), &sampler)?;
            let m = score(truth, &result.mean, &base.metrics)?;
            per_seed.push(SeedRow {
                variant: v.name().into(),
                k: v.k,
                chains: v.chains,
                ksg_noise: v.ksg_noise,
                refine: v.refine,
                seed: sampler.seed,
                psnr: m.psnr,
                ssim: m.ssim,
            });
            psnrs.push(m.psnr);
            ssims.push(m.ssim);
        }
        let (psnr_mean, psnr_std) = mean_std(&psnrs);
        let (ssim_mean, ssim_std) = mean_std(&ssims);
        summary.push(SummaryRow {
            variant: v.name().into(),
            k: v.k,
            chains: v.chains,
            ksg_noise: v.ksg_noise,
            refine: v.refine,
            seeds,
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
        });
    }
    Ok(Ablation { summary, per_seed })
}

pub fn load_sweep(path: &Path) -> CliResult<Vec<Variant>> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Failure::new(FailureKind::Io, e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| Failure::new(FailureKind::Io, e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    io::write_bytes(path, &to_csv(rows)?)
}
