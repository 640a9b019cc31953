//! Command-line driver for k-space guided diffusion reconstruction.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{ablate, reconstruct, schedule, tools};
use crate::config::{
    DenoiserSpec, MaskKind, MetricSpec, PluginTransport, RunConfig, ScheduleSpec,
};
use crate::error::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "ksgdiffuse", version, about = "K-space guided diffusion MRI reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise schedule tables.
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Undersampling masks.
    #[command(subcommand)]
    Mask(MaskCommand),
    /// Coarse-to-fine reconstruction of one measurement.
    Reconstruct(ReconstructArgs),
    /// PSNR sweep over sampler variants and seeds.
    Ablate(AblateArgs),
    /// PSNR and SSIM between two CIM1 files.
    Metrics(MetricsArgs),
    /// Exact posterior for a Gaussian prior.
    Oracle(OracleArgs),
    /// Gaussian-prior test phantom.
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScheduleKindArg {
    Cosine,
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum ScheduleCommand {
    /// Print beta, alpha, alpha_bar and sigma² as JSON.
    Dump {
        #[arg(long, value_enum, default_value = "cosine")]
        kind: ScheduleKindArg,
        #[arg(long, short = 'T', default_value_t = 4000)]
        steps: usize,
        #[arg(long)]
        respace: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        beta_start: f64,
        #[arg(long, default_value_t = 0.02)]
        beta_end: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskKindArg {
    Cartesian,
    Gaussian,
}

impl From<MaskKindArg> for MaskKind {
    fn from(k: MaskKindArg) -> Self {
        match k {
            MaskKindArg::Cartesian => MaskKind::Cartesian,
            MaskKindArg::Gaussian => MaskKind::Gaussian,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum MaskCommand {
    /// Write an MSK1 column mask.
    Make {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, value_enum, default_value = "cartesian")]
        kind: MaskKindArg,
        #[arg(long, short = 'R')]
        acceleration: f64,
        #[arg(long)]
        center_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DenoiserArg {
    Gaussian,
    Zero,
    Plugin,
}

/// Flags that override fields of the JSON run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct RunOverrides {
    /// JSON run configuration; flags take precedence.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, short = 'T')]
    pub steps: Option<usize>,
    #[arg(long, short = 'k')]
    pub respacing: Option<usize>,
    #[arg(long, short = 'N')]
    pub chains: Option<usize>,
    #[arg(long)]
    pub refine_steps: Option<usize>,
    #[arg(long)]
    pub ksg_noise: Option<bool>,
    #[arg(long)]
    pub refine: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub keep_samples: bool,
    #[arg(long, value_enum)]
    pub mask_kind: Option<MaskKindArg>,
    #[arg(long, short = 'R')]
    pub acceleration: Option<f64>,
    #[arg(long)]
    pub center_fraction: Option<f64>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    /// Stored MSK1 mask to use instead of generating one.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub denoiser: Option<DenoiserArg>,
    /// Prior mean image for the Gaussian denoiser.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long)]
    pub s2: Option<f64>,
    /// `host:port` of a plugin listening on TCP.
    #[arg(long, conflicts_with = "plugin_cmd")]
    pub plugin_tcp: Option<String>,
    /// Plugin program and arguments, spoken to over stdio. Consumes the rest
    /// of the command line, so it must come last.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub plugin_cmd: Option<Vec<String>>,
    #[arg(long)]
    pub plugin_timeout_ms: Option<u64>,
    #[arg(long)]
    pub data_range: Option<f64>,
    /// Leave wall-clock timings out of report.json.
    #[arg(long)]
    pub no_timings: bool,
    /// Also write 8-bit magnitude PNGs.
    #[arg(long)]
    pub png: bool,
}

impl RunOverrides {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.input {
            c.input = Some(v.clone());
        }
        if let Some(v) = &self.ground_truth {
            c.ground_truth = Some(v.clone());
        }
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
        if let Some(v) = self.steps {
            c.schedule.set_steps(v);
        }
        let s = &mut c.sampler;
        if let Some(v) = self.respacing {
            s.respacing = v;
        }
        if let Some(v) = self.chains {
            s.chains = v;
        }
        if let Some(v) = self.refine_steps {
            s.refine_steps = v;
        }
        if let Some(v) = self.ksg_noise {
            s.ksg_noise = v;
        }
        if let Some(v) = self.refine {
            s.refine = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        s.keep_samples |= self.keep_samples;
        if let Some(v) = self.mask_kind {
            c.mask.kind = v.into();
        }
        if let Some(v) = self.acceleration {
            c.mask.acceleration = v;
        }
        if let Some(v) = self.center_fraction {
            c.mask.center_fraction = Some(v);
        }
        if let Some(v) = self.mask_seed {
            c.mask.seed = v;
        }
        if let Some(v) = &self.mask {
            c.mask.path = Some(v.clone());
        }
        self.apply_denoiser(&mut c.denoiser)?;
        if let Some(v) = self.data_range {
            c.metrics.data_range = Some(v);
        }
        if self.no_timings {
            c.report.timings = false;
        }
        c.report.png |= self.png;
        Ok(c)
    }

    fn apply_denoiser(&self, spec: &mut DenoiserSpec) -> CliResult<()> {
        let transport = match (&self.plugin_tcp, &self.plugin_cmd) {
            (Some(a), _) => Some(PluginTransport::Tcp { address: a.clone() }),
            (None, Some(cmd)) => Some(PluginTransport::Stdio { command: cmd.clone() }),
            (None, None) => None,
        };
        let kind = self.denoiser.or(transport.as_ref().map(|_| DenoiserArg::Plugin));
        match kind {
            Some(DenoiserArg::Zero) => *spec = DenoiserSpec::Zero,
            Some(DenoiserArg::Gaussian) => {
                if !matches!(spec, DenoiserSpec::Gaussian { .. }) {
                    *spec = DenoiserSpec::Gaussian { mu: None, s2: 1.0 };
                }
            }
            Some(DenoiserArg::Plugin) => {
                let timeout = match spec {
                    DenoiserSpec::Plugin { timeout_ms, .. } => *timeout_ms,
                    _ => ksgdiffuse::denoiser::plugin::DEFAULT_TIMEOUT.as_millis() as u64,
                };
                let transport = match (transport, &*spec) {
                    (Some(t), _) => t,
                    (None, DenoiserSpec::Plugin { transport, .. }) => transport.clone(),
                    (None, _) => {
                        return Err(Failure::invalid(
                            "the plugin denoiser needs --plugin-tcp or --plugin-cmd",
                        ))
                    }
                };
                *spec = DenoiserSpec::Plugin { transport, timeout_ms: timeout };
            }
            None => {}
        }
        match spec {
            DenoiserSpec::Gaussian { mu, s2 } => {
                if let Some(v) = &self.mu {
                    *mu = Some(v.clone());
                }
                if let Some(v) = self.s2 {
                    *s2 = v;
                }
            }
            DenoiserSpec::Plugin { timeout_ms, .. } => {
                if let Some(v) = self.plugin_timeout_ms {
                    *timeout_ms = v;
                }
            }
            DenoiserSpec::Zero => {}
        }
        if (self.mu.is_some() || self.s2.is_some()) && !matches!(spec, DenoiserSpec::Gaussian { .. }) {
            return Err(Failure::invalid("--mu and --s2 only apply to the gaussian denoiser"));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// JSON list of `{k, N, ksg_noise, refine}`; the standard grid otherwise.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Summary CSV; stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-seed CSV.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub data_range: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub ssim_window: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Prior mean; zero when absent.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub s2: f64,
    #[arg(long)]
    pub mask: PathBuf,
    /// Measurement (k-space CIM1; image files are transformed first).
    #[arg(long)]
    pub kspace: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub variance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 4.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    #[arg(long, default_value_t = 1.0)]
    pub s2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground-truth image (one prior draw).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Prior mean image.
    #[arg(long)]
    pub mu_out: Option<PathBuf>,
    /// Also write the fully sampled k-space.
    #[arg(long)]
    pub kspace_out: Option<PathBuf>,
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Executes a parsed command, writing any textual result to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Schedule(ScheduleCommand::Dump {
            kind,
            steps,
            respace,
            beta_start,
            beta_end,
        }) => {
            let spec = match kind {
                ScheduleKindArg::Cosine => ScheduleSpec::Cosine { steps },
                ScheduleKindArg::Linear => ScheduleSpec::Linear { steps, beta_start, beta_end },
            };
            out.write_all(schedule::dump(&spec, respace)?.as_bytes())?;
        }
        Command::Mask(MaskCommand::Make {
            height,
            width,
            kind,
            acceleration,
            center_fraction,
            seed,
            out: path,
        }) => {
            let s = tools::mask_make(kind.into(), height, width, acceleration, center_fraction, seed, &path)?;
            print_json(out, &s)?;
        }
        Command::Reconstruct(args) => {
            let config = args.run.resolve()?;
            let report = reconstruct::reconstruct(&config)?;
            print_json(out, &report)?;
        }
        Command::Ablate(args) => {
            let config = args.run.resolve()?;
            let sweep = match &args.sweep {
                Some(p) => ablate::load_sweep(p)?,
                None => ablate::default_sweep(),
            };
            let result = ablate::ablate(&config, &sweep, args.seeds)?;
            if let Some(p) = &args.raw {
                ablate::write_csv(p, &result.per_seed)?;
            }
            match &args.csv {
                Some(p) => ablate::write_csv(p, &result.summary)?,
                None => out.write_all(&ablate::to_csv(&result.summary)?)?,
            }
        }
        Command::Metrics(args) => {
            let spec = MetricSpec {
                data_range: args.data_range,
                ssim_window: args.ssim_window,
                ..MetricSpec::default()
            };
            print_json(out, &tools::metrics(&args.reference, &args.test, &spec)?)?;
        }
        Command::Oracle(args) => {
            let s = tools::oracle(
                args.mu.as_deref(),
                args.s2,
                &args.mask,
                &args.kspace,
                &args.out,
                args.variance_out.as_deref(),
            )?;
            print_json(out, &s)?;
        }
        Command::Phantom(args) => {
            let spec = tools::PhantomSpec {
                height: args.height,
                width: args.width,
                amplitude: args.amplitude,
                radius: args.radius,
                phase: args.phase,
                s2: args.s2,
                seed: args.seed,
            };
            let (mu, truth) = tools::phantom(&spec)?;
            use ksgdiffuse::kspace::format::Domain;
            io::write_cim_file(&args.out, &truth, Domain::Image)?;
            if let Some(p) = &args.mu_out {
                io::write_cim_file(p, &mu, Domain::Image)?;
            }
            if let Some(p) = &args.kspace_out {
                io::write_cim_file(p, ksgdiffuse::fft2c(&truth).grid(), Domain::KSpace)?;
            }
        }
    }
    Ok(())
}
