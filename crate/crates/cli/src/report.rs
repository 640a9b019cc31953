//! `report.json`, versioned as `ksgdiffuse-report/1`.

use ksgdiffuse::sampler::PhaseTimings;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::RunConfig;

pub const REPORT_FORMAT: &str = "ksgdiffuse-report/1";

/// Largest tolerated `|M·F(mean) - x_obs|`.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-4;

/// JSON has no infinity; identical images report PSNR as the string `"inf"`.
pub mod psnr_value {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "psnr_value")]
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub path: String,
    pub domain: String,
    pub height: usize,
    pub width: usize,
    pub ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub source: String,
    pub sampled: usize,
    pub total: usize,
    pub realized_acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub max_error: f64,
    pub tolerance: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub mean: String,
    pub variance: String,
    pub variance_sidecar: String,
    pub samples: Option<Vec<String>>,
    pub png: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub config: RunConfig,
    pub input: InputSummary,
    pub mask: MaskSummary,
    pub schedule: String,
    pub coarse_schedule: String,
    pub coarse_steps: usize,
    pub speedup_factor: f64,
    pub timings: Option<PhaseTimings>,
    pub consistency: Consistency,
    pub metrics: Option<Metrics>,
    pub outputs: Outputs,
}
