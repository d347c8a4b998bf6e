//! Run configuration and end-to-end orchestration: which frontend, which
//! compression head, and the geometry knobs, with JSON (de)serialization for
//! the CLI's `--config` file.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compression::{lmtbn_forward, pcen, BnMode, LmtbnParams, PcenParams};
use crate::error::{Error, Result};
use crate::filterbank::{init_mel_gabor, plan_groups, FilterbankParams, GroupPlan, PlanConfig};
use crate::pipeline::{eleaf_forward, leaf_forward, AudioBatch, FeatureMap};
use crate::Sample;

/// Which filterbank executor runs: the dense reference (`leaf`) or the
/// grouped truncated/strided variant (`eleaf`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frontend {
    Leaf,
    Eleaf,
}

impl fmt::Display for Frontend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frontend::Leaf => "leaf",
            Frontend::Eleaf => "eleaf",
        })
    }
}

impl FromStr for Frontend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf" => Ok(Frontend::Leaf),
            "eleaf" => Ok(Frontend::Eleaf),
            other => Err(Error::Argument(format!(
                "unknown pipeline '{other}' (expected 'leaf' or 'eleaf')"
            ))),
        }
    }
}

/// Which compression head follows the pooled energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Per-channel energy normalization.
    Pcen,
    /// Log compression, median subtraction, temporal batch norm.
    Lmtbn,
    /// Raw pooled energies.
    None,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Pcen => "pcen",
            Head::Lmtbn => "lmtbn",
            Head::None => "none",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcen" => Ok(Head::Pcen),
            "lmtbn" => Ok(Head::Lmtbn),
            "none" => Ok(Head::None),
            other => Err(Error::Argument(format!(
                "unknown compression '{other}' (expected 'pcen', 'lmtbn', or 'none')"
            ))),
        }
    }
}

/// Every learnable of the model: the filterbank plus both compression heads
/// (whichever head is inactive simply goes unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub bank: FilterbankParams,
    pub pcen: PcenParams,
    pub lmtbn: LmtbnParams,
}

impl ModelParams {
    /// Mel-spaced filterbank initialization with standard head parameters.
    pub fn init(n_filters: usize, fmin: f64, fmax: f64, sample_rate: u32) -> Result<Self> {
        Ok(ModelParams {
            bank: init_mel_gabor(n_filters, fmin, fmax, sample_rate)?,
            pcen: PcenParams::new(n_filters),
            lmtbn: LmtbnParams::new(n_filters),
        })
    }
}

/// A complete run description. All fields have defaults, so a JSON config
/// may set any subset; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub compression: Head,
    /// Highest filter center frequency in Hz.
    pub fmax: f64,
    /// Lowest filter center frequency in Hz.
    pub fmin: f64,
    /// Output frame spacing in samples.
    pub hop: usize,
    pub n_filters: usize,
    /// Number of filter groups for the grouped frontend.
    pub n_groups: usize,
    pub pipeline: Frontend,
    pub sample_rate: u32,
    /// Seed for anything stochastic downstream (checks, benches).
    pub seed: u64,
    /// Kernel-size factor: kernels cover `size_factor` envelope widths.
    pub size_factor: f64,
    /// Stride slack factor relative to each filter's aliasing limit.
    pub stride_factor: f64,
    /// Dense kernel length and pooling support, odd.
    pub window_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            compression: Head::Lmtbn,
            fmax: 7800.0,
            fmin: 60.0,
            hop: 160,
            n_filters: 40,
            n_groups: 4,
            pipeline: Frontend::Eleaf,
            sample_rate: 16000,
            seed: 0,
            size_factor: 4.75,
            stride_factor: 1.0,
            window_max: 401,
        }
    }
}

impl RunConfig {
    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            window_max: self.window_max,
            hop: self.hop,
            size_factor: self.size_factor,
            stride_factor: self.stride_factor,
            n_groups: self.n_groups,
        }
    }

    /// Initializes parameters and the group plan this config describes. The
    /// dense frontend gets the reference plan (full-length kernels, stride 1).
    pub fn build(&self) -> Result<(ModelParams, GroupPlan)> {
        let params = ModelParams::init(self.n_filters, self.fmin, self.fmax, self.sample_rate)?;
        let plan = match self.pipeline {
            Frontend::Leaf => GroupPlan::reference(self.n_filters, self.window_max, self.hop),
            Frontend::Eleaf => plan_groups(&params.bank, &self.plan_config())?,
        };
        Ok((params, plan))
    }

    /// Loads a config from a JSON string, filling unset fields with defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Runs the configured frontend and compression head over a batch.
///
/// `params` is mutable because training-mode batch norm updates its running
/// statistics; the other heads leave it untouched.
pub fn run_pipeline<S: Sample>(
    audio: &AudioBatch<S>,
    config: &RunConfig,
    params: &mut ModelParams,
    plan: &GroupPlan,
    bn_mode: BnMode,
) -> Result<FeatureMap<S>> {
    if audio.sample_rate != config.sample_rate {
        return Err(Error::Config(format!(
            "audio is {} Hz but the run expects {} Hz",
            audio.sample_rate, config.sample_rate
        )));
    }
    let energies = match config.pipeline {
        Frontend::Leaf => leaf_forward(audio, &params.bank, config.window_max, config.hop)?,
        Frontend::Eleaf => eleaf_forward(audio, &params.bank, plan)?,
    };
    match config.compression {
        Head::Pcen => pcen(&energies, &params.pcen),
        Head::Lmtbn => lmtbn_forward(&energies, &mut params.lmtbn, bn_mode),
        Head::None => Ok(energies),
    }
}
