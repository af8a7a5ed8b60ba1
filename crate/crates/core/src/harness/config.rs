use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::FitOptions;
use crate::error::{Error, Result};
use crate::integrator::StepperConfig;
use crate::model::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub half_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_points: 2048,
            half_length: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// `a·exp(-(x-c)²/(2σ²))`
    Gaussian,
    /// `-a·(x-c)·exp(-(x-c)²/(2σ²))`, minimum slope `-a` at the center.
    DGaussian,
    /// `a·sech²((x-c)/σ)`
    SechSquared,
    /// Samples supplied in `values`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub family: Family,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub center: f64,
    /// Rescale so that the minimum of `h0_x` equals this value.
    #[serde(default)]
    pub target_m0: Option<f64>,
    /// Rescale so that `m0` equals this multiple of the breaking threshold
    /// evaluated, self-consistently, on the rescaled datum.
    #[serde(default)]
    pub threshold_multiple: Option<f64>,
    /// Grid samples for the `Custom` family.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            family: Family::DGaussian,
            amplitude: 1.0,
            width: 1.0,
            center: 0.0,
            target_m0: None,
            threshold_multiple: None,
            values: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum C0Mode {
    /// `C0 = safety · max |∂x [L, L h0_x]h0|`.
    Empirical { safety: f64 },
    /// `C0 = C · ‖h0‖²`.
    Explicit { constant: f64 },
}

impl Default for C0Mode {
    fn default() -> Self {
        C0Mode::Empirical {
            safety: crate::criteria::DEFAULT_C0_SAFETY,
        }
    }
}

/// Full description of one experiment, read from and echoed to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub initial: InitialDataSpec,
    #[serde(default)]
    pub c0_mode: C0Mode,
    /// When set, the breaking threshold becomes this multiple of `|m0|`
    /// instead of `stepper.slope_blowup_threshold`.
    #[serde(default)]
    pub blowup_growth_factor: Option<f64>,
    #[serde(default)]
    pub fit: FitOptions,
    /// Write every snapshot to disk; when false only the first and last.
    #[serde(default = "yes")]
    pub write_snapshots: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_model() -> ModelKind {
    ModelKind::Nonlocal
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec::default(),
            stepper: StepperConfig::default(),
            model: default_model(),
            initial: InitialDataSpec::default(),
            c0_mode: C0Mode::default(),
            blowup_growth_factor: None,
            fit: FitOptions::default(),
            write_snapshots: true,
            output_dir: default_output(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.stepper.validate()?;
        let init = &self.initial;
        if !(init.width > 0.0 && init.width.is_finite()) {
            return Err(Error::Config(format!("width must be positive, got {}", init.width)));
        }
        if init.target_m0.is_some() && init.threshold_multiple.is_some() {
            return Err(Error::Config(
                "target_m0 and threshold_multiple are mutually exclusive".into(),
            ));
        }
        if let Some(k) = init.threshold_multiple {
            if !(k >= 1.0) {
                return Err(Error::Config(format!(
                    "threshold_multiple must be at least 1, got {k}"
                )));
            }
        }
        match self.c0_mode {
            C0Mode::Empirical { safety } if !(safety >= 1.0) => {
                return Err(Error::Config(format!("C0 safety must be >= 1, got {safety}")))
            }
            C0Mode::Explicit { constant } if !(constant > 0.0) => {
                return Err(Error::Config(format!("C must be positive, got {constant}")))
            }
            _ => {}
        }
        if let Some(f) = self.blowup_growth_factor {
            if !(f > 1.0) {
                return Err(Error::Config(format!(
                    "blowup_growth_factor must exceed 1, got {f}"
                )));
            }
        }
        Ok(())
    }
}
