//! Experiment configuration (JSON, schema version 1).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::RegularizerForm;
use crate::error::{Error, Result};
use crate::linalg::{BoxSet, Vector};
use crate::model::{lift, synth_slm_standin, LiftedModel, StateSpace, Structure};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Samples per trial, `N`.
    pub horizon: usize,
    /// Trials, `T`.
    pub iterations: usize,
    /// `[lower, upper]` applied to every sample; `null` for no constraint.
    pub input_bounds: Option<[f64; 2]>,
    pub gamma0: f64,
    pub uncertainty: UncertaintyMode,
    pub adaptive_emulation: AdaptiveEmulation,
    pub structure: Structure,
    pub step: StepConfig,
    pub regularization: Regularization,
    /// `Q = q I`.
    pub output_weight: f64,
    pub reference: ReferenceSpec,
    pub model: ModelSource,
    /// Constant initial input; defaults to the lower bound (or 0 without bounds).
    pub initial_input: Option<f64>,
    pub benchmark_regularizer: BenchmarkRegularizer,
    pub adaptive_regularizer: RegularizerForm,
    /// Box points used for the Lipschitz estimate.
    pub lipschitz_samples: usize,
    /// Number of iterations (evenly spread) at which the box sample is scanned;
    /// iterates and optima are scanned at every iteration.
    pub lipschitz_scan_iterations: usize,
    /// Horizon stride for the static bound; `None` picks 1 up to 500
    /// iterations and `ceil(T / 500)` beyond. `Some(0)` disables it.
    pub static_stride: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            horizon: 100,
            iterations: 500,
            input_bounds: Some([75.0, 165.0]),
            gamma0: 0.5,
            uncertainty: UncertaintyMode::default(),
            adaptive_emulation: AdaptiveEmulation::default(),
            structure: Structure::default(),
            step: StepConfig::default(),
            regularization: Regularization::default(),
            output_weight: 100.0,
            reference: ReferenceSpec::default(),
            model: ModelSource::default(),
            initial_input: None,
            benchmark_regularizer: BenchmarkRegularizer::default(),
            adaptive_regularizer: RegularizerForm::default(),
            lipschitz_samples: crate::regret::DEFAULT_LIPSCHITZ_SAMPLES,
            lipschitz_scan_iterations: 50,
            static_stride: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyMode {
    /// One draw at `γ₀`, reused every trial (iteration-invariant plant).
    FixedDraw,
    /// A fresh draw at `γ₀` every trial.
    #[default]
    PerIteration,
    /// Shrinking uncertainty `γ_k = γ₀ k^{-1/2}` with constant step.
    Adaptive,
}

/// How the adaptive mode realizes `γ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveEmulation {
    /// Fixed model `M`, plant `H_k = M (I + Δ_k)` with `||Δ_k||_W <= γ_k`.
    #[default]
    ShrinkingUncertainty,
    /// Fixed plant `H = M (I + Δ_1)`, model estimates `M_k = H (I + Δ_k)^{-1}`.
    ModelUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Explicit `α₀`; otherwise `alpha0_fraction × 2/(1+wγ)`.
    pub alpha0: Option<f64>,
    pub alpha0_fraction: f64,
    /// Decay exponent `c` in `α_k = α₀ k^{-c}`.
    pub decay: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            alpha0: None,
            alpha0_fraction: 0.9,
            decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Regularization {
    /// Smallest `ρ = 1e-6 · 2^j` with `wγ <= margin`.
    Auto {
        margin: f64,
    },
    Fixed {
        rho: f64,
    },
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Auto { margin: 0.9 }
    }
}

/// Regularizer of the benchmark cost `f_k` in adaptive runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkRegularizer {
    /// The fixed `R = ρI`.
    #[default]
    Fixed,
    /// The controller's `R_k`.
    Adapted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Raised-cosine ramp from the steady-state output at `start_input` to
    /// `end_fraction` of the steady-state output at `end_input`, reached after
    /// `ramp_fraction` of the horizon and then held.
    RaisedCosine {
        start_input: f64,
        end_input: f64,
        end_fraction: f64,
        ramp_fraction: f64,
    },
    /// Nominal model response to a raised-cosine input ramp from
    /// `start_input` to `end_input`, reached after `ramp_fraction` of the
    /// horizon and then held. Reachable by construction.
    InputResponse {
        start_input: f64,
        end_input: f64,
        ramp_fraction: f64,
    },
    Constant {
        value: f64,
    },
    Samples {
        values: Vec<f64>,
    },
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::InputResponse {
            start_input: 85.0,
            end_input: 150.0,
            ramp_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSource {
    /// Built-in stand-in model; seed 0 is the committed one.
    Standin { seed: u64 },
    /// State-space JSON with `a`, `b`, `c`; relative paths resolve against
    /// the config file's directory.
    File { path: PathBuf },
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Standin { seed: 0 }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        if let ModelSource::File { path: model } = &mut cfg.model {
            if model.is_relative() {
                if let Some(dir) = path.parent() {
                    *model = dir.join(&*model);
                }
            }
        }
        Ok(cfg)
    }

    /// Structural checks that need no linear algebra; the contraction
    /// conditions are checked when the run is set up.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.horizon == 0 || self.iterations == 0 {
            return fail("horizon and iterations must be positive".into());
        }
        if let Some([lo, hi]) = self.input_bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return fail(format!(
                    "input_bounds [{lo}, {hi}] must be finite with lower <= upper"
                ));
            }
        }
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return fail(format!(
                "gamma0 must be finite and nonnegative, got {}",
                self.gamma0
            ));
        }
        if !(0.0..1.0).contains(&self.step.decay) {
            return fail(format!(
                "step decay c must lie in [0, 1), got {}",
                self.step.decay
            ));
        }
        if self.uncertainty == UncertaintyMode::Adaptive && self.step.decay != 0.0 {
            return fail("adaptive mode uses a constant step; set step.decay to 0".into());
        }
        if !(self.step.alpha0_fraction > 0.0 && self.step.alpha0_fraction < 1.0) {
            return fail(format!(
                "alpha0_fraction must lie in (0, 1), got {}",
                self.step.alpha0_fraction
            ));
        }
        if !(self.output_weight.is_finite() && self.output_weight > 0.0) {
            return fail(format!(
                "output_weight must be positive, got {}",
                self.output_weight
            ));
        }
        match self.regularization {
            Regularization::Auto { margin } if !(margin > 0.0 && margin < 1.0) => {
                return fail(format!(
                    "regularization margin must lie in (0, 1), got {margin}"
                ));
            }
            Regularization::Fixed { rho } if !(rho.is_finite() && rho >= 0.0) => {
                return fail(format!(
                    "regularization rho must be finite and nonnegative, got {rho}"
                ));
            }
            _ => {}
        }
        match &self.reference {
            ReferenceSpec::RaisedCosine { ramp_fraction, .. }
            | ReferenceSpec::InputResponse { ramp_fraction, .. }
                if !(*ramp_fraction > 0.0 && *ramp_fraction <= 1.0) =>
            {
                return fail(format!(
                    "ramp_fraction must lie in (0, 1], got {ramp_fraction}"
                ));
            }
            ReferenceSpec::Samples { values } if values.len() != self.horizon => {
                return fail(format!(
                    "reference has {} samples but the horizon is {}",
                    values.len(),
                    self.horizon
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn input_set(&self) -> Result<BoxSet> {
        match self.input_bounds {
            Some([lo, hi]) => BoxSet::uniform(self.horizon, lo, hi),
            None => Ok(BoxSet::unbounded(self.horizon)),
        }
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        match &self.model {
            ModelSource::Standin { seed } => Ok(synth_slm_standin(*seed)),
            ModelSource::File { path } => StateSpace::from_json_file(path),
        }
    }

    pub fn lifted_model(&self) -> Result<LiftedModel> {
        lift(&self.state_space()?, self.horizon)
    }

    pub fn reference_signal(&self, ss: &StateSpace) -> Vector {
        let n = self.horizon;
        let ramp_of = |fraction: f64| ((n as f64 * fraction).floor() as usize).max(1);
        let raised = |lo: f64, hi: f64, ramp: usize| {
            move |t: usize| {
                let s = t.min(ramp) as f64 / ramp as f64;
                lo + (hi - lo) * 0.5 * (1.0 - (std::f64::consts::PI * s).cos())
            }
        };
        match &self.reference {
            ReferenceSpec::RaisedCosine {
                start_input,
                end_input,
                end_fraction,
                ramp_fraction,
            } => {
                let dc = ss.dc_gain();
                let f = raised(
                    dc * start_input,
                    end_fraction * dc * end_input,
                    ramp_of(*ramp_fraction),
                );
                Vector::from_fn(n, |t, _| f(t))
            }
            ReferenceSpec::InputResponse {
                start_input,
                end_input,
                ramp_fraction,
            } => {
                let f = raised(*start_input, *end_input, ramp_of(*ramp_fraction));
                let profile: Vec<f64> = (0..n).map(f).collect();
                Vector::from_vec(ss.simulate(&profile))
            }
            ReferenceSpec::Constant { value } => Vector::from_element(n, *value),
            ReferenceSpec::Samples { values } => Vector::from_column_slice(values),
        }
    }

    pub fn initial_input_vector(&self) -> Vector {
        let value = self
            .initial_input
            .unwrap_or_else(|| self.input_bounds.map_or(0.0, |[lo, _]| lo));
        Vector::from_element(self.horizon, value)
    }

    /// Static-bound stride actually used.
    pub fn effective_static_stride(&self) -> usize {
        match self.static_stride {
            Some(s) => s,
            None if self.iterations <= 500 => 1,
            None => self.iterations.div_ceil(500),
        }
    }
}
