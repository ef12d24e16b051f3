//! The trial loop: plant response, measurement, controller update and
//! regret bookkeeping.

use std::sync::Arc;

use crate::controller::{
    adaptive_regularizer, adaptive_step, choose_regularization, contraction_factor, max_step,
    pogd_step, preconditioner, w_factor, ControllerState, StepSchedule,
};
use crate::cost::{QuadCost, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{weighted_vec_norm, BoxSet, Matrix, SpdMatrix, Vector};
use crate::model::{
    model_from_plant, sample_uncertainty, true_plant, LiftedModel, Structure, UncertaintyDraw,
};
use crate::regret::{mismatch_sigma, optimum_drift, LipschitzEstimator, RegretTrace, StaticTerms};
use crate::rng::CounterRng;

use super::config::{
    AdaptiveEmulation, BenchmarkRegularizer, ExperimentConfig, Regularization, UncertaintyMode,
};

const STREAM_UNCERTAINTY: u64 = 1;
pub(crate) const STREAM_VALIDATION: u64 = 2;

/// Everything fixed before the first trial.
#[derive(Debug, Clone)]
pub struct Setup {
    pub nominal: LiftedModel,
    pub reference: Vector,
    pub q: SpdMatrix,
    pub r: Matrix,
    pub rho: f64,
    pub w: Arc<SpdMatrix>,
    pub w_factor: f64,
    pub max_step: f64,
    pub schedule: StepSchedule,
    pub set: BoxSet,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let ss = cfg.state_space()?;
        let nominal = crate::model::lift(&ss, cfg.horizon)?;
        let reference = cfg.reference_signal(&ss);
        let q = SpdMatrix::scaled_identity(cfg.horizon, cfg.output_weight)?;
        let rho = match cfg.regularization {
            Regularization::Auto { margin } => {
                choose_regularization(&nominal, &q, cfg.gamma0, margin)?
            }
            Regularization::Fixed { rho } => rho,
        };
        let n = cfg.horizon;
        let r = Matrix::identity(n, n) * rho;
        let w = preconditioner(&nominal, &q, &r)?;
        let w_factor = w_factor(&w, &nominal, &q)?;
        let max_step = max_step(w_factor, cfg.gamma0)?;
        let alpha0 = cfg
            .step
            .alpha0
            .unwrap_or(cfg.step.alpha0_fraction * max_step);
        let schedule = StepSchedule::new(alpha0, cfg.step.decay, w_factor, cfg.gamma0)?;
        Ok(Self {
            nominal,
            reference,
            q,
            r,
            rho,
            w: Arc::new(w),
            w_factor,
            max_step,
            schedule,
            set: cfg.input_set()?,
        })
    }
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RegretTrace,
    /// `γ_k` per trial.
    pub gamma: Vec<f64>,
    pub reference: Vector,
    /// Measured output of the last trial.
    pub final_output: Vector,
    /// Input applied in the last trial.
    pub final_input: Vector,
    /// Every applied input `x_k`, kept only when requested.
    pub inputs: Vec<Vector>,
    /// Trials whose adaptive regularizer `R_k` was indefinite.
    pub indefinite_regularizer: Vec<usize>,
    /// Largest `|f(x) - f(y)| / (L̄ ||x - y||_W)` over sampled pairs.
    pub lipschitz_check: Option<f64>,
    pub setup: Setup,
}

/// A mismatch factor stored compactly: `Δ` (or `(I + Δ)^{-1}`).
#[derive(Debug, Clone)]
enum Factor {
    Diagonal(Vector),
    Dense(Matrix),
}

impl Factor {
    fn apply(&self, x: &Vector) -> Vector {
        match self {
            Factor::Diagonal(d) => d.component_mul(x),
            Factor::Dense(m) => m * x,
        }
    }

    fn delta(draw: &UncertaintyDraw) -> Self {
        match draw.structure {
            Structure::Diagonal => Factor::Diagonal(draw.delta.diagonal()),
            Structure::Full => Factor::Dense(draw.delta.clone()),
        }
    }
}

/// What is needed to re-evaluate the controller's gradient estimate
/// `∇̃f_k(x)` at a later comparator.
#[derive(Debug, Clone)]
enum StoredStep {
    /// Model `M`, common regularizer, plant `M (I + Δ_k)`.
    Nominal(Option<Arc<Factor>>),
    /// Plant fixed, model `M_k = H F_k` with `F_k = (I + Δ_k)^{-1}`.
    ModelUpdate(Arc<Factor>),
}

struct GradientEstimates<'a> {
    setup: &'a Setup,
    plant: Option<LiftedModel>,
    controller_r: Matrix,
    form: crate::controller::RegularizerForm,
    steps: Vec<StoredStep>,
}

impl GradientEstimates<'_> {
    fn eval(&self, step: &StoredStep, x: &Vector) -> Vector {
        let s = self.setup;
        let (m, q) = (s.nominal.matrix(), s.q.matrix());
        match step {
            StoredStep::Nominal(delta) => {
                let hx = match delta {
                    Some(d) => m * (x + d.apply(x)),
                    None => m * x,
                };
                m.tr_mul(&(q * (hx - &s.reference))) + &self.controller_r * x
            }
            StoredStep::ModelUpdate(inv) => {
                let h = self
                    .plant
                    .as_ref()
                    .expect("model-update runs keep the plant")
                    .matrix();
                // M_k' v = F_k' H' v
                let mk_t = |v: &Vector| -> Vector {
                    let hv = h.tr_mul(v);
                    match &**inv {
                        Factor::Diagonal(d) => d.component_mul(&hv),
                        Factor::Dense(f) => f.tr_mul(&hv),
                    }
                };
                let residual = h * x - &s.reference;
                let mk_x = h * inv.apply(x);
                let gram_x = match self.form {
                    crate::controller::RegularizerForm::WithQ => mk_t(&(q * mk_x)),
                    crate::controller::RegularizerForm::Literal => mk_t(&mk_x),
                };
                mk_t(&(q * residual)) + s.w.matrix() * x - gram_x
            }
        }
    }

    fn eta_bar(&self, upto: usize, x: &Vector) -> f64 {
        self.steps[..upto]
            .iter()
            .map(|st| crate::regret::dual_norm(&self.eval(st, x), &self.setup.w))
            .fold(0.0, f64::max)
    }
}

/// Options that do not belong in the persisted config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_inputs: bool,
    /// Pairs sampled to validate `L̄` against the first and last costs.
    pub lipschitz_pairs: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(cfg, RunOptions::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutput> {
    let setup = Setup::new(cfg)?;
    let n = cfg.horizon;
    let t_max = cfg.iterations;
    let adaptive = cfg.uncertainty == UncertaintyMode::Adaptive;
    let model_update = adaptive && cfg.adaptive_emulation == AdaptiveEmulation::ModelUpdate;
    let w = Arc::clone(&setup.w);
    let set = setup.set.clone();
    let alpha0 = setup.schedule.alpha0;

    let mut rng = CounterRng::new(cfg.seed).fork(STREAM_UNCERTAINTY);
    let first_draw = sample_uncertainty(cfg.gamma0, &w, cfg.structure, &mut rng)?;
    let fixed_plant = match cfg.uncertainty {
        UncertaintyMode::FixedDraw => Some(true_plant(&setup.nominal, &first_draw)?),
        UncertaintyMode::Adaptive if model_update => Some(true_plant(&setup.nominal, &first_draw)?),
        _ => None,
    };
    let common_r = if adaptive && !model_update {
        adaptive_regularizer(&w, &setup.nominal, &setup.q, cfg.adaptive_regularizer)
    } else {
        setup.r.clone()
    };

    let stride = cfg.effective_static_stride();
    let mut estimates = GradientEstimates {
        setup: &setup,
        plant: fixed_plant.clone(),
        controller_r: common_r.clone(),
        form: cfg.adaptive_regularizer,
        steps: Vec::new(),
    };
    let fixed_factor = (cfg.uncertainty == UncertaintyMode::FixedDraw)
        .then(|| Arc::new(Factor::delta(&first_draw)));

    let mut trace = RegretTrace::default();
    let mut gamma = Vec::with_capacity(t_max);
    let mut inputs = Vec::new();
    let mut indefinite = Vec::new();
    let mut lipschitz = LipschitzEstimator::new(&set, cfg.lipschitz_samples)?;
    let scan_every = (t_max / cfg.lipschitz_scan_iterations.max(1)).max(1);
    let mut state = ControllerState::new(cfg.initial_input_vector(), Arc::clone(&w))?;
    let x1 = state.input.clone();
    let mut prev_star: Option<Vector> = None;
    let mut hindsight = QuadraticForm::zeros(n);
    let mut hindsight_x: Option<Vector> = None;
    let mut final_output = Vector::zeros(n);
    let mut final_input = Vector::zeros(n);
    let mut first_cost = None;
    let mut last_cost = None;

    for k in 1..=t_max {
        let step = (|| -> Result<()> {
            let gamma_k = if adaptive {
                cfg.gamma0 / (k as f64).sqrt()
            } else {
                cfg.gamma0
            };
            let draw = match cfg.uncertainty {
                UncertaintyMode::FixedDraw => None,
                _ if k == 1 => Some(first_draw.clone()),
                _ => Some(sample_uncertainty(gamma_k, &w, cfg.structure, &mut rng)?),
            };

            let (plant, model, controller_r, stored) = match (cfg.uncertainty, model_update) {
                (UncertaintyMode::FixedDraw, _) => (
                    fixed_plant.clone().expect("fixed plant"),
                    setup.nominal.clone(),
                    common_r.clone(),
                    StoredStep::Nominal(fixed_factor.clone()),
                ),
                (_, false) => {
                    let d = draw.expect("fresh draw");
                    (
                        true_plant(&setup.nominal, &d)?,
                        setup.nominal.clone(),
                        common_r.clone(),
                        StoredStep::Nominal(Some(Arc::new(Factor::delta(&d)))),
                    )
                }
                (_, true) => {
                    let d = draw.expect("fresh draw");
                    let h = fixed_plant.clone().expect("fixed plant");
                    let m_k = model_from_plant(&h, &d)?;
                    let r_k = adaptive_regularizer(&w, &m_k, &setup.q, cfg.adaptive_regularizer);
                    let inv = match d.structure {
                        Structure::Diagonal => {
                            Factor::Diagonal(d.delta.diagonal().map(|v| 1.0 / (1.0 + v)))
                        }
                        Structure::Full => Factor::Dense(
                            (Matrix::identity(n, n) + &d.delta)
                                .try_inverse()
                                .ok_or_else(|| Error::RankDeficient("I + Δ is singular".into()))?,
                        ),
                    };
                    (h, m_k, r_k, StoredStep::ModelUpdate(Arc::new(inv)))
                }
            };
            let benchmark_r =
                if adaptive && cfg.benchmark_regularizer == BenchmarkRegularizer::Adapted {
                    controller_r.clone()
                } else {
                    setup.r.clone()
                };
            let benchmark = QuadCost::with_symmetric_regularizer(
                plant.clone(),
                model.clone(),
                setup.reference.clone(),
                setup.q.clone(),
                benchmark_r,
            )?;

            let x = state.input.clone();
            let y = plant.apply(&x)?;
            let form = benchmark.quadratic_form();
            let x_star = form.minimize(&set, prev_star.as_ref())?;
            let alpha = if adaptive {
                alpha0
            } else {
                setup.schedule.alpha(k)
            };
            let distance = weighted_vec_norm(&(&x - &x_star), &w)?;

            trace.alpha.push(alpha);
            trace.phi.push(contraction_factor(
                alpha,
                &w,
                &model,
                &setup.q,
                &plant,
                &controller_r,
            )?);
            trace.sigma.push(mismatch_sigma(
                &w,
                &model,
                &benchmark,
                &controller_r,
                &x_star,
            )?);
            trace.cost.push(benchmark.eval(&x)?);
            trace.optimal_cost.push(benchmark.eval(&x_star)?);
            trace.distance.push(distance);
            let err = &y - &setup.reference;
            trace
                .tracking_rms
                .push((err.norm_squared() / n as f64).sqrt());
            if k == 1 {
                trace.delta_x1 = distance;
            }
            if let Some(prev) = &prev_star {
                trace.drift.push(optimum_drift(prev, &x_star, &w)?);
            }
            gamma.push(gamma_k);

            lipschitz.observe_points(&benchmark, &w, &[&x, &x_star])?;
            if (k - 1) % scan_every == 0 || k == t_max {
                lipschitz.observe_samples(&benchmark, &w)?;
            }

            hindsight.add_assign(&form);
            let xh = hindsight.minimize(&set, hindsight_x.as_ref())?;
            trace.hindsight_cost.push(hindsight.eval(&xh));
            if stride > 0 {
                estimates.steps.push(stored);
                let due = k % stride == 0 || k == t_max;
                trace.static_terms.push(if due {
                    Some(StaticTerms {
                        delta: weighted_vec_norm(&(&x1 - &xh), &w)?,
                        eta_bar: estimates.eta_bar(k - 1, &xh),
                    })
                } else {
                    None
                });
            }
            hindsight_x = Some(xh);

            if opts.keep_inputs {
                inputs.push(x.clone());
            }
            if k == 1 {
                first_cost = Some(benchmark.clone());
            }
            if k == t_max {
                final_output = y.clone();
                final_input = x.clone();
                last_cost = Some(benchmark.clone());
            }

            state = if adaptive {
                let out = adaptive_step(
                    &state,
                    alpha0,
                    &y,
                    &benchmark,
                    &set,
                    &model,
                    gamma_k,
                    cfg.adaptive_regularizer,
                )?;
                if out.regularizer_min_eig < 0.0 {
                    indefinite.push(k);
                }
                out.state
            } else {
                pogd_step(&state, alpha, &y, &benchmark, &set)?
            };
            prev_star = Some(x_star);
            Ok(())
        })();
        step.map_err(|e| e.at_iteration(k))?;
    }

    trace.lipschitz = lipschitz.finish();
    let lipschitz_check = if opts.lipschitz_pairs > 0 && set.is_bounded() {
        let mut vrng = CounterRng::new(cfg.seed).fork(STREAM_VALIDATION);
        let mut worst: f64 = 0.0;
        for cost in [first_cost.as_ref(), last_cost.as_ref()]
            .into_iter()
            .flatten()
        {
            worst = worst.max(crate::regret::validate_lipschitz(
                cost,
                &w,
                &set,
                trace.lipschitz,
                opts.lipschitz_pairs,
                &mut vrng,
            )?);
        }
        Some(worst)
    } else {
        None
    };

    drop(estimates);
    Ok(RunOutput {
        trace,
        gamma,
        reference: setup.reference.clone(),
        final_output,
        final_input,
        inputs,
        indefinite_regularizer: indefinite,
        lipschitz_check,
        setup,
    })
}
