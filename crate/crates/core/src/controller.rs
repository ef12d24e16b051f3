//! The preconditioned online gradient descent (POGD) update and the
//! quantities that certify it: preconditioner, `w` factor, admissible step
//! sizes and per-iteration contraction factors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cost::QuadCost;
use crate::error::{Error, Result};
use crate::linalg::{
    spectral_norm, weighted_project, weighted_vec_norm, BoxSet, Matrix, SpdMatrix, Vector,
};
use crate::model::LiftedModel;

/// First regularization weight tried by [`choose_regularization`].
pub const RHO_START: f64 = 1e-6;
const RHO_DOUBLINGS: usize = 200;

/// `W = M' Q M + R`.
pub fn preconditioner(m: &LiftedModel, q: &SpdMatrix, r: &Matrix) -> Result<SpdMatrix> {
    if q.dim() != m.outputs() || r.nrows() != m.inputs() || r.ncols() != m.inputs() {
        return Err(Error::DimensionMismatch {
            context: "preconditioner weights",
            expected: m.inputs(),
            found: r.nrows(),
        });
    }
    SpdMatrix::new(gram(m, q) + r)
}

/// `M' Q M`, exactly symmetric.
pub(crate) fn gram(m: &LiftedModel, q: &SpdMatrix) -> Matrix {
    let g = m.matrix().tr_mul(&(q.matrix() * m.matrix()));
    (&g + g.transpose()) * 0.5
}

/// `w = ||W^{-1} M' Q M||_W`, evaluated as `||W^{-1/2} M' Q M W^{-1/2}||_2`.
pub fn w_factor(w: &SpdMatrix, m: &LiftedModel, q: &SpdMatrix) -> Result<f64> {
    if w.dim() != m.inputs() {
        return Err(Error::DimensionMismatch {
            context: "w factor",
            expected: w.dim(),
            found: m.inputs(),
        });
    }
    let g = gram(m, q);
    spectral_norm(&(w.inv_sqrt() * g * w.inv_sqrt()))
}

/// Upper end of the admissible step interval, `2 / (1 + wγ)`.
pub fn max_step(w: f64, gamma: f64) -> Result<f64> {
    let product = w * gamma;
    if !(product < 1.0) {
        return Err(Error::ContractionCondition { w, gamma, product });
    }
    Ok(2.0 / (1.0 + product))
}

/// `α_k = α₀ k^{-c}`, validated against `(0, 2/(1+wγ))` when built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub alpha0: f64,
    pub decay: f64,
}

impl StepSchedule {
    pub fn new(alpha0: f64, decay: f64, w: f64, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::InvalidParameter(format!(
                "step decay exponent must lie in [0, 1), got {decay}"
            )));
        }
        let max_step = max_step(w, gamma)?;
        if !(alpha0 > 0.0 && alpha0 < max_step) {
            return Err(Error::StepSize {
                alpha: alpha0,
                max_step,
            });
        }
        Ok(Self { alpha0, decay })
    }

    /// Step for iteration `k >= 1`.
    pub fn alpha(&self, k: usize) -> f64 {
        if self.decay == 0.0 {
            self.alpha0
        } else {
            self.alpha0 * (k as f64).powf(-self.decay)
        }
    }
}

/// Smallest `ρ = 1e-6 · 2^j` such that `R = ρI` gives `wγ <= margin`.
pub fn choose_regularization(
    m: &LiftedModel,
    q: &SpdMatrix,
    gamma: f64,
    margin: f64,
) -> Result<f64> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "γ must be finite and nonnegative, got {gamma}"
        )));
    }
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "margin must lie in (0, 1), got {margin}"
        )));
    }
    let n = m.inputs();
    let g = gram(m, q);
    let mut rho = RHO_START;
    let mut product = f64::INFINITY;
    for _ in 0..RHO_DOUBLINGS {
        let w = SpdMatrix::new(&g + Matrix::identity(n, n) * rho)?;
        product = spectral_norm(&(w.inv_sqrt() * &g * w.inv_sqrt()))? * gamma;
        if product <= margin {
            return Ok(rho);
        }
        rho *= 2.0;
    }
    Err(Error::RegularizationSearch {
        doublings: RHO_DOUBLINGS,
        rho,
        product,
    })
}

/// Which regularizer the adaptive controller pairs with its model `M_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerForm {
    /// `R_k = W - M_k' Q M_k`
    #[default]
    WithQ,
    /// `R_k = W - M_k' M_k`
    Literal,
}

pub fn adaptive_regularizer(
    w: &SpdMatrix,
    model: &LiftedModel,
    q: &SpdMatrix,
    form: RegularizerForm,
) -> Matrix {
    let m = model.matrix();
    let g = match form {
        RegularizerForm::WithQ => gram(model, q),
        RegularizerForm::Literal => m.tr_mul(m),
    };
    let r = w.matrix() - g;
    (&r + r.transpose()) * 0.5
}

/// Current input and the (fixed) preconditioner.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub input: Vector,
    pub preconditioner: Arc<SpdMatrix>,
    /// Index `k` of the iteration that will apply `input`.
    pub iteration: usize,
}

impl ControllerState {
    pub fn new(input: Vector, preconditioner: Arc<SpdMatrix>) -> Result<Self> {
        if input.len() != preconditioner.dim() {
            return Err(Error::DimensionMismatch {
                context: "controller input",
                expected: preconditioner.dim(),
                found: input.len(),
            });
        }
        Ok(Self {
            input,
            preconditioner,
            iteration: 1,
        })
    }

    fn advance(&self, gradient: &Vector, alpha: f64, set: &BoxSet) -> Result<Self> {
        let w = &self.preconditioner;
        let moved = &self.input - w.inverse() * gradient * alpha;
        let input = weighted_project(&moved, set, w)?;
        Ok(Self {
            input,
            preconditioner: Arc::clone(w),
            iteration: self.iteration + 1,
        })
    }
}

/// `x_{k+1} = Π_X^W(x_k - α W^{-1} (M' Q (y - r) + R x_k))`.
pub fn pogd_step(
    state: &ControllerState,
    alpha: f64,
    y_measured: &Vector,
    cost: &QuadCost,
    set: &BoxSet,
) -> Result<ControllerState> {
    let g = cost.model_grad(&state.input, y_measured)?;
    state.advance(&g, alpha, set)
}

/// Iteration-invariant ILC update; the arithmetic is [`pogd_step`] applied to
/// a cost that does not change between iterations.
pub fn classic_ilc_step(
    state: &ControllerState,
    alpha: f64,
    y_measured: &Vector,
    cost: &QuadCost,
    set: &BoxSet,
) -> Result<ControllerState> {
    pogd_step(state, alpha, y_measured, cost, set)
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub state: ControllerState,
    /// `R_k` used in the gradient estimate.
    pub regularizer: Matrix,
    /// `w_k = ||W^{-1} M_k' Q M_k||_W`.
    pub w_k: f64,
    /// Smallest eigenvalue of `R_k`; negative means `R_k` is indefinite.
    pub regularizer_min_eig: f64,
}

/// POGD step with the current model estimate `M_k` and its regularizer
/// `R_k`; `W` stays frozen.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_step(
    state: &ControllerState,
    alpha0: f64,
    y_measured: &Vector,
    cost: &QuadCost,
    set: &BoxSet,
    model_k: &LiftedModel,
    gamma_k: f64,
    form: RegularizerForm,
) -> Result<AdaptiveOutcome> {
    let w = &state.preconditioner;
    let q = cost.q();
    let w_k = w_factor(w, model_k, q)?;
    if !(w_k * gamma_k < 1.0) {
        return Err(Error::ContractionCondition {
            w: w_k,
            gamma: gamma_k,
            product: w_k * gamma_k,
        });
    }
    let regularizer = adaptive_regularizer(w, model_k, q, form);
    let e = y_measured - cost.reference();
    let g = model_k.matrix().tr_mul(&(q.matrix() * e)) + &regularizer * &state.input;
    let next = state.advance(&g, alpha0, set)?;
    let regularizer_min_eig = nalgebra::SymmetricEigen::new(regularizer.clone())
        .eigenvalues
        .min();
    Ok(AdaptiveOutcome {
        state: next,
        regularizer,
        w_k,
        regularizer_min_eig,
    })
}

/// `φ = ||I - α W^{-1} (M' Q H + R)||_W`.
pub fn contraction_factor(
    alpha: f64,
    w: &SpdMatrix,
    m: &LiftedModel,
    q: &SpdMatrix,
    h: &LiftedModel,
    r: &Matrix,
) -> Result<f64> {
    let n = w.dim();
    if m.inputs() != n || h.inputs() != n || r.nrows() != n || q.dim() != h.outputs() {
        return Err(Error::DimensionMismatch {
            context: "contraction factor",
            expected: n,
            found: h.inputs(),
        });
    }
    let k = m.matrix().tr_mul(&(q.matrix() * h.matrix())) + r;
    let scaled = w.inv_sqrt() * k * w.inv_sqrt();
    spectral_norm(&(Matrix::identity(n, n) - scaled * alpha))
}

/// Products `Φ_{j,k} = Π_{i=j..k} φ_i` (1-based, empty product is 1).
///
/// Kept as prefix sums of `ln φ` with a separate count of exact zeros.
#[derive(Debug, Clone)]
pub struct ContractionProducts {
    log_prefix: Vec<f64>,
    zero_prefix: Vec<usize>,
}

impl ContractionProducts {
    pub fn new(phis: &[f64]) -> Self {
        let mut log_prefix = Vec::with_capacity(phis.len() + 1);
        let mut zero_prefix = Vec::with_capacity(phis.len() + 1);
        log_prefix.push(0.0);
        zero_prefix.push(0);
        for &phi in phis {
            let (l, z) = (*log_prefix.last().unwrap(), *zero_prefix.last().unwrap());
            if phi > 0.0 {
                log_prefix.push(l + phi.ln());
                zero_prefix.push(z);
            } else {
                log_prefix.push(l);
                zero_prefix.push(z + 1);
            }
        }
        Self {
            log_prefix,
            zero_prefix,
        }
    }

    pub fn len(&self) -> usize {
        self.log_prefix.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn product(&self, j: usize, k: usize) -> f64 {
        if j > k {
            return 1.0;
        }
        assert!(
            j >= 1 && k <= self.len(),
            "product range {j}..={k} out of bounds"
        );
        if self.zero_prefix[k] > self.zero_prefix[j - 1] {
            0.0
        } else {
            (self.log_prefix[k] - self.log_prefix[j - 1]).exp()
        }
    }
}

/// Fixed point `x̄ = Π_X^W(x̄ - α W^{-1} ∇̃f(x̄))` of the iteration-invariant
/// update, found by iterating the update itself.
pub fn ilc_fixed_point(
    cost: &QuadCost,
    w: &SpdMatrix,
    set: &BoxSet,
    alpha: f64,
    start: &Vector,
) -> Result<Vector> {
    let mut state = ControllerState::new(start.clone(), Arc::new(w.clone()))?;
    let scale = weighted_vec_norm(start, w)?.max(1e-300);
    for _ in 0..100_000 {
        let y = cost.plant().apply(&state.input)?;
        let next = pogd_step(&state, alpha, &y, cost, set)?;
        let step = weighted_vec_norm(&(&next.input - &state.input), w)?;
        state = next;
        if step <= 1e-14 * scale.max(weighted_vec_norm(&state.input, w)?) {
            return Ok(state.input);
        }
    }
    Err(Error::SolverStalled {
        iterations: 100_000,
        residual: f64::NAN,
    })
}
