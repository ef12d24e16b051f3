//! Per-iteration quadratic tracking cost and its optimizers.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{solve_box_qp, BoxSet, Matrix, QpOptions, QuadraticProblem, SpdMatrix, Vector};
use crate::model::LiftedModel;

/// Smallest Hessian eigenvalue relative to the largest for a unique minimizer.
const STRICT_CONVEXITY_RATIO: f64 = 1e-10;

/// `f(x) = 0.5 (||H x - r||_Q^2 + ||x||_R^2)` with the true plant `H`, plus
/// the nominal model the controller uses for its gradient estimate.
#[derive(Debug, Clone)]
pub struct QuadCost {
    plant: LiftedModel,
    nominal: LiftedModel,
    reference: Vector,
    q: SpdMatrix,
    r: Matrix,
}

impl QuadCost {
    /// `r_weight` must be symmetric positive semidefinite.
    pub fn new(
        plant: LiftedModel,
        nominal: LiftedModel,
        reference: Vector,
        q: SpdMatrix,
        r_weight: Matrix,
    ) -> Result<Self> {
        let cost = Self::with_symmetric_regularizer(plant, nominal, reference, q, r_weight)?;
        let eig = SymmetricEigen::new(cost.r.clone()).eigenvalues;
        let scale = eig.amax().max(f64::MIN_POSITIVE);
        if eig.min() < -1e-12 * scale {
            return Err(Error::NotPositiveDefinite {
                min_eig: eig.min(),
                max_eig: eig.max(),
            });
        }
        Ok(cost)
    }

    /// Accepts any symmetric regularizer; strict convexity of the whole cost
    /// is still enforced by the solvers.
    pub fn with_symmetric_regularizer(
        plant: LiftedModel,
        nominal: LiftedModel,
        reference: Vector,
        q: SpdMatrix,
        r_weight: Matrix,
    ) -> Result<Self> {
        let (ny, nx) = (plant.outputs(), plant.inputs());
        let checks = [
            ("nominal model outputs", ny, nominal.outputs()),
            ("nominal model inputs", nx, nominal.inputs()),
            ("reference", ny, reference.len()),
            ("output weight Q", ny, q.dim()),
            ("input weight R rows", nx, r_weight.nrows()),
            ("input weight R cols", nx, r_weight.ncols()),
        ];
        for (context, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        let r = crate::linalg::symmetrized(&r_weight)?;
        Ok(Self {
            plant,
            nominal,
            reference,
            q,
            r,
        })
    }

    pub fn plant(&self) -> &LiftedModel {
        &self.plant
    }

    pub fn nominal(&self) -> &LiftedModel {
        &self.nominal
    }

    pub fn reference(&self) -> &Vector {
        &self.reference
    }

    pub fn q(&self) -> &SpdMatrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn inputs(&self) -> usize {
        self.plant.inputs()
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                context: "cost input",
                expected: self.inputs(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector) -> Result<f64> {
        self.check_input(x)?;
        let e = self.plant.matrix() * x - &self.reference;
        Ok(0.5 * (e.dot(&(self.q.matrix() * &e)) + x.dot(&(&self.r * x))))
    }

    /// `H' Q (H x - r) + R x`.
    pub fn true_grad(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        let h = self.plant.matrix();
        let e = h * x - &self.reference;
        Ok(h.tr_mul(&(self.q.matrix() * e)) + &self.r * x)
    }

    /// `M' Q (y - r) + R x` from a measured output `y = H x`.
    pub fn model_grad(&self, x: &Vector, y_measured: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        if y_measured.len() != self.reference.len() {
            return Err(Error::DimensionMismatch {
                context: "measured output",
                expected: self.reference.len(),
                found: y_measured.len(),
            });
        }
        let e = y_measured - &self.reference;
        Ok(self.nominal.matrix().tr_mul(&(self.q.matrix() * e)) + &self.r * x)
    }

    /// The cost written as `0.5 x' A x - b' x + c`.
    pub fn quadratic_form(&self) -> QuadraticForm {
        let h = self.plant.matrix();
        let qh = self.q.matrix() * h;
        let hessian = h.tr_mul(&qh) + &self.r;
        let qr = self.q.matrix() * &self.reference;
        QuadraticForm {
            hessian: (&hessian + hessian.transpose()) * 0.5,
            linear: h.tr_mul(&qr),
            constant: 0.5 * self.reference.dot(&qr),
        }
    }

    pub fn solve_optimal(&self, set: &BoxSet) -> Result<Vector> {
        self.quadratic_form().minimize(set, None)
    }
}

/// `0.5 x' A x - b' x + c` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: Matrix,
    pub linear: Vector,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn zeros(n: usize) -> Self {
        Self {
            hessian: Matrix::zeros(n, n),
            linear: Vector::zeros(n),
            constant: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &QuadraticForm) {
        self.hessian += &other.hessian;
        self.linear += &other.linear;
        self.constant += other.constant;
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) - self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.hessian * x - &self.linear
    }

    /// Unique minimizer over `set`, optionally warm-started.
    pub fn minimize(&self, set: &BoxSet, start: Option<&Vector>) -> Result<Vector> {
        let n = self.linear.len();
        if set.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "optimum box",
                expected: n,
                found: set.dim(),
            });
        }
        let eig = SymmetricEigen::new(self.hessian.clone()).eigenvalues;
        let (min_eig, max_eig) = (eig.min(), eig.max());
        if !(max_eig > 0.0) || !(min_eig > STRICT_CONVEXITY_RATIO * max_eig) {
            return Err(Error::NotStrictlyConvex { min_eig, max_eig });
        }
        let problem = QuadraticProblem {
            hessian: &self.hessian,
            linear: &self.linear,
            min_eig,
            max_eig,
        };
        let opts = QpOptions::optimal();
        if set.is_unbounded() {
            return Ok(solve_box_qp(&problem, set, &Vector::zeros(n), &opts)?.x);
        }
        let start = match start {
            Some(s) => s.clone(),
            None => {
                // clamp of the unconstrained minimizer
                let free = solve_box_qp(&problem, &BoxSet::unbounded(n), &Vector::zeros(n), &opts)?;
                free.x
            }
        };
        Ok(solve_box_qp(&problem, set, &start, &opts)?.x)
    }
}

/// Minimizer over `set` of `sum_k f_k(x)`.
pub fn hindsight_static_optimum(costs: &[QuadCost], set: &BoxSet) -> Result<Vector> {
    let first = costs.first().ok_or_else(|| {
        Error::InvalidParameter("hindsight optimum needs at least one cost".into())
    })?;
    let mut total = QuadraticForm::zeros(first.inputs());
    for cost in costs {
        if cost.inputs() != first.inputs() {
            return Err(Error::DimensionMismatch {
                context: "hindsight costs",
                expected: first.inputs(),
                found: cost.inputs(),
            });
        }
        total.add_assign(&cost.quadratic_form());
    }
    total.minimize(set, None)
}
