//! Strictly convex quadratic minimization over a box.
//!
//! Accelerated projected gradient (constant momentum from the condition
//! number, restarted whenever the objective increases) with the Euclidean
//! clamp as the inner projection. Every `polish_every` iterations the current
//! active set is frozen and the free coordinates are solved exactly; the
//! polished point is accepted only if it passes the same KKT test.

use nalgebra::Cholesky;

use super::{BoxSet, Matrix, Vector};
use crate::error::{Error, Result};

/// `minimize 0.5 u' A u - b' u` with `A` symmetric positive definite.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticProblem<'a> {
    pub hessian: &'a Matrix,
    pub linear: &'a Vector,
    pub min_eig: f64,
    pub max_eig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Bound on the natural residual `||u - clamp(u - grad/L)||_inf / max(1, ||u||_inf)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub polish_every: usize,
}

impl QpOptions {
    pub fn projection() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            polish_every: 10,
        }
    }

    pub fn optimal() -> Self {
        Self {
            tolerance: 1e-9,
            ..Self::projection()
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vector,
    pub iterations: usize,
    pub residual: f64,
}

impl QuadraticProblem<'_> {
    fn objective(&self, u: &Vector, au: &Vector) -> f64 {
        0.5 * u.dot(au) - self.linear.dot(u)
    }

    fn residual(&self, u: &Vector, grad: &Vector, set: &BoxSet) -> f64 {
        let step = 1.0 / self.max_eig;
        let scale = u.amax().max(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..u.len() {
            let moved = (u[i] - step * grad[i])
                .max(set.lower()[i])
                .min(set.upper()[i]);
            worst = worst.max((u[i] - moved).abs());
        }
        worst / scale
    }
}

pub fn solve_box_qp(
    problem: &QuadraticProblem<'_>,
    set: &BoxSet,
    start: &Vector,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = problem.linear.len();
    if problem.hessian.nrows() != n || problem.hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "box QP Hessian",
            expected: n,
            found: problem.hessian.nrows(),
        });
    }
    if set.dim() != n || start.len() != n {
        return Err(Error::DimensionMismatch {
            context: "box QP bounds",
            expected: n,
            found: set.dim().min(start.len()),
        });
    }
    if !(problem.min_eig > 0.0) || !(problem.max_eig >= problem.min_eig) {
        return Err(Error::NotStrictlyConvex {
            min_eig: problem.min_eig,
            max_eig: problem.max_eig,
        });
    }

    if set.is_unbounded() {
        let chol = Cholesky::new(problem.hessian.clone()).ok_or(Error::NotStrictlyConvex {
            min_eig: problem.min_eig,
            max_eig: problem.max_eig,
        })?;
        let mut x = chol.solve(problem.linear);
        let r = problem.linear - problem.hessian * &x;
        x += chol.solve(&r);
        let grad = problem.hessian * &x - problem.linear;
        return Ok(QpSolution {
            residual: problem.residual(&x, &grad, set),
            x,
            iterations: 0,
        });
    }

    let step = 1.0 / problem.max_eig;
    let root_kappa = (problem.max_eig / problem.min_eig).sqrt();
    let momentum = (root_kappa - 1.0) / (root_kappa + 1.0);

    let mut x = set.clamp(start);
    let mut ax = problem.hessian * &x;
    let mut fx = problem.objective(&x, &ax);
    let mut prev = x.clone();
    let mut residual = f64::INFINITY;

    for it in 0..=opts.max_iterations {
        let grad = &ax - problem.linear;
        residual = problem.residual(&x, &grad, set);
        if residual <= opts.tolerance {
            return Ok(QpSolution {
                x,
                iterations: it,
                residual,
            });
        }
        if it == opts.max_iterations {
            break;
        }

        if opts.polish_every > 0 && it % opts.polish_every == 0 {
            if let Some(candidate) = polish(problem, set, &x, &grad) {
                let ac = problem.hessian * &candidate;
                let gc = &ac - problem.linear;
                let rc = problem.residual(&candidate, &gc, set);
                if rc <= opts.tolerance {
                    return Ok(QpSolution {
                        x: candidate,
                        iterations: it,
                        residual: rc,
                    });
                }
                let fc = problem.objective(&candidate, &ac);
                if fc < fx {
                    x = candidate;
                    ax = ac;
                    fx = fc;
                    prev = x.clone();
                    continue;
                }
            }
        }

        let y = &x + (&x - &prev) * momentum;
        let gy = problem.hessian * &y - problem.linear;
        let mut next = y - gy * step;
        set.clamp_in_place(&mut next);
        let anext = problem.hessian * &next;
        let fnext = problem.objective(&next, &anext);
        if fnext > fx {
            // restart: plain projected gradient step from x
            let mut plain = &x - (&ax - problem.linear) * step;
            set.clamp_in_place(&mut plain);
            prev = plain.clone();
            ax = problem.hessian * &plain;
            fx = problem.objective(&plain, &ax);
            x = plain;
        } else {
            prev = std::mem::replace(&mut x, next);
            ax = anext;
            fx = fnext;
        }
    }

    Err(Error::SolverStalled {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Solves for the free coordinates with the current active set held fixed.
/// Returns the (clamped) candidate, or `None` when the reduced system fails.
fn polish(
    problem: &QuadraticProblem<'_>,
    set: &BoxSet,
    x: &Vector,
    grad: &Vector,
) -> Option<Vector> {
    let n = x.len();
    let free: Vec<usize> = (0..n)
        .filter(|&i| {
            let at_lower = x[i] == set.lower()[i] && grad[i] > 0.0;
            let at_upper = x[i] == set.upper()[i] && grad[i] < 0.0;
            !(at_lower || at_upper)
        })
        .collect();
    let mut candidate = x.clone();
    if free.is_empty() {
        return Some(candidate);
    }
    let a = problem.hessian;
    let rhs_of = |cand: &Vector| {
        Vector::from_iterator(
            free.len(),
            free.iter()
                .map(|&i| problem.linear[i] - a.row(i).dot(&cand.transpose())),
        )
    };
    let sub = Matrix::from_fn(free.len(), free.len(), |r, c| a[(free[r], free[c])]);
    let chol = Cholesky::new(sub)?;
    // two passes: solve, then one step of iterative refinement
    for _ in 0..2 {
        let delta = chol.solve(&rhs_of(&candidate));
        for (r, &i) in free.iter().enumerate() {
            candidate[i] += delta[r];
        }
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return None;
    }
    set.clamp_in_place(&mut candidate);
    Some(candidate)
}
