//! Weighted-norm linear algebra.
//!
//! All weighted quantities are taken with respect to a symmetric positive
//! definite weight `P`: `||x||_P = sqrt(x' P x)` for vectors and
//! `||A||_P = ||P^{1/2} A P^{-1/2}||_2` for square matrices.

mod qp;

pub use qp::{solve_box_qp, QpOptions, QpSolution, QuadraticProblem};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted when validating symmetric inputs.
const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue must exceed this fraction of the largest.
const SPD_RATIO: f64 = 1e-12;

/// A symmetric positive definite weight with cached square roots and inverse.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: Matrix,
    sqrt: Matrix,
    inv_sqrt: Matrix,
    inv: Matrix,
    min_eig: f64,
    max_eig: f64,
}

impl SpdMatrix {
    pub fn new(mat: Matrix) -> Result<Self> {
        let sym = symmetrized(&mat)?;
        let eig = SymmetricEigen::new(sym.clone());
        let (min_eig, max_eig) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if sym.nrows() == 0 || !(max_eig > 0.0) || !(min_eig > SPD_RATIO * max_eig) {
            return Err(Error::NotPositiveDefinite { min_eig, max_eig });
        }
        let map = |f: fn(f64) -> f64| {
            let d = Matrix::from_diagonal(&eig.eigenvalues.map(f));
            let v = &eig.eigenvectors;
            let m = v * d * v.transpose();
            // reassemble exactly symmetric
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            sqrt: map(f64::sqrt),
            inv_sqrt: map(|v| 1.0 / v.sqrt()),
            inv: map(|v| 1.0 / v),
            mat: sym,
            min_eig,
            max_eig,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::NotPositiveDefinite {
                min_eig: scale,
                max_eig: scale,
            });
        }
        let s = scale.sqrt();
        Ok(Self {
            mat: Matrix::identity(n, n) * scale,
            sqrt: Matrix::identity(n, n) * s,
            inv_sqrt: Matrix::identity(n, n) / s,
            inv: Matrix::identity(n, n) / scale,
            min_eig: scale,
            max_eig: scale,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    /// Symmetric square root `P^{1/2}`.
    pub fn sqrt(&self) -> &Matrix {
        &self.sqrt
    }

    /// Symmetric inverse square root `P^{-1/2}`.
    pub fn inv_sqrt(&self) -> &Matrix {
        &self.inv_sqrt
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inv
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.mat[(i, j)] == 0.0))
    }
}

/// Validates symmetry to [`SYMMETRY_TOL`] relative and returns `(A + A')/2`.
pub(crate) fn symmetrized(mat: &Matrix) -> Result<Matrix> {
    if !mat.is_square() {
        return Err(Error::NotSquare {
            rows: mat.nrows(),
            cols: mat.ncols(),
        });
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (mat - mat.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok((mat + mat.transpose()) * 0.5)
}

/// Axis-aligned box `{u : lower <= u <= upper}`; infinite entries are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vector,
    upper: Vector,
}

impl BoxSet {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(Error::EmptyBox {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Same interval `[lower, upper]` in every coordinate.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            Vector::from_element(n, lower),
            Vector::from_element(n, upper),
        )
    }

    /// The whole space `R^n`.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: Vector::from_element(n, f64::NEG_INFINITY),
            upper: Vector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY)
            && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower
            .iter()
            .chain(self.upper.iter())
            .all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    /// Euclidean projection (componentwise clamp).
    pub fn clamp(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&v, (&lo, &hi))| v.max(lo).min(hi)),
        )
    }

    pub(crate) fn clamp_in_place(&self, x: &mut Vector) {
        for ((v, &lo), &hi) in x.iter_mut().zip(self.lower.iter()).zip(self.upper.iter()) {
            *v = v.max(lo).min(hi);
        }
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

pub fn weighted_vec_norm(x: &Vector, p: &SpdMatrix) -> Result<f64> {
    check_len("weighted vector norm", p.dim(), x.len())?;
    Ok(x.dot(&(p.matrix() * x)).max(0.0).sqrt())
}

pub fn weighted_mat_norm(a: &Matrix, p: &SpdMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    check_len("weighted matrix norm", p.dim(), a.nrows())?;
    spectral_norm(&(p.sqrt() * a * p.inv_sqrt()))
}

/// Largest singular value from a full SVD.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral norm input"));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.clone().singular_values().max())
}

/// Projection of `x` onto `set` in the metric induced by `w`:
/// `argmin_{u in set} ||u - x||_W`.
pub fn weighted_project(x: &Vector, set: &BoxSet, w: &SpdMatrix) -> Result<Vector> {
    weighted_project_with(x, set, w, &QpOptions::projection())
}

pub fn weighted_project_with(
    x: &Vector,
    set: &BoxSet,
    w: &SpdMatrix,
    opts: &QpOptions,
) -> Result<Vector> {
    check_len("projection point", w.dim(), x.len())?;
    check_len("projection box", w.dim(), set.dim())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection point"));
    }
    if set.contains(x, 0.0) {
        return Ok(x.clone());
    }
    // separable metric: the clamp is exact
    if w.is_diagonal() {
        return Ok(set.clamp(x));
    }
    let linear = w.matrix() * x;
    let problem = QuadraticProblem {
        hessian: w.matrix(),
        linear: &linear,
        min_eig: w.min_eigenvalue(),
        max_eig: w.max_eigenvalue(),
    };
    Ok(solve_box_qp(&problem, set, &set.clamp(x), opts)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_from(seed: u64, n: usize) -> SpdMatrix {
        let mut rng = crate::rng::CounterRng::new(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
        SpdMatrix::new(&a * a.transpose() + Matrix::identity(n, n) * 0.1).unwrap()
    }

    #[test]
    fn vec_norm_trivial_cases() {
        let x = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(weighted_vec_norm(&x, &SpdMatrix::identity(2)).unwrap(), 5.0);
        let p = SpdMatrix::from_diagonal(&[4.0]).unwrap();
        assert_eq!(
            weighted_vec_norm(&Vector::from_vec(vec![1.0]), &p).unwrap(),
            2.0
        );
    }

    #[test]
    fn vec_norm_matches_explicit_sum() {
        let p = spd_from(3, 10);
        let mut rng = crate::rng::CounterRng::new(4);
        let x = Vector::from_fn(10, |_, _| rng.uniform(-2.0, 2.0));
        let mut acc = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                acc += x[i] * p.matrix()[(i, j)] * x[j];
            }
        }
        let got = weighted_vec_norm(&x, &p).unwrap();
        assert!((got - acc.sqrt()).abs() <= 1e-12 * acc.sqrt());
    }

    #[test]
    fn vec_norm_dimension_mismatch() {
        let err = weighted_vec_norm(&Vector::zeros(3), &SpdMatrix::identity(2));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mat_norm_examples() {
        let p = spd_from(1, 4);
        let eye = Matrix::identity(4, 4);
        assert!((weighted_mat_norm(&eye, &p).unwrap() - 1.0).abs() < 1e-12);

        let p = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!((weighted_mat_norm(&a, &p).unwrap() - 2.0).abs() < 1e-12);

        let a = Matrix::from_row_slice(2, 3, &[0.0; 6]);
        assert!(matches!(
            weighted_mat_norm(&a, &p),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -3.0]));
        assert!((spectral_norm(&d).unwrap() - 3.0).abs() < 1e-12);
        let mut bad = Matrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(spectral_norm(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn spectral_norm_matches_gram_eigenvalue() {
        let mut rng = crate::rng::CounterRng::new(11);
        let a = Matrix::from_fn(5, 5, |_, _| rng.uniform(-1.0, 1.0));
        let gram = a.transpose() * &a;
        let top = SymmetricEigen::new(gram).eigenvalues.max();
        assert!((spectral_norm(&a).unwrap() - top.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spd_rejects_bad_inputs() {
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(asym),
            Err(Error::NotSymmetric { .. })
        ));
        let indef = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            SpdMatrix::new(indef),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let nearly = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(SpdMatrix::new(nearly).is_err());
    }

    #[test]
    fn spd_square_root_reproduces_matrix() {
        let p = spd_from(7, 12);
        let back = p.sqrt() * p.sqrt();
        let rel = (&back - p.matrix()).norm() / p.matrix().norm();
        assert!(rel < 1e-10, "{rel}");
        let id = p.sqrt() * p.inv_sqrt();
        assert!((id - Matrix::identity(12, 12)).amax() < 1e-10);
    }

    #[test]
    fn box_validation() {
        let err = BoxSet::new(
            Vector::from_vec(vec![0.0, 2.0]),
            Vector::from_vec(vec![1.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::EmptyBox { index: 1, .. })));
        assert!(BoxSet::unbounded(3).is_unbounded());
    }

    #[test]
    fn projection_interior_and_identity_metric() {
        let set = BoxSet::uniform(3, 0.0, 1.0).unwrap();
        let w = spd_from(2, 3);
        let inside = Vector::from_vec(vec![0.2, 0.5, 0.9]);
        assert_eq!(weighted_project(&inside, &set, &w).unwrap(), inside);

        let x = Vector::from_vec(vec![-1.0, 0.5, 3.0]);
        let p = weighted_project(&x, &set, &SpdMatrix::identity(3)).unwrap();
        assert_eq!(p, Vector::from_vec(vec![0.0, 0.5, 1.0]));
    }

    #[test]
    fn projection_two_dim_matches_grid() {
        let w = SpdMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let set = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        let x = Vector::from_vec(vec![2.0, -1.0]);
        let p = weighted_project(&x, &set, &w).unwrap();

        let steps = 2000;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=steps {
            for j in 0..=steps {
                let u0 = i as f64 / steps as f64;
                let u1 = j as f64 / steps as f64;
                let d0 = u0 - 2.0;
                let d1 = u1 + 1.0;
                let v = 2.0 * d0 * d0 + d0 * d1 + d1 * d1;
                if v < best.0 {
                    best = (v, u0, u1);
                }
            }
        }
        assert!(
            (p[0] - best.1).abs() <= 1e-3 && (p[1] - best.2).abs() <= 1e-3,
            "{p} vs {best:?}"
        );
    }

    #[test]
    fn projection_variational_inequality() {
        let w = spd_from(9, 6);
        let set = BoxSet::uniform(6, -0.5, 0.5).unwrap();
        let mut rng = crate::rng::CounterRng::new(10);
        let x = Vector::from_fn(6, |_, _| rng.uniform(-3.0, 3.0));
        let p = weighted_project(&x, &set, &w).unwrap();
        for _ in 0..200 {
            let u = Vector::from_fn(6, |_, _| rng.uniform(-0.5, 0.5));
            let vi = (&x - &p).dot(&(w.matrix() * (&u - &p)));
            assert!(vi <= 1e-8, "{vi}");
        }
    }
}
