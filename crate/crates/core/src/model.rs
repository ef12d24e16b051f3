//! Plant representations: SISO state-space models, their lifted
//! iteration-domain matrices, and multiplicative uncertainty draws.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{weighted_mat_norm, Matrix, SpdMatrix, Vector};
use crate::rng::CounterRng;

const STANDIN_JSON: &str = include_str!("../data/slm_standin.json");

/// Discrete-time SISO model `xi(t+1) = A xi(t) + B v(t)`, `y(t) = C xi(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Matrix,
    b: Vector,
    c: Vector,
}

#[derive(Debug, Deserialize)]
struct StateSpaceFile {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Vector, c: Vector) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        for (context, len) in [("input vector B", b.len()), ("output vector C", c.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    found: len,
                });
            }
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("state-space coefficients"));
        }
        let model = Self { a, b, c };
        let rho = model.spectral_radius();
        if rho >= 1.0 {
            return Err(Error::Unstable {
                spectral_radius: rho,
            });
        }
        Ok(model)
    }

    /// Loads `{"a": [[..]], "b": [..], "c": [..]}`; other keys are ignored.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: StateSpaceFile = serde_json::from_str(text)?;
        let n = raw.a.len();
        if raw.a.iter().any(|row| row.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: raw.a.first().map_or(0, Vec::len),
            });
        }
        let a = DMatrix::from_row_iterator(n, n, raw.a.into_iter().flatten());
        Self::new(a, Vector::from_vec(raw.b), Vector::from_vec(raw.c))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `C A^k B` for `k = 0..count`.
    pub fn markov_parameters(&self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        let mut state = self.b.clone();
        for _ in 0..count {
            out.push(self.c.dot(&state));
            state = &self.a * state;
        }
        out
    }

    /// Zero-initial-state response; the output at step `t` is read after
    /// the state update driven by `v(t)`, matching the lifting convention.
    pub fn simulate(&self, input: &[f64]) -> Vec<f64> {
        let mut state = Vector::zeros(self.order());
        input
            .iter()
            .map(|&v| {
                state = &self.a * &state + &self.b * v;
                self.c.dot(&state)
            })
            .collect()
    }

    /// Steady-state gain `C (I - A)^{-1} B`.
    pub fn dc_gain(&self) -> f64 {
        let n = self.order();
        let lu = (Matrix::identity(n, n) - &self.a).lu();
        lu.solve(&self.b).map_or(f64::NAN, |x| self.c.dot(&x))
    }
}

/// Input-output map of one iteration, `y = M x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedModel {
    matrix: Matrix,
}

impl LiftedModel {
    /// Wraps an arbitrary matrix after checking it has full column rank.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lifted model"));
        }
        if matrix.nrows() < matrix.ncols() {
            return Err(Error::RankDeficient(format!(
                "{}x{} matrix cannot have full column rank",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let sv = matrix.clone().singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        let tol = f64::EPSILON * hi * matrix.nrows() as f64;
        if !(lo > tol) {
            return Err(Error::RankDeficient(format!(
                "smallest singular value {lo:e} (largest {hi:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: Matrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn outputs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                context: "lifted model input",
                expected: self.inputs(),
                found: x.len(),
            });
        }
        Ok(&self.matrix * x)
    }
}

/// Lower-triangular Toeplitz lifting with `M[i][j] = C A^(i-j) B` for `i >= j`.
pub fn lift(ss: &StateSpace, horizon: usize) -> Result<LiftedModel> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let h = ss.markov_parameters(horizon);
    let scale = ss.b.norm() * ss.c.norm();
    if h[0].abs() <= 1e-14 * scale || h[0] == 0.0 {
        return Err(Error::RankDeficient(format!(
            "first Markov parameter CB = {:e} vanishes",
            h[0]
        )));
    }
    let matrix = Matrix::from_fn(horizon, horizon, |i, j| if i >= j { h[i - j] } else { 0.0 });
    Ok(LiftedModel { matrix })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    #[default]
    Diagonal,
    Full,
}

/// A multiplicative mismatch realization with its certified weighted bound.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyDraw {
    pub delta: Matrix,
    pub gamma: f64,
    pub structure: Structure,
}

impl UncertaintyDraw {
    pub fn zero(n: usize, structure: Structure) -> Self {
        Self {
            delta: Matrix::zeros(n, n),
            gamma: 0.0,
            structure,
        }
    }
}

/// Draws `Δ` with `||Δ||_W <= γ`: raw entries uniform on `[-1, 1]`, rescaled
/// to weighted norm `γ s` with `s` uniform on `(0, 1]`.
pub fn sample_uncertainty(
    gamma: f64,
    w: &SpdMatrix,
    structure: Structure,
    rng: &mut CounterRng,
) -> Result<UncertaintyDraw> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "uncertainty size must be finite and nonnegative, got {gamma}"
        )));
    }
    let n = w.dim();
    if gamma == 0.0 {
        return Ok(UncertaintyDraw::zero(n, structure));
    }
    loop {
        let raw = match structure {
            Structure::Diagonal => {
                let d = Vector::from_fn(n, |_, _| rng.uniform(-1.0, 1.0));
                Matrix::from_diagonal(&d)
            }
            Structure::Full => Matrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0)),
        };
        let nu = weighted_mat_norm(&raw, w)?;
        if nu > 0.0 {
            let s = rng.next_f64_open_closed();
            let delta = raw * (gamma * s / nu);
            return Ok(UncertaintyDraw {
                delta,
                gamma,
                structure,
            });
        }
    }
}

/// `H = M + M Δ`.
pub fn true_plant(nominal: &LiftedModel, draw: &UncertaintyDraw) -> Result<LiftedModel> {
    let n = nominal.inputs();
    if draw.delta.nrows() != n || draw.delta.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "uncertainty vs nominal inputs",
            expected: n,
            found: draw.delta.nrows(),
        });
    }
    let m = nominal.matrix();
    Ok(LiftedModel::from_matrix_unchecked(m + m * &draw.delta))
}

/// Model estimate `M_k` satisfying `H = M_k (I + Δ_k)` for a fixed plant `H`.
pub fn model_from_plant(plant: &LiftedModel, draw: &UncertaintyDraw) -> Result<LiftedModel> {
    let n = plant.inputs();
    if draw.delta.nrows() != n || draw.delta.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "uncertainty vs plant inputs",
            expected: n,
            found: draw.delta.nrows(),
        });
    }
    let inv = match draw.structure {
        Structure::Diagonal => {
            let d = draw.delta.diagonal().map(|v| 1.0 / (1.0 + v));
            Matrix::from_diagonal(&d)
        }
        Structure::Full => (Matrix::identity(n, n) + &draw.delta)
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("I + Δ is singular".into()))?,
    };
    Ok(LiftedModel::from_matrix_unchecked(plant.matrix() * inv))
}

/// The committed stand-in for the melt-pool model. Seed 0 returns the stored
/// coefficients; other seeds scale `A` by a factor in `[0.95, 1.05]` and
/// rescale `C` to keep the DC gain.
pub fn synth_slm_standin(seed: u64) -> StateSpace {
    let base = StateSpace::from_json_str(STANDIN_JSON).expect("committed stand-in model is valid");
    if seed == 0 {
        return base;
    }
    let mut rng = CounterRng::new(seed).fork(0x5EED);
    let factor = 1.0 + 0.05 * rng.uniform(-1.0, 1.0);
    let a = &base.a * factor;
    let scaled = StateSpace {
        a,
        b: base.b.clone(),
        c: base.c.clone(),
    };
    let c = &base.c * (base.dc_gain() / scaled.dc_gain());
    StateSpace::new(scaled.a, scaled.b, c).expect("jittered stand-in stays stable")
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    sv.max() / sv.min()
}
