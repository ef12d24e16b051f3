//! Regret accounting and numerical evaluation of the analytic regret bounds.
//!
//! Notation: `d_k = ||x_k - x*_k||_W` obeys
//! `d_{k+1} <= φ_k d_k + α_k σ_k + e_k`. Unrolling and summing `L̄ d_k` gives
//! the dynamic bound; the same recursion against a fixed comparator `x*`
//! (with `η_k` in place of `σ_k` and no drift) gives the static bound.
//!
//! The cumulative sums are built from
//! `P_k = Φ_{1,k}`, `A_k = Σ_{j<=k} α_j Φ_{j+1,k}`, `E_k = Σ_{j<=k} e_j Φ_{j+1,k}`,
//! all with `P_0 = 1`, `A_0 = E_0 = 0`.

use serde::Serialize;

use crate::controller::ContractionProducts;
use crate::cost::QuadCost;
use crate::error::{Error, Result};
use crate::linalg::{weighted_vec_norm, BoxSet, Matrix, SpdMatrix, Vector};
use crate::model::LiftedModel;
use crate::rng::CounterRng;

/// Safety factor applied to the sampled Lipschitz constant.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;
pub const DEFAULT_LIPSCHITZ_SAMPLES: usize = 1000;
/// Relative slack used when comparing measured regret with a bound.
pub const BOUND_RTOL: f64 = 1e-6;

/// Per-iteration record of one run. Arrays indexed by `k - 1`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RegretTrace {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `e_k = ||x*_k - x*_{k+1}||_W`; one shorter than the other arrays.
    pub drift: Vec<f64>,
    /// `f_k(x_k)`
    pub cost: Vec<f64>,
    /// `f_k(x*_k)`
    pub optimal_cost: Vec<f64>,
    /// `||x_k - x*_k||_W`
    pub distance: Vec<f64>,
    pub tracking_rms: Vec<f64>,
    /// `min_x Σ_{k<=T} f_k(x)` indexed by `T - 1`.
    pub hindsight_cost: Vec<f64>,
    /// Static-bound inputs at the horizons where they were evaluated.
    pub static_terms: Vec<Option<StaticTerms>>,
    pub lipschitz: f64,
    /// `||x_1 - x*_1||_W`
    pub delta_x1: f64,
}

/// Comparator quantities for the static bound at one horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticTerms {
    /// `||x_1 - x*||_W` for the hindsight optimum `x*` over `k <= T`.
    pub delta: f64,
    /// `max_{k<T} ||W^{-1/2} ∇̃f_k(x*)||`.
    pub eta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoundTerms {
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.term_i + self.term_ii + self.term_iii
    }
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    fn check_horizon(&self, t: usize, available: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidParameter(format!(
                "horizon {t} outside 1..={}",
                self.len()
            )));
        }
        if t > available {
            return Err(Error::MissingBaseline(available + 1));
        }
        Ok(())
    }

    pub fn dynamic_regret(&self, t: usize) -> Result<f64> {
        self.check_horizon(t, self.optimal_cost.len())?;
        Ok(self.cost[..t].iter().sum::<f64>() - self.optimal_cost[..t].iter().sum::<f64>())
    }

    pub fn static_regret(&self, t: usize) -> Result<f64> {
        self.check_horizon(t, self.hindsight_cost.len())?;
        Ok(self.cost[..t].iter().sum::<f64>() - self.hindsight_cost[t - 1])
    }

    /// `J_d(T)` for every `T`, accumulated in one pass.
    pub fn dynamic_regret_series(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.cost
            .iter()
            .zip(&self.optimal_cost)
            .map(|(c, o)| {
                acc += c - o;
                acc
            })
            .collect()
    }

    pub fn static_regret_series(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.cost
            .iter()
            .zip(&self.hindsight_cost)
            .map(|(c, h)| {
                acc += c;
                acc - h
            })
            .collect()
    }

    /// Dynamic regret bound for every horizon `T = 1..=len`.
    pub fn dynamic_bound_series(&self) -> Vec<BoundTerms> {
        let t_max = self.len();
        let sums =
            CumulativeSums::new(&self.phi, &self.alpha, &self.drift, t_max.saturating_sub(1));
        let mut sigma_bar = 0.0f64;
        (1..=t_max)
            .map(|t| {
                if t >= 2 {
                    sigma_bar = sigma_bar.max(self.sigma[t - 2]);
                }
                shifted_terms(&sums, t, self.lipschitz, self.delta_x1, sigma_bar)
            })
            .collect()
    }

    pub fn dynamic_bound(&self, t: usize) -> Result<BoundTerms> {
        self.check_horizon(t, self.len())?;
        Ok(self.dynamic_bound_series()[t - 1])
    }

    /// `J_d(T) / T` and the drift-free diagnostic `(J_d(T) - TermIII) / T`.
    pub fn average_regret(&self, t: usize) -> Result<(f64, f64)> {
        let jd = self.dynamic_regret(t)?;
        let terms = self.dynamic_bound(t)?;
        Ok((jd / t as f64, (jd - terms.term_iii) / t as f64))
    }

    /// Static regret bound at each horizon where comparator terms exist.
    pub fn static_bound_series(&self) -> Vec<Option<f64>> {
        let t_max = self.len();
        let sums = CumulativeSums::new(&self.phi, &self.alpha, &[], t_max.saturating_sub(1));
        (1..=t_max)
            .map(|t| {
                let st = self.static_terms.get(t - 1).copied().flatten()?;
                Some(shifted_terms(&sums, t, self.lipschitz, st.delta, st.eta_bar).total())
            })
            .collect()
    }

    pub fn static_bound(&self, t: usize) -> Result<f64> {
        self.check_horizon(t, self.len())?;
        self.static_bound_series()[t - 1].ok_or(Error::MissingBaseline(t))
    }

    /// Largest violation of `d_{k+1} <= φ_k d_k + α_k σ_k + e_k`
    /// (nonpositive when the recursion holds everywhere).
    pub fn error_recursion_slack(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.len().saturating_sub(1) {
            let rhs =
                self.phi[k] * self.distance[k] + self.alpha[k] * self.sigma[k] + self.drift[k];
            worst = worst.max(self.distance[k + 1] - rhs);
        }
        worst
    }

    /// Term II recursion and its majorant, see [`Term2Audit`].
    pub fn term2_recursion_audit(&self) -> Term2Audit {
        term2_recursion_audit(&self.phi, &self.alpha, &self.sigma)
    }
}

/// `Σ_{k=1}^{m} P_k`, `Σ A_k`, `Σ E_k` for every `m = 0..=limit`.
struct CumulativeSums {
    p: Vec<f64>,
    a: Vec<f64>,
    e: Vec<f64>,
}

impl CumulativeSums {
    fn new(phi: &[f64], alpha: &[f64], drift: &[f64], limit: usize) -> Self {
        let mut sums = Self {
            p: vec![0.0],
            a: vec![0.0],
            e: vec![0.0],
        };
        let (mut p, mut a, mut e) = (1.0, 0.0, 0.0);
        for k in 0..limit {
            p *= phi[k];
            a = phi[k] * a + alpha[k];
            e = phi[k] * e + drift.get(k).copied().unwrap_or(0.0);
            sums.p.push(sums.p[k] + p);
            sums.a.push(sums.a[k] + a);
            sums.e.push(sums.e[k] + e);
        }
        sums
    }
}

/// Bound on `L̄ Σ_{k=1}^{T} d_k`: the unrolled sums run to `T - 1` and the
/// first iteration contributes `L̄ δ` on its own.
fn shifted_terms(
    sums: &CumulativeSums,
    t: usize,
    lipschitz: f64,
    delta: f64,
    sigma_bar: f64,
) -> BoundTerms {
    let m = t - 1;
    BoundTerms {
        term_i: lipschitz * delta * (1.0 + sums.p[m]),
        term_ii: lipschitz * sigma_bar * sums.a[m],
        term_iii: lipschitz * sums.e[m],
    }
}

/// The three sums with the outer index running `k = 1..=T`:
/// `L̄δ Σ Φ_{1,k}`, `L̄σ̄ Σ_k Σ_{j<=k} α_j Φ_{j+1,k}`, `L̄ Σ E_k`.
///
/// This is one iteration ahead of [`RegretTrace::dynamic_bound_series`]:
/// `shifted(T) = L̄δ + accumulated(T - 1)`.
pub fn accumulated_bound_terms(
    phi: &[f64],
    alpha: &[f64],
    drift: &[f64],
    lipschitz: f64,
    delta: f64,
    sigma_bar: f64,
    t: usize,
) -> Result<BoundTerms> {
    if phi.len() < t || alpha.len() < t || drift.len() < t {
        return Err(Error::DimensionMismatch {
            context: "bound inputs",
            expected: t,
            found: phi.len().min(alpha.len()).min(drift.len()),
        });
    }
    let sums = CumulativeSums::new(phi, alpha, drift, t);
    Ok(BoundTerms {
        term_i: lipschitz * delta * sums.p[t],
        term_ii: lipschitz * sigma_bar * sums.a[t],
        term_iii: lipschitz * sums.e[t],
    })
}

/// `S_T = Σ_{k<=T} Σ_{j<=k} c^{k-j} a_j` and its bound `Σ a_j / (1 - c)`.
pub fn geometric_sum_bound(a: &[f64], c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "contraction c must lie in (0, 1), got {c}"
        )));
    }
    if let Some(bad) = a.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "sequence entries must be nonnegative, got {bad}"
        )));
    }
    let (mut inner, mut s) = (0.0, 0.0);
    for &aj in a {
        inner = c * inner + aj;
        s += inner;
    }
    Ok((s, a.iter().sum::<f64>() / (1.0 - c)))
}

/// Iteration-invariant regret bound `L̄ (δ + σ α₀ T) / (1 - φ)`; reduces to
/// `L̄ δ / (1 - φ)` when `σ = 0`.
pub fn ilc_regret_bound(
    t: usize,
    lipschitz: f64,
    delta: f64,
    sigma: f64,
    alpha0: f64,
    phi: f64,
) -> Result<f64> {
    if !(phi < 1.0) || phi < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "contraction factor must lie in [0, 1), got {phi}"
        )));
    }
    Ok(lipschitz * (delta + sigma * alpha0 * t as f64) / (1.0 - phi))
}

/// Term II growth audit.
///
/// * `s`: `S_k = Σ_{j<=k} α_j Φ_{j+1,k} / α₀` by recursion (equals
///   `Σ j^{-c} Φ_{j+1,k}` for `α_j = α₀ j^{-c}`).
/// * `s_tilde`: `S̃_k = Σ_{j<=k} α_j σ_j Φ_{j+1,k}` by recursion.
/// * `s_hat`: majorant `Ŝ_{k+1} = φ̂ Ŝ_k + σ̂_{k+1}` with `φ̂ = max φ` and
///   `σ̂` the nonincreasing envelope `max_{j>=k} α_j σ_j`.
/// * `max_rel_error`: recursion vs direct double sum for `S` and `S̃`.
#[derive(Debug, Clone)]
pub struct Term2Audit {
    pub s: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub max_rel_error: f64,
}

pub fn term2_recursion_audit(phi: &[f64], alpha: &[f64], sigma: &[f64]) -> Term2Audit {
    let t = phi.len().min(alpha.len()).min(sigma.len());
    let alpha0 = alpha.first().copied().unwrap_or(1.0);
    let weighted: Vec<f64> = (0..t).map(|k| alpha[k] * sigma[k]).collect();

    let recurse = |input: &dyn Fn(usize) -> f64| {
        let mut out = Vec::with_capacity(t);
        let mut acc = 0.0;
        for k in 0..t {
            acc = if k == 0 {
                input(0)
            } else {
                phi[k] * acc + input(k)
            };
            out.push(acc);
        }
        out
    };
    // S_1 = α_1/α₀, S_{k+1} = φ_{k+1} S_k + α_{k+1}/α₀
    let s = recurse(&|k| alpha[k] / alpha0);
    let s_tilde = recurse(&|k| weighted[k]);

    let phi_hat = phi[..t].iter().copied().fold(0.0, f64::max);
    let mut envelope = weighted.clone();
    for k in (0..t.saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut s_hat = Vec::with_capacity(t);
    for k in 0..t {
        let prev = if k == 0 { 0.0 } else { phi_hat * s_hat[k - 1] };
        s_hat.push(prev + envelope[k]);
    }

    // direct sums with Φ_{j+1,k} = Π_{i=j+1}^{k} φ_i in the audit's indexing
    let products = ContractionProducts::new(&phi[..t]);
    let mut max_rel_error: f64 = 0.0;
    for k in 1..=t {
        let (mut ds, mut dst) = (0.0, 0.0);
        for j in 1..=k {
            let p = products.product(j + 1, k);
            ds += alpha[j - 1] / alpha0 * p;
            dst += weighted[j - 1] * p;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        max_rel_error = max_rel_error.max(rel(s[k - 1], ds));
        if dst > 0.0 {
            max_rel_error = max_rel_error.max(rel(s_tilde[k - 1], dst));
        }
    }
    Term2Audit {
        s,
        s_tilde,
        s_hat,
        max_rel_error,
    }
}

/// `e_k = ||x*_k - x*_{k+1}||_W`.
pub fn optimum_drift(current: &Vector, next: &Vector, w: &SpdMatrix) -> Result<f64> {
    weighted_vec_norm(&(current - next), w)
}

/// Gradient-error size at the optimum:
/// `σ_k = ||W^{-1}[(M_k - H_k)' Q (H_k x*_k - r) + (R_c - R_b) x*_k]||_W`,
/// where `R_c` is the controller's regularizer and `R_b` the benchmark's.
pub fn mismatch_sigma(
    w: &SpdMatrix,
    model: &LiftedModel,
    benchmark: &QuadCost,
    controller_r: &Matrix,
    x_star: &Vector,
) -> Result<f64> {
    let h = benchmark.plant().matrix();
    let residual = h * x_star - benchmark.reference();
    let q_res = benchmark.q().matrix() * residual;
    let g = (model.matrix() - h).tr_mul(&q_res) + (controller_r - benchmark.r()) * x_star;
    Ok((w.inv_sqrt() * g).norm())
}

/// `||W^{-1/2} g||_2`, the W-dual norm of a gradient.
pub fn dual_norm(g: &Vector, w: &SpdMatrix) -> f64 {
    (w.inv_sqrt() * g).norm()
}

/// `n`-dimensional R-sequence (Roberts' generalized golden ratio) mapped into
/// `set`; the `count` points are the columns of the result.
pub fn r_sequence_points(set: &BoxSet, count: usize) -> Result<Matrix> {
    if !set.is_bounded() {
        return Err(Error::InvalidParameter(
            "low-discrepancy sampling needs a bounded box".into(),
        ));
    }
    let n = set.dim();
    // root of x^{n+1} = x + 1
    let mut g = 2.0f64;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (n as f64 + 1.0));
    }
    let steps: Vec<f64> = (1..=n).map(|i| g.powi(-(i as i32)).fract()).collect();
    Ok(Matrix::from_fn(n, count, |i, j| {
        let u = (0.5 + steps[i] * (j + 1) as f64).fract();
        set.lower()[i] + u * (set.upper()[i] - set.lower()[i])
    }))
}

/// Running maximum of the W-dual gradient norm of the true costs.
#[derive(Debug, Clone)]
pub struct LipschitzEstimator {
    samples: Option<Matrix>,
    max_dual_norm: f64,
}

impl LipschitzEstimator {
    /// `samples` points from the box (none for an unbounded set).
    pub fn new(set: &BoxSet, samples: usize) -> Result<Self> {
        let samples = if set.is_bounded() && samples > 0 {
            Some(r_sequence_points(set, samples)?)
        } else {
            None
        };
        Ok(Self {
            samples,
            max_dual_norm: 0.0,
        })
    }

    /// Records `||W^{-1/2} ∇f(x)||` at each point of `points`.
    pub fn observe_points(
        &mut self,
        cost: &QuadCost,
        w: &SpdMatrix,
        points: &[&Vector],
    ) -> Result<()> {
        for x in points {
            let g = cost.true_grad(x)?;
            self.max_dual_norm = self.max_dual_norm.max(dual_norm(&g, w));
        }
        Ok(())
    }

    /// Records the gradient norm over the whole box sample for `cost`.
    pub fn observe_samples(&mut self, cost: &QuadCost, w: &SpdMatrix) -> Result<()> {
        let Some(samples) = &self.samples else {
            return Ok(());
        };
        let form = cost.quadratic_form();
        let mut grads = &form.hessian * samples;
        for mut col in grads.column_iter_mut() {
            col -= &form.linear;
        }
        let scaled = w.inv_sqrt() * grads;
        for col in scaled.column_iter() {
            self.max_dual_norm = self.max_dual_norm.max(col.norm());
        }
        Ok(())
    }

    pub fn max_dual_norm(&self) -> f64 {
        self.max_dual_norm
    }

    /// `L̄ = 1.05 ×` the largest observed dual gradient norm.
    pub fn finish(&self) -> f64 {
        LIPSCHITZ_SAFETY * self.max_dual_norm
    }
}

/// Worst ratio `|f(x) - f(y)| / (L̄ ||x - y||_W)` over `pairs` uniform pairs
/// from `set`; at most 1 when `L̄` is valid on the sample.
pub fn validate_lipschitz(
    cost: &QuadCost,
    w: &SpdMatrix,
    set: &BoxSet,
    lipschitz: f64,
    pairs: usize,
    rng: &mut CounterRng,
) -> Result<f64> {
    if !set.is_bounded() {
        return Err(Error::InvalidParameter(
            "pair validation needs a bounded box".into(),
        ));
    }
    let n = set.dim();
    let draw = |rng: &mut CounterRng| {
        Vector::from_fn(n, |i, _| rng.uniform(set.lower()[i], set.upper()[i]))
    };
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = draw(rng);
        let y = draw(rng);
        let gap = (cost.eval(&x)? - cost.eval(&y)?).abs();
        let dist = weighted_vec_norm(&(&x - &y), w)?;
        if dist > 0.0 {
            worst = worst.max(gap / (lipschitz * dist));
        }
    }
    Ok(worst)
}
