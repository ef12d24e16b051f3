//! Pre-flight check of the hypotheses behind the regret bounds, without
//! running any trials.

use std::fmt;

use serde::Serialize;

use crate::controller::{choose_regularization, max_step, preconditioner, w_factor};
use crate::error::Result;
use crate::linalg::{Matrix, SpdMatrix};

use super::config::{ExperimentConfig, Regularization, UncertaintyMode};

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub rho: f64,
    pub w: f64,
    pub gamma: f64,
    pub w_gamma: f64,
    /// `None` when `wγ >= 1`.
    pub max_step: Option<f64>,
    pub alpha0: Option<f64>,
    pub checks: Vec<HypothesisCheck>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rho       = {:e}", self.rho)?;
        writeln!(f, "w         = {:.6}", self.w)?;
        writeln!(f, "gamma     = {:.6}", self.gamma)?;
        writeln!(f, "w*gamma   = {:.6}", self.w_gamma)?;
        match self.max_step {
            Some(m) => writeln!(f, "max_step  = {m:.6}")?,
            None => writeln!(f, "max_step  = (undefined)")?,
        }
        if let Some(a) = self.alpha0 {
            writeln!(f, "alpha0    = {a:.6}")?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Evaluates the step-size and contraction hypotheses for `cfg`.
/// Violations are reported, not returned as errors.
pub fn check_bounds(cfg: &ExperimentConfig) -> Result<BoundsReport> {
    cfg.validate()?;
    let m = cfg.lifted_model()?;
    let n = cfg.horizon;
    let q = SpdMatrix::scaled_identity(n, cfg.output_weight)?;
    let mut checks = Vec::new();
    let rho = match cfg.regularization {
        Regularization::Fixed { rho } => rho,
        Regularization::Auto { margin } => {
            match choose_regularization(&m, &q, cfg.gamma0, margin) {
                Ok(rho) => {
                    checks.push(HypothesisCheck {
                        name: "regularization search".into(),
                        pass: true,
                        detail: format!("ρ = {rho:e} reaches wγ <= {margin}"),
                    });
                    rho
                }
                Err(e) => {
                    checks.push(HypothesisCheck {
                        name: "regularization search".into(),
                        pass: false,
                        detail: e.to_string(),
                    });
                    return Ok(BoundsReport {
                        rho: f64::NAN,
                        w: f64::NAN,
                        gamma: cfg.gamma0,
                        w_gamma: f64::NAN,
                        max_step: None,
                        alpha0: None,
                        checks,
                    });
                }
            }
        }
    };
    let w_mat = preconditioner(&m, &q, &(Matrix::identity(n, n) * rho));
    let w_mat = match w_mat {
        Ok(w) => w,
        Err(e) => {
            checks.push(HypothesisCheck {
                name: "W positive definite".into(),
                pass: false,
                detail: e.to_string(),
            });
            return Ok(BoundsReport {
                rho,
                w: f64::NAN,
                gamma: cfg.gamma0,
                w_gamma: f64::NAN,
                max_step: None,
                alpha0: None,
                checks,
            });
        }
    };
    checks.push(HypothesisCheck {
        name: "W positive definite".into(),
        pass: true,
        detail: format!(
            "eigenvalues in [{:e}, {:e}]",
            w_mat.min_eigenvalue(),
            w_mat.max_eigenvalue()
        ),
    });
    let w = w_factor(&w_mat, &m, &q)?;
    let w_gamma = w * cfg.gamma0;
    checks.push(HypothesisCheck {
        name: "wγ < 1".into(),
        pass: w_gamma < 1.0,
        detail: format!("wγ = {w_gamma:.6}"),
    });
    let max_step = max_step(w, cfg.gamma0).ok();
    let alpha0 = max_step.map(|ms| cfg.step.alpha0.unwrap_or(cfg.step.alpha0_fraction * ms));
    if let (Some(ms), Some(a)) = (max_step, alpha0) {
        checks.push(HypothesisCheck {
            name: "α₀ in (0, 2/(1+wγ))".into(),
            pass: a > 0.0 && a < ms,
            detail: format!("α₀ = {a:.6}, upper limit {ms:.6}"),
        });
    }
    checks.push(HypothesisCheck {
        name: "c in [0, 1)".into(),
        pass: (0.0..1.0).contains(&cfg.step.decay),
        detail: format!("c = {}", cfg.step.decay),
    });
    if cfg.uncertainty == UncertaintyMode::Adaptive {
        checks.push(HypothesisCheck {
            name: "γ_k nonincreasing".into(),
            pass: true,
            detail: "γ_k = γ₀ k^(-1/2)".into(),
        });
    }
    Ok(BoundsReport {
        rho,
        w,
        gamma: cfg.gamma0,
        w_gamma,
        max_step,
        alpha0,
        checks,
    })
}
