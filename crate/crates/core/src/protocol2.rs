//! Collaborative adaptive protocol.
//!
//! Each agent runs an observer whose state `x̂_i` is also exchanged over the
//! network (`ζ̃_i = Σ_j ℓ_ij x̂_j`):
//!
//! ```text
//! x̂' = A x̂ + B u − ρ Q Cᵀ (C ζ̃ − ζ)
//! ρ'  = ‖C ζ̃ − ζ‖²
//! u   = F x̂
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ctrl::{self, LinearAgent};
use crate::error::{AssumptionItem, Error, Result};
use crate::linalg::{self, Mat, C64};
use crate::scenario::mat17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColProtocolDesign {
    #[serde(with = "mat17")]
    pub a: Mat,
    #[serde(with = "mat17")]
    pub b: Mat,
    #[serde(with = "mat17")]
    pub c: Mat,
    /// Stabilizing solution of `AQ + QAᵀ − QCᵀCQ + I = 0`.
    #[serde(with = "mat17")]
    pub q: Mat,
    /// State feedback with `A + BF` Hurwitz.
    #[serde(with = "mat17")]
    pub f: Mat,
    /// Non-fatal assumption gaps found during synthesis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ColProtocolDesign {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Frobenius norm of `AQ + QAᵀ − QCᵀCQ + I`.
    pub fn riccati_residual(&self) -> f64 {
        ctrl::care_residual(&self.a.transpose(), &self.c.transpose(), &self.q)
    }

    /// Same protocol with a different stabilizing feedback.
    pub fn with_feedback(&self, f: Mat) -> Result<Self> {
        validate_feedback(&self.a, &self.b, &f)?;
        Ok(ColProtocolDesign { f, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackChoice {
    /// `F = −BᵀX` from the control Riccati equation.
    Riccati,
    /// Single-input pole placement.
    Poles(Vec<C64>),
    /// An explicit gain, checked for stability.
    Gain(Mat),
}

fn validate_feedback(a: &Mat, b: &Mat, f: &Mat) -> Result<()> {
    if f.shape() != (b.ncols(), a.nrows()) {
        return Err(Error::DimensionMismatch {
            context: "feedback F columns",
            expected: a.nrows(),
            got: f.ncols(),
        });
    }
    if linalg::spectral_abscissa(&(a + b * f)) >= -1e-6 {
        return Err(Error::InvalidScenario("A + BF is not Hurwitz".into()));
    }
    Ok(())
}

pub const OBSERVABILITY_WARNING: &str =
    "(C, A) is detectable but not observable; convergence is only guaranteed for observable agents";

pub fn design_col(agent: &LinearAgent) -> Result<ColProtocolDesign> {
    design_col_with(agent, &FeedbackChoice::Riccati)
}

/// Synthesizes the collaborative protocol from the agent model alone.
///
/// Unobservable but detectable agents are accepted with a warning;
/// undetectable or unstabilizable agents are rejected.
pub fn design_col_with(agent: &LinearAgent, feedback: &FeedbackChoice) -> Result<ColProtocolDesign> {
    let (a, b, c) = (agent.a(), agent.b(), agent.c());
    let report = ctrl::analyze_structure(agent);
    let mut failed = Vec::new();
    if !report.stabilizable {
        failed.push(AssumptionItem::Stabilizable);
    }
    let mut warnings = Vec::new();
    if !report.observable {
        if report.detectable {
            warnings.push(OBSERVABILITY_WARNING.to_string());
        } else {
            failed.push(AssumptionItem::Observable);
        }
    }
    if !failed.is_empty() {
        return Err(Error::AssumptionViolated(failed));
    }

    let q = ctrl::solve_care(&a.transpose(), &c.transpose()).map_err(|e| match e {
        Error::NotStabilizable => Error::AssumptionViolated(vec![AssumptionItem::Detectable]),
        other => other,
    })?;
    let f = match feedback {
        FeedbackChoice::Riccati => ctrl::stabilizing_gain(a, b)?,
        FeedbackChoice::Poles(poles) => ctrl::place_poles(a, b, poles)?,
        FeedbackChoice::Gain(f) => f.clone(),
    };
    validate_feedback(a, b, &f)?;
    Ok(ColProtocolDesign {
        a: a.clone(),
        b: b.clone(),
        c: c.clone(),
        q,
        f,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColProtocolState {
    /// `x̂_i`, also the communicated protocol state.
    pub x_hat: DVector<f64>,
    pub rho: f64,
}

/// `u = F x̂`.
pub fn col_control(state: &ColProtocolState, design: &ColProtocolDesign) -> DVector<f64> {
    &design.f * &state.x_hat
}

/// `C ζ̃ − ζ`
pub fn innovation(zeta_i: &DVector<f64>, zeta_tilde_i: &DVector<f64>, design: &ColProtocolDesign) -> DVector<f64> {
    &design.c * zeta_tilde_i - zeta_i
}

/// Right-hand side `(x̂', ρ')`.
pub fn col_step(
    state: &ColProtocolState,
    zeta_i: &DVector<f64>,
    zeta_tilde_i: &DVector<f64>,
    u_i: &DVector<f64>,
    design: &ColProtocolDesign,
) -> Result<(DVector<f64>, f64)> {
    let checks = [
        ("col_step (x_hat)", design.n(), state.x_hat.len()),
        ("col_step (zeta)", design.p(), zeta_i.len()),
        ("col_step (zeta_tilde)", design.n(), zeta_tilde_i.len()),
        ("col_step (u)", design.m(), u_i.len()),
    ];
    for (context, expected, got) in checks {
        if expected != got {
            return Err(Error::DimensionMismatch { context, expected, got });
        }
    }
    let e = innovation(zeta_i, zeta_tilde_i, design);
    let correction = &design.q * (design.c.transpose() * &e);
    let x_dot = &design.a * &state.x_hat + &design.b * u_i - correction * state.rho;
    Ok((x_dot, e.norm_squared()))
}
