//! Non-collaborative adaptive protocol.
//!
//! Agents only see `ζ_i = Σ_j ℓ_ij y_j`. After the output/state coordinate
//! change `x̃ = S x`, `ỹ = T y` the first `n − m` states are reconstructed
//! by a local observer driven by `ζ_i`, and the remaining `m` states are
//! read directly from the network signal:
//!
//! ```text
//! ξ̂1' = A11 ξ̂1 + A12 ζ2 + H1 (C1 ξ̂1 − ζ1)
//! ξ̂   = [ξ̂1; ζ2]
//! ρ'  = ξ̂ᵀ P B̃ B̃ᵀ P ξ̂
//! u   = −ρ B̃ᵀ P ξ̂
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ctrl::{self, LinearAgent};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::scenario::mat17;

/// Coordinates in which `S B = [0; B2]` and `T C S⁻¹ = [[C1, 0], [0, I]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Siso1Form {
    #[serde(with = "mat17")]
    pub s: Mat,
    #[serde(with = "mat17")]
    pub t: Mat,
    /// `n − m`
    pub n1: usize,
    /// `p − m`
    pub p1: usize,
    #[serde(with = "mat17")]
    pub a11: Mat,
    #[serde(with = "mat17")]
    pub a12: Mat,
    #[serde(with = "mat17")]
    pub a21: Mat,
    #[serde(with = "mat17")]
    pub a22: Mat,
    #[serde(with = "mat17")]
    pub b2: Mat,
    #[serde(with = "mat17")]
    pub c1: Mat,
}

/// Residuals of the defining identities of a [`Siso1Form`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormResiduals {
    /// `‖(S B)_top‖`
    pub b_top: f64,
    /// norm of the off-diagonal blocks of `T C S⁻¹`
    pub c_off: f64,
    /// `‖(T C S⁻¹)_22 − I‖`
    pub c_identity: f64,
}

impl Siso1Form {
    /// Validates a caller-supplied `(S, T)` pair against the agent.
    pub fn from_transforms(agent: &LinearAgent, s: Mat, t: Mat) -> Result<Self> {
        let (n, m, p) = (agent.n(), agent.m(), agent.p());
        if s.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "transform S",
                expected: n,
                got: s.nrows(),
            });
        }
        if t.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                context: "transform T",
                expected: p,
                got: t.nrows(),
            });
        }
        if p < m {
            return Err(Error::InvalidAgent("fewer outputs than inputs".into()));
        }
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidAgent("transform S is singular".into()))?;
        if t.clone().try_inverse().is_none() {
            return Err(Error::InvalidAgent("transform T is singular".into()));
        }
        let (n1, p1) = (n - m, p - m);
        let at = &s * agent.a() * &s_inv;
        let bt = &s * agent.b();
        let ct = &t * agent.c() * &s_inv;

        let res = residuals_of(&bt, &ct, n1, p1);
        let b_tol = 1e-10 * agent.b().norm().max(1.0);
        let c_tol = 1e-10 * agent.c().norm().max(1.0);
        if res.b_top > b_tol || res.c_off > c_tol || res.c_identity > 1e-10 {
            return Err(Error::InvalidAgent(format!(
                "(S, T) does not produce the required block structure \
                 (|B_top| = {:.2e}, |C_off| = {:.2e}, |C_22 - I| = {:.2e})",
                res.b_top, res.c_off, res.c_identity
            )));
        }
        let b2 = bt.view((n1, 0), (m, m)).into_owned();
        if linalg::rank(&b2) != m {
            return Err(Error::InvalidAgent("B2 is not invertible".into()));
        }
        Ok(Siso1Form {
            a11: at.view((0, 0), (n1, n1)).into_owned(),
            a12: at.view((0, n1), (n1, m)).into_owned(),
            a21: at.view((n1, 0), (m, n1)).into_owned(),
            a22: at.view((n1, n1), (m, m)).into_owned(),
            b2,
            c1: ct.view((0, 0), (p1, n1)).into_owned(),
            s,
            t,
            n1,
            p1,
        })
    }

    pub fn a_tilde(&self) -> Mat {
        let n = self.n1 + self.b2.nrows();
        let m = self.b2.nrows();
        let mut a = Mat::zeros(n, n);
        a.view_mut((0, 0), (self.n1, self.n1)).copy_from(&self.a11);
        a.view_mut((0, self.n1), (self.n1, m)).copy_from(&self.a12);
        a.view_mut((self.n1, 0), (m, self.n1)).copy_from(&self.a21);
        a.view_mut((self.n1, self.n1), (m, m)).copy_from(&self.a22);
        a
    }

    pub fn b_tilde(&self) -> Mat {
        let m = self.b2.nrows();
        let mut b = Mat::zeros(self.n1 + m, m);
        b.view_mut((self.n1, 0), (m, m)).copy_from(&self.b2);
        b
    }

    /// Residuals recomputed from the agent matrices.
    pub fn residuals(&self, agent: &LinearAgent) -> FormResiduals {
        let s_inv = self.s.clone().try_inverse().expect("S validated at construction");
        let bt = &self.s * agent.b();
        let ct = &self.t * agent.c() * s_inv;
        residuals_of(&bt, &ct, self.n1, self.p1)
    }
}

fn residuals_of(bt: &Mat, ct: &Mat, n1: usize, p1: usize) -> FormResiduals {
    let m = bt.ncols();
    let b_top = bt.view((0, 0), (n1, m)).norm();
    let c_off = ct.view((0, n1), (p1, m)).norm() + ct.view((p1, 0), (m, n1)).norm();
    let c_identity = (ct.view((p1, n1), (m, m)).into_owned() - Mat::identity(m, m)).norm();
    FormResiduals {
        b_top,
        c_off,
        c_identity,
    }
}

/// Constructs `(S, T)` for an agent satisfying the non-collaborative
/// assumptions.
///
/// `S = [N; T2 C]` with the rows of `N` spanning the left null space of `B`,
/// and `T = [T1; T2]` with `T2` the pseudo-inverse of `CB` and `T1` spanning
/// its left null space. Null-space bases are brought to reduced row echelon
/// form, so coordinate-aligned agents get `S = I`, `T = I` when possible.
pub fn transform_form(agent: &LinearAgent) -> Result<Siso1Form> {
    let report = ctrl::analyze_structure(agent);
    let failed = report.noncollaborative_failures();
    if !failed.is_empty() {
        return Err(Error::AssumptionViolated(failed));
    }
    let (n, m, p) = (agent.n(), agent.m(), agent.p());
    let b = agent.b();
    let c = agent.c();
    let cb = c * b;

    let n_rows = linalg::left_null_rows(b, 0.0);
    let t2 = linalg::pinv(&cb);
    let t1 = linalg::left_null_rows(&cb, c.norm() * b.norm());
    if n_rows.nrows() != n - m || t1.nrows() != p - m {
        return Err(Error::InvalidAgent(
            "null-space dimensions inconsistent with rank B = rank CB = m".into(),
        ));
    }
    let s2 = &t2 * c;
    let mut s = Mat::zeros(n, n);
    s.view_mut((0, 0), (n - m, n)).copy_from(&n_rows);
    s.view_mut((n - m, 0), (m, n)).copy_from(&s2);
    let mut t = Mat::zeros(p, p);
    t.view_mut((0, 0), (p - m, p)).copy_from(&t1);
    t.view_mut((p - m, 0), (m, p)).copy_from(&t2);
    Siso1Form::from_transforms(agent, s, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcProtocolDesign {
    pub form: Siso1Form,
    /// Observer gain, `(n − m) × (p − m)`.
    #[serde(with = "mat17")]
    pub h1: Mat,
    /// Stabilizing solution of `ÃᵀP + PÃ − PB̃B̃ᵀP + I = 0`.
    #[serde(with = "mat17")]
    pub p: Mat,
    #[serde(with = "mat17")]
    pub a_tilde: Mat,
    #[serde(with = "mat17")]
    pub b_tilde: Mat,
    /// `C1⁻¹` when the agent has full-state coupling (`p = n`); the observer
    /// is then bypassed and `ξ̂1 = C1⁻¹ ζ1`.
    #[serde(default, with = "mat17::option", skip_serializing_if = "Option::is_none")]
    pub c1_inv: Option<Mat>,
}

impl NcProtocolDesign {
    /// Dimension of the per-agent observer state.
    pub fn observer_dim(&self) -> usize {
        if self.c1_inv.is_some() {
            0
        } else {
            self.form.n1
        }
    }

    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }
    pub fn m(&self) -> usize {
        self.b_tilde.ncols()
    }
    pub fn p(&self) -> usize {
        self.form.t.nrows()
    }

    /// `B̃ᵀ P`
    pub fn feedback_row(&self) -> Mat {
        self.b_tilde.transpose() * &self.p
    }

    /// Residual of the Riccati equation at the stored `P`.
    pub fn riccati_residual(&self) -> f64 {
        ctrl::care_residual(&self.a_tilde, &self.b_tilde, &self.p)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NcOptions {
    /// Use this `H1` instead of the dual-Riccati gain.
    pub observer_gain: Option<Mat>,
    /// Use this `(S, T)` instead of the constructive choice.
    pub transform: Option<(Mat, Mat)>,
}

/// Synthesizes the non-collaborative protocol from the agent model alone.
pub fn design_nc(agent: &LinearAgent) -> Result<NcProtocolDesign> {
    design_nc_with(agent, &NcOptions::default())
}

pub fn design_nc_with(agent: &LinearAgent, opts: &NcOptions) -> Result<NcProtocolDesign> {
    let form = match &opts.transform {
        None => transform_form(agent)?,
        Some((s, t)) => {
            let failed = ctrl::analyze_structure(agent).noncollaborative_failures();
            if !failed.is_empty() {
                return Err(Error::AssumptionViolated(failed));
            }
            Siso1Form::from_transforms(agent, s.clone(), t.clone())?
        }
    };
    let h1 = match &opts.observer_gain {
        None => ctrl::observer_gain(&form.a11, &form.c1)?,
        Some(h) => {
            if h.shape() != (form.n1, form.p1) {
                return Err(Error::DimensionMismatch {
                    context: "observer gain H1 rows",
                    expected: form.n1,
                    got: h.nrows(),
                });
            }
            if form.n1 > 0 && linalg::spectral_abscissa(&(&form.a11 + h * &form.c1)) >= 0.0 {
                return Err(Error::InvalidScenario(
                    "A11 + H1 C1 is not Hurwitz for the supplied H1".into(),
                ));
            }
            h.clone()
        }
    };
    let a_tilde = form.a_tilde();
    let b_tilde = form.b_tilde();
    let p = ctrl::solve_care(&a_tilde, &b_tilde)?;
    let c1_inv = if agent.p() == agent.n() && form.n1 > 0 {
        form.c1.clone().try_inverse()
    } else {
        None
    };
    Ok(NcProtocolDesign {
        form,
        h1,
        p,
        a_tilde,
        b_tilde,
        c1_inv,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcProtocolState {
    /// `ξ̂1`, empty under full-state coupling.
    pub xi1_hat: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcDerivative {
    pub xi1_hat: DVector<f64>,
    pub rho: f64,
}

/// `ξ̂ = [ξ̂1; ζ2]` for the given state and network signal.
pub fn estimate(state: &NcProtocolState, zeta_i: &DVector<f64>, design: &NcProtocolDesign) -> Result<DVector<f64>> {
    let (xi1, zeta2) = split_estimate(state, zeta_i, design)?;
    let n1 = design.form.n1;
    let mut xi = DVector::zeros(design.n());
    xi.rows_mut(0, n1).copy_from(&xi1);
    xi.rows_mut(n1, design.m()).copy_from(&zeta2);
    Ok(xi)
}

fn split_estimate(
    state: &NcProtocolState,
    zeta_i: &DVector<f64>,
    design: &NcProtocolDesign,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if zeta_i.len() != design.p() {
        return Err(Error::DimensionMismatch {
            context: "nc_step (zeta)",
            expected: design.p(),
            got: zeta_i.len(),
        });
    }
    if state.xi1_hat.len() != design.observer_dim() {
        return Err(Error::DimensionMismatch {
            context: "nc_step (observer state)",
            expected: design.observer_dim(),
            got: state.xi1_hat.len(),
        });
    }
    let p1 = design.form.p1;
    let tz = &design.form.t * zeta_i;
    let zeta2 = tz.rows(p1, design.m()).into_owned();
    let xi1 = match &design.c1_inv {
        Some(c1_inv) => c1_inv * tz.rows(0, p1),
        None => state.xi1_hat.clone(),
    };
    Ok((xi1, zeta2))
}

/// Right-hand side of the protocol state and the control input.
pub fn nc_step(
    state: &NcProtocolState,
    zeta_i: &DVector<f64>,
    design: &NcProtocolDesign,
) -> Result<(NcDerivative, DVector<f64>)> {
    let (xi1, zeta2) = split_estimate(state, zeta_i, design)?;
    let f = &design.form;
    let tz = &f.t * zeta_i;
    let zeta1 = tz.rows(0, f.p1);

    let xi1_dot = if design.c1_inv.is_some() {
        DVector::zeros(0)
    } else {
        &f.a11 * &xi1 + &f.a12 * &zeta2 + &design.h1 * (&f.c1 * &xi1 - zeta1)
    };
    let mut xi = DVector::zeros(design.n());
    xi.rows_mut(0, f.n1).copy_from(&xi1);
    xi.rows_mut(f.n1, design.m()).copy_from(&zeta2);
    let v = design.b_tilde.transpose() * (&design.p * xi);
    let rho_dot = v.norm_squared();
    let u = -state.rho * v;
    Ok((
        NcDerivative {
            xi1_hat: xi1_dot,
            rho: rho_dot,
        },
        u,
    ))
}
