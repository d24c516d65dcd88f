//! Structural analysis of linear agents and the synthesis primitives shared
//! by both protocol designers.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AssumptionItem, Error, Result};
use crate::linalg::{self, Mat, C64, RANK_RTOL};
use crate::scenario::mat17;

/// An agent `ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AgentRepr", into = "AgentRepr")]
pub struct LinearAgent {
    a: Mat,
    b: Mat,
    c: Mat,
}

#[derive(Serialize, Deserialize)]
struct AgentRepr {
    #[serde(with = "mat17")]
    a: Mat,
    #[serde(with = "mat17")]
    b: Mat,
    #[serde(with = "mat17")]
    c: Mat,
}

impl TryFrom<AgentRepr> for LinearAgent {
    type Error = Error;
    fn try_from(r: AgentRepr) -> Result<Self> {
        LinearAgent::new(r.a, r.b, r.c)
    }
}

impl From<LinearAgent> for AgentRepr {
    fn from(a: LinearAgent) -> Self {
        AgentRepr { a: a.a, b: a.b, c: a.c }
    }
}

impl LinearAgent {
    /// Validates dimensions, `rank B = m` and `rank C = p`.
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidAgent(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::InvalidAgent(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::InvalidAgent(format!(
                "C must be pxn with p >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidAgent("non-finite matrix entry".into()));
        }
        if linalg::rank(&b) != b.ncols() {
            return Err(Error::InvalidAgent("B must have full column rank".into()));
        }
        if linalg::rank(&c) != c.nrows() {
            return Err(Error::InvalidAgent("C must have full row rank".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub stabilizable: bool,
    pub detectable: bool,
    pub observable: bool,
    pub left_invertible: bool,
    pub uniform_rank_one: bool,
    pub minimum_phase: bool,
    pub normal_rank: usize,
    pub invariant_zeros: Vec<Complex<f64>>,
    pub open_loop_eigenvalues: Vec<Complex<f64>>,
}

impl StructuralReport {
    /// Items of the non-collaborative assumptions that fail, in a fixed order.
    pub fn noncollaborative_failures(&self) -> Vec<AssumptionItem> {
        let mut out = Vec::new();
        if !self.stabilizable {
            out.push(AssumptionItem::Stabilizable);
        }
        if !self.detectable {
            out.push(AssumptionItem::Detectable);
        }
        if !self.uniform_rank_one {
            out.push(AssumptionItem::UniformRankOne);
        }
        if !self.left_invertible {
            out.push(AssumptionItem::LeftInvertible);
        }
        if !self.minimum_phase {
            out.push(AssumptionItem::MinimumPhase);
        }
        out
    }

    /// Items of the collaborative assumption that fail.
    pub fn collaborative_failures(&self) -> Vec<AssumptionItem> {
        let mut out = Vec::new();
        if !self.stabilizable {
            out.push(AssumptionItem::Stabilizable);
        }
        if !self.observable {
            out.push(AssumptionItem::Observable);
        }
        out
    }
}

/// Eigenvalues treated as being in the closed right half plane.
const RHP_TOL: f64 = 1e-9;

pub fn is_stabilizable(a: &Mat, b: &Mat) -> bool {
    let ev = linalg::cluster_eigenvalues(&linalg::eigenvalues(a));
    ev.iter()
        .filter(|z| z.re >= -RHP_TOL)
        .all(|&z| linalg::pbh_full_rank(a, b, z, false))
}

pub fn is_detectable(c: &Mat, a: &Mat) -> bool {
    let ev = linalg::cluster_eigenvalues(&linalg::eigenvalues(a));
    ev.iter()
        .filter(|z| z.re >= -RHP_TOL)
        .all(|&z| linalg::pbh_full_rank(a, c, z, true))
}

pub fn is_observable(c: &Mat, a: &Mat) -> bool {
    let ev = linalg::cluster_eigenvalues(&linalg::eigenvalues(a));
    ev.iter().all(|&z| linalg::pbh_full_rank(a, c, z, true))
}

/// Rosenbrock system matrix `[[A − λI, B], [C, 0]]`.
pub fn rosenbrock_pencil(agent: &LinearAgent, lambda: C64) -> DMatrix<C64> {
    let (n, m, p) = (agent.n(), agent.m(), agent.p());
    let mut s = DMatrix::<C64>::zeros(n + p, n + m);
    let a = linalg::to_complex(agent.a()) - DMatrix::<C64>::identity(n, n) * lambda;
    s.view_mut((0, 0), (n, n)).copy_from(&a);
    s.view_mut((0, n), (n, m)).copy_from(&linalg::to_complex(agent.b()));
    s.view_mut((n, 0), (p, n)).copy_from(&linalg::to_complex(agent.c()));
    s
}

fn pencil_scale(agent: &LinearAgent) -> f64 {
    agent.a().norm() + agent.b().norm() + agent.c().norm() + 1.0
}

/// Normal rank of the pencil, estimated as the largest rank over three
/// pseudo-random complex test points.
pub fn normal_rank(agent: &LinearAgent) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let scale = pencil_scale(agent);
    (0..3)
        .map(|_| {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            linalg::rank_with_floor(&rosenbrock_pencil(agent, z), RANK_RTOL, 0.0)
        })
        .max()
        .unwrap_or(0)
}

/// Finite invariant zeros: values where the pencil drops below its normal
/// rank.
///
/// The pencil is compressed to a square `r × r` pencil with random
/// projections and its finite generalized eigenvalues are computed through a
/// shift-and-invert standard eigenproblem. Compression adds spurious
/// eigenvalues and rounding scatters the infinite ones, so two independent
/// compressions with different shifts are computed and only candidates
/// present in both, at which the original pencil loses rank, are kept.
pub fn invariant_zeros(agent: &LinearAgent) -> Vec<C64> {
    let r = normal_rank(agent);
    invariant_zeros_with_rank(agent, r)
}

fn invariant_zeros_with_rank(agent: &LinearAgent, r: usize) -> Vec<C64> {
    if r == 0 {
        return Vec::new();
    }
    let scale = pencil_scale(agent);
    let first = zero_candidates(agent, r, 0x5eed_0002, 0.1);
    let second = zero_candidates(agent, r, 0x5eed_0003, 0.37);
    let mut zeros: Vec<C64> = first
        .into_iter()
        .filter(|z| second.iter().any(|w| (z - w).norm() <= 1e-5 * (scale + z.norm())))
        .filter(|&lambda| {
            let sv = linalg::singular_values(&rosenbrock_pencil(agent, lambda));
            let top = sv[0].max(scale);
            sv.get(r - 1).copied().unwrap_or(0.0) <= 1e-6 * top
        })
        .collect();
    // conjugate pairs come out exactly paired for real data
    for z in zeros.iter_mut() {
        if z.im.abs() <= 1e-10 * (1.0 + z.re.abs()) {
            z.im = 0.0;
        }
    }
    zeros.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    zeros
}

fn zero_candidates(agent: &LinearAgent, r: usize, seed: u64, offset: f64) -> Vec<C64> {
    let (n, m, p) = (agent.n(), agent.m(), agent.p());
    let rows = n + p;
    let cols = n + m;
    let mut big_m = Mat::zeros(rows, cols);
    big_m.view_mut((0, 0), (n, n)).copy_from(agent.a());
    big_m.view_mut((0, n), (n, m)).copy_from(agent.b());
    big_m.view_mut((n, 0), (p, n)).copy_from(agent.c());
    let mut big_n = Mat::zeros(rows, cols);
    big_n.view_mut((0, 0), (n, n)).fill_with_identity();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_left = if r == rows {
        Mat::identity(rows, rows)
    } else {
        Mat::from_fn(r, rows, |_, _| rng.random_range(-1.0..1.0))
    };
    let w_right = if r == cols {
        Mat::identity(cols, cols)
    } else {
        Mat::from_fn(cols, r, |_, _| rng.random_range(-1.0..1.0))
    };
    let ms = &w_left * &big_m * &w_right;
    let ns = &w_left * &big_n * &w_right;

    let scale = pencil_scale(agent);
    // a shift that is not a generalized eigenvalue
    let shift = (1..20)
        .map(|k| 0.6180339887 * scale * k as f64 / 7.0 + offset)
        .find(|&s| {
            let d = &ms - &ns * s;
            let sv = linalg::singular_values(&d);
            sv.last().copied().unwrap_or(0.0) > 1e-6 * sv[0]
        });
    let Some(shift) = shift else {
        return Vec::new();
    };
    let Some(inv) = (&ms - &ns * shift).try_inverse() else {
        return Vec::new();
    };
    let mu = linalg::eigenvalues(&(inv * &ns));
    let mu_max = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if mu_max == 0.0 {
        return Vec::new();
    }
    mu.iter()
        .filter(|z| z.norm() > 1e-10 * mu_max.max(1.0 / scale))
        .map(|&z| C64::new(shift, 0.0) + C64::new(1.0, 0.0) / z)
        .collect()
}

pub fn analyze_structure(agent: &LinearAgent) -> StructuralReport {
    let (a, b, c) = (agent.a(), agent.b(), agent.c());
    let (n, m) = (agent.n(), agent.m());
    let normal_rank = normal_rank(agent);
    let left_invertible = normal_rank == n + m;
    let cb = c * b;
    let cb_floor = c.norm() * b.norm();
    let uniform_rank_one = left_invertible && linalg::rank_with_floor(&cb, RANK_RTOL, cb_floor) == m;
    let invariant_zeros = invariant_zeros_with_rank(agent, normal_rank);
    let minimum_phase = invariant_zeros.iter().all(|z| z.re < 0.0);
    StructuralReport {
        stabilizable: is_stabilizable(a, b),
        detectable: is_detectable(c, a),
        observable: is_observable(c, a),
        left_invertible,
        uniform_rank_one,
        minimum_phase,
        normal_rank,
        invariant_zeros,
        open_loop_eigenvalues: linalg::eigenvalues(a),
    }
}

/// Frobenius norm of `AᵀP + PA − PBBᵀP + I`.
pub fn care_residual(a: &Mat, b: &Mat, p: &Mat) -> f64 {
    let n = a.nrows();
    (a.transpose() * p + p * a - p * b * b.transpose() * p + Mat::identity(n, n)).norm()
}

const NEWTON_BUDGET: usize = 100;

/// Stabilizing solution of `AᵀP + PA − PBBᵀP + I = 0`.
///
/// Newton-Kleinman iteration started from a stabilizing gain obtained with
/// Bass' shifted-Lyapunov construction (matrix sign function of the
/// Hamiltonian when `(A, B)` is stabilizable but not controllable).
pub fn solve_care(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_care (A)",
            expected: n,
            got: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_care (B rows)",
            expected: n,
            got: b.nrows(),
        });
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if !is_stabilizable(a, b) {
        return Err(Error::NotStabilizable);
    }
    let eye = Mat::identity(n, n);
    let mut k = initial_stabilizing_gain(a, b)?;
    let mut p = Mat::zeros(n, n);
    let mut previous = f64::INFINITY;
    for _ in 0..NEWTON_BUDGET {
        let closed = a - b * &k;
        let q = &eye + k.transpose() * &k;
        let Some(next) = linalg::solve_lyapunov(&closed, &q) else {
            break;
        };
        p = next;
        k = b.transpose() * &p;
        let res = care_residual(a, b, &p);
        // stop at the target, or once rounding error stalls the quadratic phase
        if res <= 1e-10 * (1.0 + p.norm_squared()) || res >= previous {
            break;
        }
        previous = res;
    }
    let res = care_residual(a, b, &p);
    if !res.is_finite() || res > 1e-8 * (1.0 + p.norm_squared()) {
        return Err(Error::SolverDivergence { residual: res });
    }
    if p.clone().cholesky().is_none() {
        return Err(Error::SolverDivergence { residual: res });
    }
    if linalg::spectral_abscissa(&(a - b * b.transpose() * &p)) >= 0.0 {
        return Err(Error::SolverDivergence { residual: res });
    }
    Ok(p)
}

fn initial_stabilizing_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if linalg::spectral_abscissa(a) < -1e-9 {
        return Ok(Mat::zeros(b.ncols(), n));
    }
    // Bass: (A + βI) Z + Z (A + βI)ᵀ = 2 B Bᵀ with −(A + βI) Hurwitz
    let beta = 1.0 + a.norm();
    let shifted = a + Mat::identity(n, n) * beta;
    let rhs = -(b * b.transpose()) * 2.0;
    if let Some(z) = linalg::solve_lyapunov(&shifted.transpose(), &rhs) {
        if let Some(chol) = z.clone().cholesky() {
            let k = b.transpose() * chol.inverse();
            if linalg::spectral_abscissa(&(a - b * &k)) < 0.0 {
                return Ok(k);
            }
        }
    }
    let p0 = sign_function_care(a, b).ok_or(Error::SolverDivergence {
        residual: f64::INFINITY,
    })?;
    let k = b.transpose() * p0;
    if linalg::spectral_abscissa(&(a - b * &k)) < 0.0 {
        Ok(k)
    } else {
        Err(Error::SolverDivergence {
            residual: f64::INFINITY,
        })
    }
}

/// CARE through the matrix sign function of the Hamiltonian
/// `[[A, −BBᵀ], [−I, −Aᵀ]]`.
fn sign_function_care(a: &Mat, b: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-Mat::identity(n, n)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut z = h;
    for _ in 0..100 {
        let det = z.clone().lu().determinant().abs();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let c = det.powf(-1.0 / (2 * n) as f64);
        let zc = &z * c;
        let inv = zc.clone().try_inverse()?;
        let next = (zc + inv) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-12 * z.norm() {
            break;
        }
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-12).ok()?;
    Some((&p + p.transpose()) * 0.5)
}

/// `F` with `A + BF` Hurwitz, built as `F = −BᵀX` from the CARE solution.
pub fn stabilizing_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let x = solve_care(a, b)?;
    let f = -(b.transpose() * x);
    check_abscissa(&(a + b * &f))?;
    Ok(f)
}

fn check_abscissa(closed: &Mat) -> Result<()> {
    let alpha = linalg::spectral_abscissa(closed);
    if alpha < -1e-6 {
        Ok(())
    } else {
        Err(Error::SolverDivergence { residual: alpha })
    }
}

/// Single-input pole placement (Ackermann): `F` with `eig(A + BF)` equal to
/// `poles`. Complex poles must come in conjugate pairs.
pub fn place_poles(a: &Mat, b: &Mat, poles: &[C64]) -> Result<Mat> {
    let n = a.nrows();
    if b.ncols() != 1 {
        return Err(Error::Unsupported(
            "pole placement is implemented for single-input agents only".into(),
        ));
    }
    if poles.len() != n {
        return Err(Error::DimensionMismatch {
            context: "place_poles (number of poles)",
            expected: n,
            got: poles.len(),
        });
    }
    // characteristic polynomial coefficients, highest degree first
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for &pole in poles {
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * pole;
        }
        coeffs = next;
    }
    let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if coeffs.iter().any(|c| c.im.abs() > 1e-9 * scale) {
        return Err(Error::InvalidScenario(
            "complex target poles must come in conjugate pairs".into(),
        ));
    }
    let mut ctrb = Mat::zeros(n, n);
    let mut col: DVector<f64> = b.column(0).into_owned();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let ctrb_inv = ctrb.try_inverse().ok_or(Error::NotStabilizable)?;
    // φ(A) = A^n + c1 A^(n-1) + ... + cn I, via Horner
    let mut phi = Mat::identity(n, n);
    for c in coeffs.iter().skip(1) {
        phi = &phi * a + Mat::identity(n, n) * c.re;
    }
    let mut last = Mat::zeros(1, n);
    last[(0, n - 1)] = 1.0;
    let f = -(last * ctrb_inv * phi);
    check_abscissa(&(a + b * &f)).or_else(|e| {
        // target poles in the right half plane are the caller's choice
        if poles.iter().all(|p| p.re < -1e-6) {
            Err(e)
        } else {
            Ok(())
        }
    })?;
    Ok(f)
}

/// `H` with `Ao + H Co` Hurwitz, `H = −Y Coᵀ` from the dual CARE
/// `Ao Y + Y Aoᵀ − Y CoᵀCo Y + I = 0`.
pub fn observer_gain(ao: &Mat, co: &Mat) -> Result<Mat> {
    let q = ao.nrows();
    if co.ncols() != q {
        return Err(Error::DimensionMismatch {
            context: "observer_gain (C columns)",
            expected: q,
            got: co.ncols(),
        });
    }
    if q == 0 {
        return Ok(Mat::zeros(0, co.nrows()));
    }
    if co.nrows() == 0 {
        // nothing to inject: detectable only if already stable
        return if linalg::spectral_abscissa(ao) < -1e-6 {
            Ok(Mat::zeros(q, 0))
        } else {
            Err(Error::NotDetectable)
        };
    }
    if !is_detectable(co, ao) {
        return Err(Error::NotDetectable);
    }
    let y = solve_care(&ao.transpose(), &co.transpose()).map_err(|e| match e {
        Error::NotStabilizable => Error::NotDetectable,
        other => other,
    })?;
    let h = -(y * co.transpose());
    check_abscissa(&(ao + &h * co))?;
    Ok(h)
}
