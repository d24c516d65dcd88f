//! Dense helpers shared by the synthesis and analysis modules.

use nalgebra::{Complex, ComplexField, DMatrix, Dyn, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) type Mat = DMatrix<f64>;
pub(crate) type C64 = Complex<f64>;

/// Relative threshold for rank decisions.
pub(crate) const RANK_RTOL: f64 = 1e-8;

/// Singular values in descending order.
pub(crate) fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank: number of singular values above `rtol * scale`, where the
/// scale is the largest singular value unless a larger floor is supplied.
pub(crate) fn rank_with_floor<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, rtol: f64, floor: f64) -> usize {
    let sv = singular_values(m);
    let scale = sv.first().copied().unwrap_or(0.0).max(floor);
    if scale == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * scale).count()
}

pub(crate) fn rank<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> usize {
    rank_with_floor(m, RANK_RTOL, 0.0)
}

/// Orthonormal basis (as columns) of `{x : M x = 0}`, with the rank decided
/// relative to the largest singular value or `floor`, whichever is larger.
pub(crate) fn null_space(m: &Mat, floor: f64) -> Mat {
    let (r, c) = m.shape();
    if c == 0 {
        return Mat::zeros(0, 0);
    }
    // pad to at least square so the SVD returns a complete right basis
    let padded = if r < c {
        let mut p = Mat::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let scale = sv.iter().cloned().fold(0.0_f64, f64::max).max(floor);
    let tol = RANK_RTOL * scale;
    let mut idx: Vec<usize> = (0..sv.len()).filter(|&i| scale == 0.0 || sv[i] <= tol).collect();
    // ascending singular value, deterministic
    idx.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]).then(a.cmp(&b)));
    let mut out = Mat::zeros(c, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &v_t.row(i).transpose());
    }
    out
}

/// Rows spanning `{z : zᵀ M = 0}`, canonicalized to reduced row echelon form.
pub(crate) fn left_null_rows(m: &Mat, floor: f64) -> Mat {
    let basis = null_space(&m.transpose(), floor);
    rref_rows(&basis.transpose())
}

/// Reduced row echelon form with partial pivoting; tiny entries are chopped
/// so coordinate-aligned subspaces come out exactly.
pub(crate) fn rref_rows(m: &Mat) -> Mat {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax().max(1.0);
    let mut lead = 0;
    for col in 0..cols {
        if lead >= rows {
            break;
        }
        let (mut best, mut best_val) = (lead, 0.0);
        for r in lead..rows {
            if a[(r, col)].abs() > best_val {
                best_val = a[(r, col)].abs();
                best = r;
            }
        }
        if best_val <= 1e-10 * scale {
            continue;
        }
        a.swap_rows(lead, best);
        let piv = a[(lead, col)];
        for c in 0..cols {
            a[(lead, c)] /= piv;
        }
        for r in 0..rows {
            if r != lead {
                let f = a[(r, col)];
                if f != 0.0 {
                    for c in 0..cols {
                        let v = a[(lead, c)];
                        a[(r, c)] -= f * v;
                    }
                }
            }
        }
        lead += 1;
    }
    a.apply(|x| {
        if x.abs() < 1e-13 {
            *x = 0.0
        }
    });
    a
}

/// Moore-Penrose pseudo-inverse.
pub(crate) fn pinv(m: &Mat) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    svd.pseudo_inverse(1e-12 * m.amax().max(f64::MIN_POSITIVE))
        .expect("u and v_t computed")
}

fn schur_eigenvalues(m: &Mat) -> Option<Vec<C64>> {
    let budget = 200 * m.nrows().max(10);
    Schur::try_new(m.clone(), f64::EPSILON, budget).map(|s| s.complex_eigenvalues().iter().copied().collect())
}

pub(crate) fn eigenvalues(m: &Mat) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev = schur_eigenvalues(m)
        .or_else(|| {
            // Francis steps can cycle on exactly nilpotent Hessenberg input;
            // an orthogonal similarity breaks the structure.
            (0..4u64).find_map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x0e16_0000 + seed);
                let g = Mat::from_fn(m.nrows(), m.nrows(), |_, _| rng.random_range(-1.0..1.0));
                let q = g.qr().q();
                schur_eigenvalues(&(q.transpose() * m * &q))
            })
        })
        .expect("Schur iteration failed on every similarity transform");
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

/// Largest real part of the spectrum; `-inf` for empty matrices.
pub(crate) fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Merge eigenvalues that the QR iteration split out of a (near-)defective
/// cluster; the cluster mean is far more accurate than any member.
pub(crate) fn cluster_eigenvalues(ev: &[C64]) -> Vec<C64> {
    let mut used = vec![false; ev.len()];
    let mut out = Vec::new();
    for i in 0..ev.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![ev[i]];
        used[i] = true;
        for j in (i + 1)..ev.len() {
            if !used[j] && (ev[j] - ev[i]).norm() <= 1e-4 * (1.0 + ev[i].norm()) {
                members.push(ev[j]);
                used[j] = true;
            }
        }
        let sum: C64 = members.iter().sum();
        out.push(sum / members.len() as f64);
    }
    out
}

/// Solves `Aᵀ X + X A + Q = 0` through the Kronecker-vectorized system.
/// Returns `None` when the operator is singular.
pub(crate) fn solve_lyapunov(a: &Mat, q: &Mat) -> Option<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Some(Mat::zeros(0, 0));
    }
    let eye = Mat::identity(n, n);
    let at = a.transpose();
    // vec(Aᵀ X) = (I ⊗ Aᵀ) vec X, vec(X A) = (Aᵀ ⊗ I) vec X
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice_generic(Dyn(n * n), Dyn(1), q.as_slice());
    let sol = op.lu().solve(&rhs)?;
    let x = Mat::from_column_slice(n, n, sol.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

pub(crate) fn to_complex(m: &Mat) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Smallest singular value of `[A - λI ; C]` or `[A - λI, B]` style stacks,
/// relative to the largest.
pub(crate) fn pbh_full_rank(a: &Mat, other: &Mat, lambda: C64, stack_rows: bool) -> bool {
    let n = a.nrows();
    let shifted = to_complex(a) - DMatrix::<C64>::identity(n, n) * lambda;
    let other_c = to_complex(other);
    let stacked = if stack_rows {
        let mut s = DMatrix::<C64>::zeros(n + other.nrows(), n);
        s.view_mut((0, 0), (n, n)).copy_from(&shifted);
        s.view_mut((n, 0), (other.nrows(), n)).copy_from(&other_c);
        s
    } else {
        let mut s = DMatrix::<C64>::zeros(n, n + other.ncols());
        s.view_mut((0, 0), (n, n)).copy_from(&shifted);
        s.view_mut((0, n), (n, other.ncols())).copy_from(&other_c);
        s
    };
    let floor = a.norm().max(other.norm()).max(1.0);
    rank_with_floor(&stacked, RANK_RTOL, floor) == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn null_space_of_wide_matrix() {
        let m = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let ns = null_space(&m, 0.0);
        assert_eq!(ns.shape(), (3, 1));
        assert!((ns[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rref_recovers_coordinate_basis() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = dmatrix![s, s, 0.0; -s, s, 0.0];
        let r = rref_rows(&m);
        assert_eq!(r, dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0]);
    }

    #[test]
    fn lyapunov_scalar() {
        // 2ax + q = 0
        let x = solve_lyapunov(&dmatrix![-1.0], &dmatrix![1.0]).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_residual() {
        let a = dmatrix![-1.0, 2.0, 0.0; 0.0, -3.0, 1.0; 1.0, 0.0, -2.0];
        let q = Mat::identity(3, 3);
        let x = solve_lyapunov(&a, &q).unwrap();
        let r = a.transpose() * &x + &x * &a + q;
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn clustering_merges_split_defective_eigenvalues() {
        let ev = vec![
            C64::new(1e-6, 1e-6),
            C64::new(1e-6, -1e-6),
            C64::new(-2e-6, 0.0),
            C64::new(1.0, 0.0),
        ];
        let c = cluster_eigenvalues(&ev);
        assert_eq!(c.len(), 2);
        assert!(c[0].norm() < 1e-12);
    }
}
