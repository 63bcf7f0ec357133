//! Small dense linear algebra: closed-form symmetric 3×3 eigenvalues and
//! cutoff-based Moore–Penrose pseudoinverses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::so3::{Mat3, Vec3};

/// Default relative cutoff factor: singular values below
/// `PINV_CUTOFF_FACTOR · ε_mach · σ_max` are treated as zero.
pub const PINV_CUTOFF_FACTOR: f64 = 3.0;

/// Eigenvalues of a symmetric 3×3 matrix in ascending order. Only the upper
/// triangle is read.
///
/// The trigonometric root formula gives the eigenvalue farthest from the
/// other two to full precision but loses half the digits on a near-repeated
/// pair, so the pair is taken instead from the 2×2 restriction of the
/// matrix to the orthogonal complement of the isolated eigenvector.
pub fn symmetric_eigenvalues(a: &Mat3) -> [f64; 3] {
    let mut m = *a;
    m[(1, 0)] = m[(0, 1)];
    m[(2, 0)] = m[(0, 2)];
    m[(2, 1)] = m[(1, 2)];
    let scale = m.amax();
    if !scale.is_finite() {
        return [f64::NAN; 3];
    }
    if scale == 0.0 {
        return [0.0; 3];
    }
    let m = m / scale;

    let q = m.trace() / 3.0;
    let b = m - Mat3::identity() * q;
    let p = ((b * b).trace() / 6.0).sqrt();
    if p == 0.0 {
        return [q * scale; 3];
    }
    let r = ((b / p).determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let isolated = if r >= 0.0 {
        q + 2.0 * p * phi.cos()
    } else {
        q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos()
    };

    // Eigenvector of the isolated root: the largest cross product of two
    // rows of m − λI.
    let s = m - Mat3::identity() * isolated;
    let (r0, r1, r2) = (s.row(0).transpose(), s.row(1).transpose(), s.row(2).transpose());
    let v = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)]
        .into_iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .expect("three candidates");
    let v = v.try_normalize(0.0).unwrap_or_else(Vec3::x);

    let u = if v.x.abs() > v.y.abs() {
        Vec3::new(-v.z, 0.0, v.x).normalize()
    } else {
        Vec3::new(0.0, v.z, -v.y).normalize()
    };
    let w = v.cross(&u);
    let (muu, mww, muw) = (u.dot(&(m * u)), w.dot(&(m * w)), u.dot(&(m * w)));
    let mean = 0.5 * (muu + mww);
    let rad = (0.5 * (muu - mww)).hypot(muw);

    let mut e = [isolated * scale, (mean - rad) * scale, (mean + rad) * scale];
    e.sort_by(f64::total_cmp);
    e
}

/// Pseudoinverse of a symmetric positive semidefinite 3×3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricPinv {
    pub pinv: Mat3,
    pub rank: usize,
    /// Smallest retained eigenvalue, zero when the rank is zero.
    pub lambda_min_nonzero: f64,
}

pub fn symmetric_pinv(s: &Mat3, cutoff_factor: f64) -> SymmetricPinv {
    // Well-conditioned full-rank input: the plain inverse is the pseudoinverse.
    let ev = symmetric_eigenvalues(s);
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    if lo > FAST_INVERSE_MIN_RATIO * hi {
        if let Some(inv) = s.try_inverse() {
            return SymmetricPinv {
                pinv: 0.5 * (inv + inv.transpose()),
                rank: 3,
                lambda_min_nonzero: lo,
            };
        }
    }
    symmetric_pinv_eigen(s, cutoff_factor)
}

/// Below this eigenvalue ratio [`symmetric_pinv`] goes through the full
/// eigen-decomposition.
const FAST_INVERSE_MIN_RATIO: f64 = 1e-6;

fn symmetric_pinv_eigen(s: &Mat3, cutoff_factor: f64) -> SymmetricPinv {
    let eig = SymmetricEigen::new(*s);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let tol = cutoff_factor * f64::EPSILON * lmax;
    let mut pinv = Mat3::zeros();
    let mut rank = 0;
    let mut lmin = f64::INFINITY;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol && lmax > 0.0 {
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / l;
            rank += 1;
            lmin = lmin.min(l);
        }
    }
    SymmetricPinv {
        pinv,
        rank,
        lambda_min_nonzero: if rank == 0 { 0.0 } else { lmin },
    }
}

/// Moore–Penrose pseudoinverse of a general matrix via SVD, with singular
/// values below `cutoff_factor · ε_mach · σ_max` discarded.
pub fn svd_pinv(a: &DMatrix<f64>, cutoff_factor: f64) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(n, m), 0);
    }
    let (w, v) = one_sided_jacobi(a);
    let sigma: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let tol = cutoff_factor * f64::EPSILON * smax;
    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > tol && smax > 0.0 {
            // vᵢuᵢᵀ/σᵢ with uᵢ = wᵢ/σᵢ.
            pinv += v.column(i) * w.column(i).transpose() / (s * s);
            rank += 1;
        }
    }
    (pinv, rank)
}

const JACOBI_MAX_SWEEPS: usize = 30;

/// One-sided Jacobi SVD: rotates column pairs of `a` until they are mutually
/// orthogonal. Returns `(A·V, V)`; the column norms of `A·V` are the singular
/// values. Used instead of nalgebra's bidiagonal SVD, which reconstructs some
/// well-conditioned 3×3 inputs with ~1e-10 error.
fn one_sided_jacobi(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut w, &mut v] {
                    let (cp, cq) = (m.column(p).clone_owned(), m.column(q).clone_owned());
                    m.set_column(p, &(c * &cp - s * &cq));
                    m.set_column(q, &(s * &cp + c * &cq));
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (w, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_so3;
    use proptest::prelude::*;

    fn sym() -> impl Strategy<Value = Mat3> {
        proptest::array::uniform6(-5.0..5.0f64)
            .prop_map(|v| Mat3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]))
    }

    #[test]
    fn diagonal_and_rank_one() {
        let e = symmetric_eigenvalues(&Mat3::from_diagonal(&Vec3::new(3.0, -1.0, 2.0)));
        for (x, want) in e.iter().zip([-1.0, 2.0, 3.0]) {
            assert!((x - want).abs() < 1e-14, "{e:?}");
        }

        let v = Vec3::new(0.3, -0.5, 0.8).normalize();
        let e = symmetric_eigenvalues(&(v * v.transpose()));
        assert!(e[0].abs() < 1e-15 && e[1].abs() < 1e-15, "{e:?}");
        assert!((e[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(symmetric_eigenvalues(&Mat3::zeros()), [0.0; 3]);
        assert_eq!(symmetric_eigenvalues(&(Mat3::identity() * 2.5)), [2.5; 3]);
        assert!(symmetric_eigenvalues(&(Mat3::identity() * f64::NAN))[0].is_nan());
    }

    #[test]
    fn repeated_eigenvalues() {
        let r = exp_so3(&Vec3::new(0.4, 1.0, -0.3));
        let d = Mat3::from_diagonal(&Vec3::new(2.0, 2.0, 5.0));
        let a = r.matrix() * d * r.matrix().transpose();
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 2.0).abs() < 1e-12);
        assert!((e[1] - 2.0).abs() < 1e-12);
        assert!((e[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pinv_drops_null_space() {
        let b = Vec3::new(1.0, 2.0, -2.0);
        let p = symmetric_pinv(&(b * b.transpose()), PINV_CUTOFF_FACTOR);
        assert_eq!(p.rank, 1);
        let expected = b * b.transpose() / b.norm_squared().powi(2);
        assert!((p.pinv - expected).norm() < 1e-15);
        assert!((p.lambda_min_nonzero - 9.0).abs() < 1e-13);

        let zero = symmetric_pinv(&Mat3::zeros(), PINV_CUTOFF_FACTOR);
        assert_eq!(zero.rank, 0);
        assert_eq!(zero.pinv, Mat3::zeros());
    }

    #[test]
    fn pinv_of_well_conditioned_square_is_inverse() {
        // σ = (3.79, 3.71, 0.99); nalgebra's SVD reconstructs this with 2e-10 error.
        let v = [
            -1.8420823172958576,
            -1.703886577075644,
            1.1513280451300685,
            2.7011085838859,
            -0.6544016611780046,
            2.4570290411151627,
            1.605381046888459,
            0.5687602662790496,
            -2.1923232826032533,
        ];
        let a = DMatrix::from_fn(3, 3, |i, j| v[3 * j + i]);
        let (p, rank) = svd_pinv(&a, PINV_CUTOFF_FACTOR);
        assert_eq!(rank, 3);
        assert!((p * a - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    proptest! {
        // Independent route: nalgebra's iterative symmetric eigensolver.
        #[test]
        fn inverse_path_matches_eigen_path(a in sym()) {
            let s = a * a.transpose() + Mat3::identity() * 0.01;
            let fast = symmetric_pinv(&s, PINV_CUTOFF_FACTOR);
            let slow = symmetric_pinv_eigen(&s, PINV_CUTOFF_FACTOR);
            prop_assert_eq!(fast.rank, slow.rank);
            let scale = slow.pinv.norm();
            prop_assert!((fast.pinv - slow.pinv).norm() < 1e-10 * scale, "{} vs {}", fast.pinv, slow.pinv);
            prop_assert!((fast.lambda_min_nonzero - slow.lambda_min_nonzero).abs() < 1e-12 * s.norm());
        }

        #[test]
        fn closed_form_matches_iterative(a in sym()) {
            let mut reference: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            let e = symmetric_eigenvalues(&a);
            let scale = a.norm().max(1.0);
            for i in 0..3 {
                prop_assert!((e[i] - reference[i]).abs() < 1e-9 * scale);
            }
        }

        #[test]
        fn near_repeated_pairs_keep_full_precision(
            w in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
            d in -4.0..4.0f64,
            gap in 0.0..1e-6f64,
            c in -4.0..4.0f64,
        ) {
            let q = exp_so3(&Vec3::new(w.0, w.1, w.2));
            let diag = Mat3::from_diagonal(&Vec3::new(d, d + gap, c));
            let a = q.matrix() * diag * q.matrix().transpose();
            let mut want = [d, d + gap, c];
            want.sort_by(f64::total_cmp);
            let e = symmetric_eigenvalues(&a);
            for i in 0..3 {
                prop_assert!((e[i] - want[i]).abs() < 1e-13, "{:?} vs {:?}", e, want);
            }
        }

        #[test]
        fn jacobi_reconstructs_with_orthonormal_v(cols in 1usize..=3, v in proptest::array::uniform9(-2.0..2.0f64)) {
            let a = DMatrix::from_fn(3, cols, |i, j| v[3 * j + i]);
            let (w, v) = one_sided_jacobi(&a);
            prop_assert!((&w * v.transpose() - &a).norm() < 1e-14 * a.norm().max(1.0));
            prop_assert!((v.transpose() * &v - DMatrix::identity(cols, cols)).norm() < 1e-14);
            let wtw = w.transpose() * &w;
            for p in 0..cols {
                for q in 0..p {
                    prop_assert!(wtw[(p, q)].abs() <= 1e-14 * (wtw[(p, p)] * wtw[(q, q)]).sqrt().max(1e-300));
                }
            }
        }

        #[test]
        fn svd_pinv_satisfies_penrose(cols in 1usize..=3, v in proptest::array::uniform9(-2.0..2.0f64)) {
            let a = DMatrix::from_fn(3, cols, |i, j| v[3 * j + i]);
            let (p, _) = svd_pinv(&a, PINV_CUTOFF_FACTOR);
            let ap = &a * &p;
            let pa = &p * &a;
            // Round-off in the products grows with the condition number ‖A‖‖A†‖.
            let tol = 1e-13 * (1.0 + a.norm() * p.norm()).powi(2);
            prop_assert!((&ap * &a - &a).norm() < tol * a.norm().max(1.0));
            prop_assert!((&pa * &p - &p).norm() < tol * p.norm().max(1.0));
            prop_assert!((&ap - ap.transpose()).norm() < tol);
            prop_assert!((&pa - pa.transpose()).norm() < tol);
        }
    }
}
