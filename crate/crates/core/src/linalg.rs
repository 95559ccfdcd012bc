//! Small dense complex linear-algebra helpers shared by the estimators.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex64`. The
//! matrices involved are tiny (P×P with P around 5), so clarity wins over
//! allocation tricks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{DoaError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Condition number above which a basis is treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

/// Rotates a vector's global phase so that its first non-negligible element is
/// real and positive. Zero vectors are returned unchanged.
pub fn gauge_fix(v: &mut [C64]) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-12 * scale) {
        let phase = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Applies [`gauge_fix`] to every column of `m`.
pub fn gauge_fix_columns(m: &mut CMatrix) {
    for mut col in m.column_iter_mut() {
        gauge_fix(col.as_mut_slice());
    }
}

pub fn hermitian_error(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_error(m) <= tol * m.norm().max(1.0)
}

/// Hermitian eigendecomposition with eigenpairs sorted by descending
/// eigenvalue. Ties keep the solver's original index order; every eigenvector
/// is gauge fixed.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| DoaError::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    gauge_fix_columns(&mut vectors);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DoaError::Numerical("non-finite eigenvalue".into()));
    }
    Ok((values, vectors))
}

/// Thin singular value decomposition `M = U·diag(σ)·Vᴴ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m×r with r = min(m, n); orthonormal columns.
    pub u: CMatrix,
    /// Descending, length r.
    pub singular_values: Vec<f64>,
    /// n×r with orthonormal columns.
    pub v: CMatrix,
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// One-sided (Hestenes) Jacobi SVD.
///
/// `nalgebra`'s complex bidiagonal SVD silently returns inaccurate factors for
/// some exactly rank-deficient inputs (e.g. noiseless covariances), so the
/// small matrices used here go through this routine instead. Jacobi keeps
/// high relative accuracy in the small singular values, which the
/// conditioning checks rely on. Left vectors of zero singular values are
/// completed to an orthonormal set.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    if m.nrows() < m.ncols() {
        let t = svd(&m.adjoint())?;
        return Ok(Svd { u: t.v, singular_values: t.singular_values, v: t.u });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DoaError::Numerical("SVD of a non-finite matrix".into()));
    }
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = CMatrix::identity(n, n);
    let mut converged = n < 2;
    // Rotation threshold on the normalized Gram entry, and the squared norm
    // below which a column is numerically zero (it carries no resolvable
    // singular value).
    let tol = rows as f64 * f64::EPSILON;
    let negligible = (f64::EPSILON * m.norm()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dotc(&a.column(j));
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                // Absorb the phase of γ into column j, then apply a real
                // rotation that zeroes the (i, j) Gram entry.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let xi = mat[(r, i)];
                        let xj = mat[(r, j)] * phase.conj();
                        mat[(r, i)] = xi * c - xj * s;
                        mat[(r, j)] = xi * s + xj * c;
                    }
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(DoaError::Numerical("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let mut u = CMatrix::zeros(rows, n);
    let mut v_sorted = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    let mut filled = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_column(dst, &v.column(src));
        let sigma = norms[src];
        values.push(sigma);
        if sigma > 0.0 && sigma * sigma > negligible {
            u.set_column(dst, &a.column(src).unscale(sigma));
            filled.push(dst);
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok(Svd { u, singular_values: values, v: v_sorted })
}

/// Fills the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to all others (Gram–Schmidt on the standard basis).
fn complete_orthonormal(u: &mut CMatrix, filled: &[usize]) {
    let (rows, cols) = u.shape();
    let mut done: Vec<usize> = filled.to_vec();
    let mut candidate = 0;
    let mut e = CVector::zeros(rows);
    for k in 0..cols {
        if filled.contains(&k) {
            continue;
        }
        while candidate < rows {
            e.fill(C64::new(0.0, 0.0));
            e[candidate] = C64::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for &d in &done {
                    let col = u.column(d);
                    let proj = col.dotc(&e);
                    e.axpy(-proj, &col, C64::new(1.0, 0.0));
                }
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u.set_column(k, &e.unscale(norm));
                done.push(k);
                break;
            }
        }
    }
}

/// Thin QR factorization `M = Q·R` by modified Gram–Schmidt with one
/// reorthogonalization pass. Columns that are numerically dependent on
/// earlier ones get no basis vector, so `Q` has `rank(M)` columns and `R` is
/// `rank(M) × ncols`.
pub fn thin_qr(m: &CMatrix) -> (CMatrix, CMatrix) {
    let (rows, cols) = m.shape();
    let scale = m.norm();
    let mut basis: Vec<CVector> = Vec::with_capacity(cols);
    let mut coeffs = vec![vec![C64::new(0.0, 0.0); cols]; cols];
    for j in 0..cols {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let proj = q.dotc(&v);
                coeffs[k][j] += proj;
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-13 * scale {
            coeffs[basis.len()][j] = C64::from(norm);
            basis.push(v.unscale(norm));
        }
    }
    let r = basis.len();
    let q = CMatrix::from_fn(rows, r, |i, k| basis[k][i]);
    let r_mat = CMatrix::from_fn(r, cols, |k, j| coeffs[k][j]);
    (q, r_mat)
}

/// Extends orthonormal columns to a square unitary matrix.
pub fn unitary_completion(m: &CMatrix) -> CMatrix {
    let (rows, k) = m.shape();
    let mut u = CMatrix::zeros(rows, rows);
    u.columns_mut(0, k).copy_from(m);
    complete_orthonormal(&mut u, &(0..k).collect::<Vec<_>>());
    u
}

/// Top-`k` left singular vectors (gauge fixed) and the singular values in
/// descending order (`min(m, n)` of them).
pub fn left_singular_vectors(m: &CMatrix, k: usize) -> Result<(CMatrix, Vec<f64>)> {
    let svd = svd(m)?;
    let k = k.min(svd.u.ncols());
    let mut out = svd.u.columns(0, k).into_owned();
    gauge_fix_columns(&mut out);
    Ok((out, svd.singular_values))
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix, together with
/// its 2-norm condition number. Fails when the condition number exceeds
/// [`MAX_CONDITION`].
pub fn pseudo_inverse(m: &CMatrix) -> Result<(CMatrix, f64)> {
    if m.ncols() <= 2 && m.ncols() <= m.nrows() {
        if let Some(fast) = gram_pseudo_inverse(m) {
            return Ok(fast);
        }
    }
    let svd = svd(m)?;
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0_f64, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(DoaError::DegenerateSubspace(format!(
            "condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    let mut pinv = CMatrix::zeros(m.ncols(), m.nrows());
    for (i, &sigma) in s.iter().enumerate() {
        pinv += (svd.v.column(i) * svd.u.column(i).adjoint()).scale(1.0 / sigma);
    }
    Ok((pinv, cond))
}

/// Normal-equation pseudo-inverse `(MᴴM)⁻¹Mᴴ` for one or two well-conditioned
/// columns. Squaring the condition number is harmless below the 1e6 cut-off;
/// anything worse returns `None` and goes through the SVD.
fn gram_pseudo_inverse(m: &CMatrix) -> Option<(CMatrix, f64)> {
    let gram = m.adjoint() * m;
    let (gram_inv, cond) = match m.ncols() {
        1 => {
            let g = gram[(0, 0)].re;
            if !(g > 0.0) {
                return None;
            }
            return Some((m.adjoint().unscale(g), 1.0));
        }
        _ => {
            let (a, d, b) = (gram[(0, 0)].re, gram[(1, 1)].re, gram[(0, 1)]);
            let half_gap = (((a - d) * 0.5).powi(2) + b.norm_sqr()).sqrt();
            let mid = (a + d) * 0.5;
            let (hi, lo) = (mid + half_gap, mid - half_gap);
            if !(lo > 0.0) || hi / lo > 1e12 {
                return None;
            }
            let det = a * d - b.norm_sqr();
            let inv = CMatrix::from_row_slice(2, 2, &[C64::from(d), -b, -b.conj(), C64::from(a)]).unscale(det);
            (inv, (hi / lo).sqrt())
        }
    };
    Some((gram_inv * m.adjoint(), cond))
}

/// Eigenvalues and unit-norm eigenvectors of a small general (non-Hermitian)
/// complex matrix. One and two dimensions use closed forms; larger sizes use
/// a complex Schur form plus null vectors of `M - λI`.
pub fn general_eigen(m: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let n = m.nrows();
    let values = general_eigenvalues(m)?;
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let v = null_vector(&(m - CMatrix::identity(n, n) * lambda))?;
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

/// Eigenvalues only; see [`general_eigen`].
pub fn general_eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    if !m.is_square() || n == 0 {
        return Err(DoaError::domain("general_eigen expects a non-empty square matrix"));
    }
    let values = match n {
        1 => vec![m[(0, 0)]],
        2 => {
            let half_trace = (m[(0, 0)] + m[(1, 1)]) * 0.5;
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (half_trace * half_trace - det).sqrt();
            vec![half_trace + disc, half_trace - disc]
        }
        _ => {
            let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)
                .ok_or_else(|| DoaError::Numerical("Schur decomposition did not converge".into()))?;
            let (_, t) = schur.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
    };
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DoaError::Numerical("non-finite eigenvalue".into()));
    }
    Ok(values)
}

/// Unit vector minimising `‖A v‖` (the right singular vector of the smallest
/// singular value).
fn null_vector(a: &CMatrix) -> Result<CVector> {
    let n = a.ncols();
    if n == 1 {
        return Ok(CVector::from_element(1, C64::new(1.0, 0.0)));
    }
    if n == 2 {
        // Rows of a rank-1 2×2 matrix are orthogonal to the null vector; use the
        // larger row for stability.
        let r0 = (a[(0, 0)].norm_sqr() + a[(0, 1)].norm_sqr()).sqrt();
        let r1 = (a[(1, 0)].norm_sqr() + a[(1, 1)].norm_sqr()).sqrt();
        let (x, y) = if r0 >= r1 { (a[(0, 0)], a[(0, 1)]) } else { (a[(1, 0)], a[(1, 1)]) };
        if r0.max(r1) == 0.0 {
            return Ok(CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        }
        let v = CVector::from_vec(vec![-y, x]);
        return Ok(v.unscale(v.norm()));
    }
    Ok(svd(a)?.v.column(n - 1).into_owned())
}

/// Principal angles (radians, ascending) between the column spans of `a` and
/// `b`, computed from the sines so that small angles keep full precision.
pub fn principal_angles(a: &CMatrix, b: &CMatrix) -> Result<Vec<f64>> {
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let residual = &qb - &qa * (qa.adjoint() * &qb);
    let mut angles: Vec<f64> = svd(&residual)?.singular_values.iter().map(|s| s.clamp(0.0, 1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

fn orthonormal_basis(m: &CMatrix) -> Result<CMatrix> {
    let (u, _) = left_singular_vectors(m, m.ncols())?;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gauge_makes_first_entry_real_positive() {
        let mut v = vec![c(0.0, 0.0), c(0.0, -2.0), c(1.0, 1.0)];
        gauge_fix(&mut v);
        assert_eq!(v[0], c(0.0, 0.0));
        assert!((v[1] - c(2.0, 0.0)).norm() < 1e-15);
        assert!((v[2].norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(3.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigen(&m).unwrap();
        assert!(vals[0] > vals[1]);
        let recon = &vecs * CMatrix::from_diagonal(&CVector::from_iterator(2, vals.iter().map(|&v| c(v, 0.0)))) * vecs.adjoint();
        assert!((recon - m).norm() < 1e-12);
    }

    #[test]
    fn general_eigen_two_by_two() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0, 1.0), c(1.0, 0.0), c(0.5, -0.5), c(-1.0, 0.0)]);
        let (vals, vecs) = general_eigen(&m).unwrap();
        for k in 0..2 {
            let v = vecs.column(k);
            let residual = &m * v - v * vals[k];
            assert!(residual.norm() < 1e-12, "residual {}", residual.norm());
        }
    }

    #[test]
    fn general_eigen_three_by_three() {
        let m = CMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 * 0.3 - 1.0, (i as f64 - j as f64) * 0.2));
        let (vals, vecs) = general_eigen(&m).unwrap();
        for k in 0..3 {
            let v = vecs.column(k);
            assert!((&m * v - v * vals[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn pseudo_inverse_rejects_rank_deficient() {
        let m = CMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(pseudo_inverse(&m), Err(DoaError::DegenerateSubspace(_))));
    }

    #[test]
    fn closed_form_pseudo_inverse_matches_svd() {
        for cols in 1..=2 {
            let m = CMatrix::from_fn(5, cols, |i, j| c((i as f64 + 1.0).sin() + j as f64, (i * (j + 2)) as f64 * 0.3));
            let (fast, cond) = pseudo_inverse(&m).unwrap();
            assert!((&fast * &m - CMatrix::identity(cols, cols)).norm() < 1e-12);
            let s = svd(&m).unwrap().singular_values;
            let expect = s[0] / s[cols - 1];
            assert!((cond - expect).abs() < 1e-8 * expect);
            // Penrose conditions.
            assert!((&m * &fast * &m - &m).norm() < 1e-12);
            assert!((&m * &fast - (&m * &fast).adjoint()).norm() < 1e-12);
        }
    }

    fn check_svd(m: &CMatrix) {
        let d = svd(m).unwrap();
        let r = d.u.ncols();
        let sigma = CMatrix::from_diagonal(&CVector::from_iterator(r, d.singular_values.iter().map(|&v| c(v, 0.0))));
        let scale = m.norm().max(1e-300);
        assert!((&d.u * sigma * d.v.adjoint() - m).norm() <= 1e-12 * scale.max(1.0));
        assert!((d.u.adjoint() * &d.u - CMatrix::identity(r, r)).norm() < 1e-12);
        assert!((d.v.adjoint() * &d.v - CMatrix::identity(r, r)).norm() < 1e-12);
        assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_svd_on_rank_deficient_and_rectangular_inputs() {
        // The all-ones matrix is one of the inputs that trips nalgebra's SVD.
        check_svd(&CMatrix::from_element(5, 5, c(1.0, 0.0)));
        check_svd(&CMatrix::zeros(3, 3));
        check_svd(&CMatrix::from_fn(4, 6, |i, j| c((i * j) as f64, i as f64 - j as f64)));
        check_svd(&CMatrix::from_fn(6, 2, |i, j| c((i + j) as f64 * 0.5, 1.0)));
        let v = CVector::from_fn(5, |i, _| c((i as f64).cos(), (2.0 * i as f64).sin()));
        let rank_one = &v * v.adjoint();
        check_svd(&rank_one);
        let s = svd(&rank_one).unwrap().singular_values;
        assert!((s[0] - v.norm_squared()).abs() < 1e-12 && s[1] < 1e-14);
    }

    #[test]
    fn principal_angles_of_identical_spans_vanish() {
        let a = CMatrix::from_fn(4, 2, |i, j| c((i + 2 * j) as f64, (i * j) as f64));
        let b = &a * CMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(0.0, 2.0), c(3.0, 0.0), c(1.0, -1.0)]);
        let angles = principal_angles(&a, &b).unwrap();
        assert!(angles.iter().all(|&t| t < 1e-7));
    }

    #[test]
    fn thin_qr_reconstructs_and_drops_dependent_columns() {
        let m = CMatrix::from_fn(5, 3, |i, j| C64::new((i * i + 2 * j) as f64, (i * j * j) as f64 - 1.0));
        let (q, r) = thin_qr(&m);
        assert_eq!(q.ncols(), 3);
        assert!((&q * &r - &m).norm() < 1e-12 * m.norm());
        assert!((q.adjoint() * &q - CMatrix::identity(3, 3)).norm() < 1e-12);
        let mut dep = m.clone();
        let c0 = dep.column(0).into_owned();
        dep.set_column(2, &(c0 * C64::new(0.0, 2.0)));
        let (q, r) = thin_qr(&dep);
        assert_eq!(q.ncols(), 2);
        assert!((&q * &r - &dep).norm() < 1e-12 * dep.norm());
        let u = unitary_completion(&q);
        assert!((u.adjoint() * &u - CMatrix::identity(5, 5)).norm() < 1e-12);
        assert_eq!(u.columns(0, 2), q.columns(0, 2));
    }
}
