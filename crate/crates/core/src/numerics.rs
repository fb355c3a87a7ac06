//! Dense decompositions over the complex field.
//!
//! Real matrices are handled by embedding them with zero imaginary part.
//! The Schur form comes from `nalgebra`; the SVD is a one-sided Jacobi
//! iteration implemented here because it stays accurate on the
//! rank-deficient snapshot matrices DMD routinely produces.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use std::cmp::Ordering;

use crate::error::{invalid, Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Rank truncation threshold relative to the largest singular value.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Relative tolerance under which two eigenvalue moduli (or real parts) are
/// considered tied for ordering purposes.
const TIE_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Embeds a real matrix into the complex field.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn ensure_finite(m: &CMatrix, what: &str) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(invalid(format!("{what}: matrix contains NaN or infinite entries")))
    }
}

/// Compact (rank-revealing) singular value decomposition `m = u diag(sigma) vᴴ`.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
    pub rank: usize,
}

impl CompactSvd {
    pub fn reconstruct(&self) -> CMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

/// Thin SVD with every singular value kept, zeros included.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

pub fn thin_svd(m: &CMatrix) -> Result<ThinSvd> {
    ensure_finite(m, "svd")?;
    let (rows, cols) = m.shape();
    if rows >= cols {
        jacobi_svd(m)
    } else {
        let t = jacobi_svd(&m.adjoint())?;
        Ok(ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

/// Singular values in descending order, `min(rows, cols)` of them.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    Ok(thin_svd(m)?.sigma)
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD of a tall matrix.
///
/// Columns are rotated pairwise until mutually orthogonal; their norms are
/// the singular values. Left vectors belonging to zero singular values are
/// completed to an orthonormal set so `u` and `v` are always `cols` wide.
fn jacobi_svd(a: &CMatrix) -> Result<ThinSvd> {
    let (rows, cols) = a.shape();
    let fail = Error::Decomposition {
        kind: "singular value",
        rows,
        cols,
    };
    let mut u: Vec<Vec<Complex64>> = (0..cols).map(|j| a.column(j).iter().copied().collect()).collect();
    let mut v: Vec<Vec<Complex64>> = (0..cols)
        .map(|j| {
            (0..cols)
                .map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    let tol = f64::EPSILON * (rows as f64).sqrt().max(1.0);

    let mut converged = cols < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        // Pairs of rounding-level columns are left alone.
        let floor = u.iter().map(|c| sq_norm(c)).fold(0.0, f64::max) * f64::EPSILON * f64::EPSILON;
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let alpha = sq_norm(&u[p]);
                let beta = sq_norm(&u[q]);
                let gamma = dotc(&u[p], &u[q]);
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() || g <= floor {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut u, p, q, phase, cs, sn);
                rotate(&mut v, p, q, phase, cs, sn);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(fail);
    }

    let sigma_raw: Vec<f64> = u.iter().map(|c| sq_norm(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| {
        sigma_raw[y]
            .partial_cmp(&sigma_raw[x])
            .unwrap_or(Ordering::Equal)
            .then(x.cmp(&y))
    });
    let largest = order.first().map_or(0.0, |&i| sigma_raw[i]);
    let null_tol = largest * f64::EPSILON * (rows.max(cols) as f64);

    let mut sigma = Vec::with_capacity(cols);
    let mut v_out = CMatrix::zeros(cols, cols);
    let mut u_cols: Vec<Option<CVector>> = Vec::with_capacity(cols);
    for (k, &j) in order.iter().enumerate() {
        sigma.push(sigma_raw[j]);
        v_out.set_column(k, &CVector::from_column_slice(&v[j]));
        if sigma_raw[j] > null_tol {
            u_cols.push(Some(CVector::from_column_slice(&u[j]).unscale(sigma_raw[j])));
        } else {
            u_cols.push(None);
        }
    }

    // Complete the left basis for null singular values from the canonical
    // basis, Gram–Schmidt against everything already placed.
    let mut candidate = 0;
    for k in 0..cols {
        if u_cols[k].is_some() {
            continue;
        }
        loop {
            if candidate >= rows {
                return Err(fail);
            }
            let mut e = CVector::zeros(rows);
            e[candidate] = Complex64::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for q in u_cols.iter().flatten() {
                    let proj = q.dotc(&e);
                    e.axpy(-proj, q, Complex64::new(1.0, 0.0));
                }
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u_cols[k] = Some(e.unscale(norm));
                break;
            }
        }
    }
    let mut u_mat = CMatrix::zeros(rows, cols);
    for (k, col) in u_cols.iter().enumerate() {
        u_mat.set_column(k, col.as_ref().expect("completed above"));
    }
    Ok(ThinSvd {
        u: u_mat,
        sigma,
        v: v_out,
    })
}

fn sq_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `[c_p, c_q] ← [c_p, c_q e^{-iφ}] · [[cs, sn], [-sn, cs]]`.
fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, phase: Complex64, cs: f64, sn: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    let back = phase.conj();
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = *y * back;
        let xp = *x;
        *x = xp * cs - yq * sn;
        *y = xp * sn + yq * cs;
    }
}

pub fn compact_svd(m: &CMatrix, rel_tol: f64) -> Result<CompactSvd> {
    if !(rel_tol > 0.0) {
        return Err(invalid("rel_tol must be positive"));
    }
    let full = thin_svd(m)?;
    let largest = full.sigma.first().copied().unwrap_or(0.0);
    let rank = if largest > 0.0 {
        full.sigma.iter().take_while(|&&s| s > rel_tol * largest).count()
    } else {
        0
    };
    Ok(CompactSvd {
        u: full.u.columns(0, rank).into_owned(),
        sigma: full.sigma[..rank].to_vec(),
        v: full.v.columns(0, rank).into_owned(),
        rank,
    })
}

/// Moore–Penrose pseudoinverse through [`compact_svd`].
pub fn pinv(m: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    let svd = compact_svd(m, rel_tol)?;
    let mut v = svd.v.clone();
    for (j, s) in svd.sigma.iter().enumerate() {
        v.column_mut(j).unscale_mut(*s);
    }
    Ok(v * svd.u.adjoint())
}

/// Thin QR factorization with an orthonormal `q`.
///
/// `q * r == m.select_columns(perm)`. When the columns are full rank `perm`
/// is the identity and `r` is square upper triangular with a positive real
/// diagonal; otherwise columns are pivoted by residual norm and `q` only
/// carries `rank` columns.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: CMatrix,
    pub r: CMatrix,
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl QrFactors {
    pub fn is_pivoted(&self) -> bool {
        self.perm.iter().enumerate().any(|(i, &p)| i != p)
    }
}

/// Column residual norms below this fraction of the largest input column
/// norm count as linearly dependent.
const QR_RANK_TOL: f64 = 1e-10;

pub fn qr_orthonormal(m: &CMatrix) -> Result<QrFactors> {
    ensure_finite(m, "qr")?;
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(invalid(format!("qr_orthonormal needs rows >= cols, got {rows}x{cols}")));
    }
    let scale = (0..cols).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    if let Some(f) = gram_schmidt(m, scale, false) {
        return Ok(f);
    }
    Ok(gram_schmidt(m, scale, true).expect("pivoted factorization always completes"))
}

/// Modified Gram–Schmidt with one re-orthogonalization pass. Returns `None`
/// when a dependent column is hit and `pivot` is false.
fn gram_schmidt(m: &CMatrix, scale: f64, pivot: bool) -> Option<QrFactors> {
    let (rows, cols) = m.shape();
    let mut work: Vec<CVector> = (0..cols).map(|j| m.column(j).into_owned()).collect();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut q_cols: Vec<CVector> = Vec::with_capacity(cols);
    let mut r = CMatrix::zeros(cols, cols);
    let threshold = QR_RANK_TOL * scale;

    for k in 0..cols {
        if pivot {
            let best = (k..cols)
                .max_by(|&a, &b| {
                    work[a]
                        .norm()
                        .partial_cmp(&work[b].norm())
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .expect("non-empty range");
            if best != k {
                work.swap(k, best);
                perm.swap(k, best);
                r.swap_columns(k, best);
            }
        }
        let norm = work[k].norm();
        if norm <= threshold || norm == 0.0 {
            if !pivot {
                return None;
            }
            let rank = k;
            let q = columns_to_matrix(rows, &q_cols);
            return Some(QrFactors {
                q,
                r: r.rows(0, rank).into_owned(),
                perm,
                rank,
            });
        }
        let qk = work[k].unscale(norm);
        r[(k, k)] = Complex64::new(norm, 0.0);
        for j in (k + 1)..cols {
            let proj = qk.dotc(&work[j]);
            work[j].axpy(-proj, &qk, Complex64::new(1.0, 0.0));
            r[(k, j)] = proj;
        }
        q_cols.push(qk);
        // Re-orthogonalize the remaining columns against everything so far;
        // single-pass MGS drifts when columns are nearly parallel.
        for j in (k + 1)..cols {
            for (i, qi) in q_cols.iter().enumerate() {
                let extra = qi.dotc(&work[j]);
                work[j].axpy(-extra, qi, Complex64::new(1.0, 0.0));
                r[(i, j)] += extra;
            }
        }
    }
    Some(QrFactors {
        q: columns_to_matrix(rows, &q_cols),
        r,
        perm,
        rank: cols,
    })
}

fn columns_to_matrix(rows: usize, cols: &[CVector]) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

pub fn select_columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), idx.len());
    for (j, &src) in idx.iter().enumerate() {
        out.set_column(j, &m.column(src));
    }
    out
}

/// Eigenvalues with unit-norm eigenvectors, column `j` paired with value `j`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
}

/// Eigendecomposition of a square matrix, ordered by [`eigen_order`].
///
/// Vectors come from back-substitution on the complex Schur form and are
/// phase-normalized so their largest-modulus entry is real and positive.
pub fn eig(m: &CMatrix) -> Result<EigenPairs> {
    ensure_finite(m, "eig")?;
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(invalid(format!("eig needs a square matrix, got {rows}x{cols}")));
    }
    let n = rows;
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::Decomposition {
        kind: "eigen",
        rows,
        cols,
    })?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    let tnorm = t.norm().max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE);
    let mut y_all = CMatrix::zeros(n, n);
    for j in 0..n {
        let lambda = values[j];
        let mut y = CVector::zeros(n);
        y[j] = Complex64::new(1.0, 0.0);
        for i in (0..j).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in (i + 1)..=j {
                acc += t[(i, l)] * y[l];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < smin {
                // Repeated eigenvalue: perturb as LAPACK's trevc does.
                denom = Complex64::new(smin, 0.0);
            }
            y[i] = -acc / denom;
            // Rescale to avoid overflow in ill-conditioned back-substitution.
            let ymax = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if ymax > 1e100 {
                y.unscale_mut(ymax);
            }
        }
        y_all.set_column(j, &y);
    }
    let mut vectors = q * y_all;
    for j in 0..n {
        let mut col = vectors.column(j).into_owned();
        normalize_column(&mut col);
        vectors.set_column(j, &col);
    }

    let order = eigen_order(&values);
    Ok(EigenPairs {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: select_columns(&vectors, &order),
    })
}

/// Scales a vector to unit 2-norm and rotates its phase so the first
/// largest-modulus entry is real and positive. Zero vectors are untouched.
pub fn normalize_column(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return;
    }
    v.unscale_mut(norm);
    let mut pivot = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        // Entries within rounding of the max do not steal the pivot.
        if z.norm() > best * (1.0 + 1e-9) {
            best = z.norm();
            pivot = i;
        }
    }
    let phase = v[pivot] / v[pivot].norm();
    let rot = phase.conj();
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[pivot] = Complex64::new(v[pivot].norm(), 0.0);
}

/// Permutation that sorts eigenvalues by descending modulus, ties broken by
/// descending real part and then descending imaginary part.
///
/// Ties are detected with a relative tolerance so rounding noise between a
/// conjugate pair does not decide the order.
pub fn eigen_order(values: &[Complex64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .norm()
            .partial_cmp(&values[a].norm())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    // Regroup runs of numerically equal moduli and order them lexicographically.
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let head = values[idx[start]].norm();
        let tol = TIE_TOL * head.max(1e-300);
        let mut end = start + 1;
        while end < idx.len() && (head - values[idx[end]].norm()).abs() <= tol {
            end += 1;
        }
        let mut group: Vec<usize> = idx[start..end].to_vec();
        insertion_sort_by(&mut group, |&a, &b| tie_break(values[a], values[b], tol));
        out.extend(group);
        start = end;
    }
    out
}

fn tie_break(a: Complex64, b: Complex64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() > tol {
        b.re.partial_cmp(&a.re).unwrap_or(Ordering::Equal)
    } else {
        b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal)
    }
}

// The tolerance comparator is not a strict weak order in general, so avoid
// std's sort which may panic on inconsistent comparators.
fn insertion_sort_by<T, F: Fn(&T, &T) -> Ordering>(v: &mut [T], cmp: F) {
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && cmp(&v[j - 1], &v[j]) == Ordering::Greater {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        complexify(&DMatrix::from_row_slice(rows, cols, data))
    }

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, complex: bool) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            let im = if complex { rng.gen_range(-1.0..1.0) } else { 0.0 };
            c(rng.gen_range(-1.0..1.0), im)
        })
    }

    fn orth_residual(m: &CMatrix) -> f64 {
        (m.adjoint() * m - identity(m.ncols())).norm()
    }

    #[test]
    fn svd_of_identity() {
        let s = compact_svd(&identity(3), DEFAULT_REL_TOL).unwrap();
        assert_eq!(s.rank, 3);
        for v in &s.sigma {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn svd_drops_exact_zero() {
        let s = compact_svd(&real(2, 2, &[3.0, 0.0, 0.0, 0.0]), 1e-12).unwrap();
        assert_eq!(s.rank, 1);
        assert_abs_diff_eq!(s.sigma[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 4, 3, false);
        let s = compact_svd(&m, DEFAULT_REL_TOL).unwrap();
        assert!((s.reconstruct() - &m).norm() < 1e-10);
        assert!(orth_residual(&s.u) < 1e-10);
        assert!(orth_residual(&s.v) < 1e-10);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_low_rank_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(r, cl, k) in &[(2, 4, 1), (4, 2, 1), (5, 5, 2), (7, 3, 1), (65, 128, 1), (128, 65, 2)] {
            for complex in [false, true] {
                let m = random(&mut rng, r, k, complex) * random(&mut rng, k, cl, complex);
                let s = compact_svd(&m, DEFAULT_REL_TOL).unwrap();
                assert_eq!(s.rank, k, "{r}x{cl}");
                assert!((s.reconstruct() - &m).norm() < 1e-12 * m.norm(), "{r}x{cl}");
                assert!(orth_residual(&s.u) < 1e-12);
                assert!(orth_residual(&s.v) < 1e-12);
            }
        }
        let constant = CMatrix::from_element(2, 4, c(3.0, 0.0));
        let s = compact_svd(&constant, DEFAULT_REL_TOL).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.reconstruct() - &constant).norm() < 1e-13);
    }

    #[test]
    fn thin_svd_completes_null_vectors() {
        let s = thin_svd(&CMatrix::zeros(1, 1)).unwrap();
        assert_eq!(s.sigma, vec![0.0]);
        assert_abs_diff_eq!(s.u[(0, 0)].norm(), 1.0);
        let s = thin_svd(&real(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(orth_residual(&s.u) < 1e-14);
        assert!(orth_residual(&s.v) < 1e-14);
        assert_abs_diff_eq!(s.sigma[0], 2f64.sqrt(), epsilon = 1e-14);
        assert!(s.sigma[1].abs() < 1e-15);
    }

    #[test]
    fn svd_rejects_nan() {
        let m = real(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(compact_svd(&m, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn svd_of_zero_matrix_has_rank_zero() {
        let s = compact_svd(&CMatrix::zeros(3, 2), 1e-10).unwrap();
        assert_eq!(s.rank, 0);
        assert_eq!(s.u.shape(), (3, 0));
    }

    #[test]
    fn qr_of_orthonormal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random(&mut rng, 5, 3, true);
        let q0 = qr_orthonormal(&base).unwrap().q;
        let f = qr_orthonormal(&q0).unwrap();
        assert!(!f.is_pivoted());
        assert!((&f.r - identity(3)).norm() < 1e-12);
        assert!((&f.q - &q0).norm() < 1e-12);
    }

    #[test]
    fn qr_single_column() {
        let f = qr_orthonormal(&real(2, 1, &[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(f.q[(0, 0)].re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(f.q[(1, 0)].re, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(f.r[(0, 0)].re, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn qr_random_complex_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random(&mut rng, 5, 2, true);
        let f = qr_orthonormal(&m).unwrap();
        assert!((&f.q * &f.r - &m).norm() < 1e-10);
        assert!(orth_residual(&f.q) < 1e-12);
        for i in 0..f.r.nrows() {
            for j in 0..i {
                assert_eq!(f.r[(i, j)], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn qr_rank_deficient_pivots() {
        // Third column = first + second.
        let m = real(4, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.0, 2.0, 2.0]);
        let f = qr_orthonormal(&m).unwrap();
        assert_eq!(f.rank, 2);
        assert_eq!(f.q.ncols(), 2);
        let permuted = select_columns(&m, &f.perm);
        assert!((&f.q * &f.r - permuted).norm() < 1e-10);
    }

    #[test]
    fn qr_wide_is_rejected() {
        assert!(qr_orthonormal(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let e = eig(&real(2, 2, &[0.5, 0.0, 0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(e.values[0].re, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1].re, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn eig_rotation_conjugate_pair() {
        let (s, co) = (PI / 4.0).sin_cos();
        let e = eig(&real(2, 2, &[co, -s, s, co])).unwrap();
        let expect = [
            Complex64::from_polar(1.0, PI / 4.0),
            Complex64::from_polar(1.0, -PI / 4.0),
        ];
        for (got, want) in e.values.iter().zip(expect) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
            assert_abs_diff_eq!(got.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_companion_golden_ratio() {
        // Companion matrix of z^2 - z - 1.
        let e = eig(&real(2, 2, &[1.0, 1.0, 1.0, 0.0])).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(e.values[0].re, phi, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1].re, 1.0 - phi, epsilon = 1e-12);
    }

    #[test]
    fn eig_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let m = random(&mut rng, 10, 10, false);
            let e = eig(&m).unwrap();
            let lam = CMatrix::from_diagonal(&CVector::from_vec(e.values.clone()));
            let res = (&m * &e.vectors - &e.vectors * lam).norm() / m.norm();
            assert!(res < 1e-8, "residual {res}");
            for j in 0..10 {
                assert_abs_diff_eq!(e.vectors.column(j).norm(), 1.0, epsilon = 1e-12);
            }
            assert!(e.values.windows(2).all(|w| w[0].norm() >= w[1].norm() - 1e-12));
        }
    }

    #[test]
    fn eig_ordering_ties() {
        let vals = [c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(2.0, 0.0)];
        let order = eigen_order(&vals);
        assert_eq!(order, vec![4, 3, 2, 0, 1]);
    }

    #[test]
    fn pinv_inverse_and_zero() {
        let m = real(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&m, DEFAULT_REL_TOL).unwrap();
        let inv = real(2, 2, &[0.6, -0.2, -0.2, 0.4]);
        assert!((p - inv).norm() < 1e-12);
        let z = pinv(&CMatrix::zeros(3, 2), DEFAULT_REL_TOL).unwrap();
        assert_eq!(z.shape(), (2, 3));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn pinv_penrose_identities_rank_one() {
        let m = real(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pinv(&m, DEFAULT_REL_TOL).unwrap();
        assert!((&m * &p * &m - &m).norm() < 1e-10);
        assert!((&p * &m * &p - &p).norm() < 1e-10);
        let mp = &m * &p;
        assert!((&mp - mp.adjoint()).norm() < 1e-10);
        let pm = &p * &m;
        assert!((&pm - pm.adjoint()).norm() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
            proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), rows * cols)
                .prop_map(move |v| CMatrix::from_iterator(rows, cols, v.into_iter().map(|(a, b)| c(a, b))))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn svd_factors_orthonormal(m in (1usize..7, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))) {
                let s = compact_svd(&m, DEFAULT_REL_TOL).unwrap();
                prop_assert!(orth_residual(&s.u) < 1e-10);
                prop_assert!(orth_residual(&s.v) < 1e-10);
                prop_assert!((s.reconstruct() - &m).norm() <= 10.0 * DEFAULT_REL_TOL * m.norm() + 1e-9);
            }

            #[test]
            fn pinv_involution_full_rank(m in (2usize..6).prop_flat_map(|n| matrix(n + 1, n))) {
                let p = pinv(&pinv(&m, DEFAULT_REL_TOL).unwrap(), DEFAULT_REL_TOL).unwrap();
                prop_assert!((p - &m).norm() / m.norm() < 1e-8);
            }
        }
    }
}
