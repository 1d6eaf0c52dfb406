//! Dense linear-algebra substrate: condensed SVD, Moore–Penrose inverse,
//! best rank-k truncation, leverage scores and a symmetric eigensolver.
//!
//! Factorizations are delegated to `faer` (built without its thread pool,
//! so results do not depend on the thread count); everything here returns
//! [`DenseMatrix`] values so callers never see the backend.

mod matrix;

pub use matrix::{dot, norm, DenseMatrix};

use crate::error::{Error, Result};

/// Singular values at or below `DEFAULT_RANK_TOL · σ₁` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// `A = U · diag(sigma) · Vᵀ` with only the nonzero singular triplets kept.
#[derive(Debug, Clone)]
pub struct CondensedSvd {
    /// m x ρ, orthonormal columns.
    pub u: DenseMatrix,
    /// ρ positive values, non-increasing.
    pub sigma: Vec<f64>,
    /// n x ρ, orthonormal columns.
    pub v: DenseMatrix,
}

impl CondensedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.scale_cols(&self.sigma).matmul_tr(&self.v)
    }
}

/// Truncated eigendecomposition `V · diag(lambda) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct EigPair {
    /// n x k, orthonormal columns.
    pub vectors: DenseMatrix,
    /// k eigenvalues in descending order.
    pub values: Vec<f64>,
}

impl EigPair {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.vectors.scale_cols(&self.values).matmul_tr(&self.vectors)
    }
}

/// Which factor of the SVD the leverage scores are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Squared row norms of U (one score per row of A).
    Row,
    /// Squared row norms of V (one score per column of A).
    Column,
}

/// Thin SVD with singular values in non-increasing order.
fn thin_svd(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return Ok((DenseMatrix::zeros(m, 0), Vec::new(), DenseMatrix::zeros(n, 0)));
    }
    let svd = a.to_faer().thin_svd().map_err(|_| Error::Decomposition("SVD"))?;
    let sigma = svd.S().column_vector().iter().copied().collect();
    Ok((DenseMatrix::from_faer(svd.U()), sigma, DenseMatrix::from_faer(svd.V())))
}

/// Condensed SVD; singular values `≤ rank_tol · σ₁` are dropped.
pub fn condensed_svd(a: &DenseMatrix, rank_tol: f64) -> Result<CondensedSvd> {
    a.ensure_finite()?;
    let (u, sigma, v) = thin_svd(a)?;
    let cutoff = sigma.first().map_or(0.0, |s1| s1 * rank_tol);
    let rho = sigma.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    Ok(CondensedSvd {
        u: u.columns_range(0, rho),
        sigma: sigma[..rho].to_vec(),
        v: v.columns_range(0, rho),
    })
}

/// All singular values in descending order (zeros included).
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    a.ensure_finite()?;
    if a.rows().min(a.cols()) == 0 {
        return Ok(Vec::new());
    }
    a.to_faer().singular_values().map_err(|_| Error::Decomposition("SVD"))
}

pub fn numerical_rank(a: &DenseMatrix, rank_tol: f64) -> Result<usize> {
    let sv = singular_values(a)?;
    let cutoff = sv.first().map_or(0.0, |s1| s1 * rank_tol);
    Ok(sv.iter().filter(|&&s| s > cutoff && s > 0.0).count())
}

pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Moore–Penrose inverse `V · diag(σ)⁻¹ · Uᵀ`.
pub fn pinv(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let svd = condensed_svd(a, rank_tol)?;
    Ok(pinv_from_svd(&svd))
}

pub fn pinv_from_svd(svd: &CondensedSvd) -> DenseMatrix {
    let inv: Vec<f64> = svd.sigma.iter().map(|s| 1.0 / s).collect();
    svd.v.scale_cols(&inv).matmul_tr(&svd.u)
}

/// Sum of the top-k singular triplets.
pub fn best_rank_k(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let max = a.rows().min(a.cols());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    a.ensure_finite()?;
    let (u, sigma, v) = thin_svd(a)?;
    let uk = u.columns_range(0, k).scale_cols(&sigma[..k]);
    Ok(uk.matmul_tr(&v.columns_range(0, k)))
}

/// Orthonormal basis for the column space of `a` (the U factor of its
/// condensed SVD).
pub fn orthonormal_basis(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    Ok(condensed_svd(a, rank_tol)?.u)
}

/// Leverage scores: squared row norms of U (`Side::Row`) or V
/// (`Side::Column`) of the condensed SVD. They sum to the numerical rank.
pub fn leverage_scores(a: &DenseMatrix, side: Side, rank_tol: f64) -> Result<Vec<f64>> {
    if a.max_abs() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let svd = condensed_svd(a, rank_tol)?;
    Ok(row_norms_sq(match side {
        Side::Row => &svd.u,
        Side::Column => &svd.v,
    }))
}

pub fn row_norms_sq(a: &DenseMatrix) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), a.row(i))).collect()
}

/// Flips `col` so that its largest-magnitude entry (first on ties) is
/// positive.
pub fn canonicalize_sign(col: &mut [f64]) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &v in col.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Full symmetric eigendecomposition, eigenvalues descending, signs
/// canonicalized. Input must already be symmetric.
pub(crate) fn sym_eig_sorted(k: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = k.rows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let eig = k
        .symmetrize()
        .to_faer()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::Decomposition("symmetric eigensolver"))?;
    let ascending: Vec<f64> = eig.S().column_vector().iter().copied().collect();
    let vecs = eig.U();
    // stable: ties keep solver order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| ascending[j].total_cmp(&ascending[i]));
    let values = order.iter().map(|&i| ascending[i]).collect();
    let columns: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            let mut c: Vec<f64> = (0..n).map(|i| vecs[(i, j)]).collect();
            canonicalize_sign(&mut c);
            c
        })
        .collect();
    Ok((values, DenseMatrix::from_columns(n, &columns)))
}

/// All eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues(k: &DenseMatrix) -> Result<Vec<f64>> {
    k.ensure_finite()?;
    k.ensure_symmetric()?;
    if k.rows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = k
        .symmetrize()
        .to_faer()
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::Decomposition("symmetric eigensolver"))?;
    ev.reverse();
    Ok(ev)
}

/// Top-k eigenpairs of a symmetric matrix by algebraic value.
pub fn sym_eig_topk(k_mat: &DenseMatrix, k: usize) -> Result<EigPair> {
    k_mat.ensure_finite()?;
    k_mat.ensure_symmetric()?;
    let n = k_mat.rows();
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let (values, vectors) = sym_eig_sorted(k_mat)?;
    Ok(EigPair {
        vectors: vectors.columns_range(0, k),
        values: values[..k].to_vec(),
    })
}

/// Solves the square system `a · x = b` by LU with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve",
            expected: a.rows(),
            got: b.rows(),
        });
    }
    LuFactors::new(a)?.solve(b)
}

/// Reusable LU factorization with partial pivoting of a square matrix.
#[derive(Debug)]
pub struct LuFactors {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl LuFactors {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                op: "lu",
                expected: a.rows(),
                got: a.cols(),
            });
        }
        a.ensure_finite()?;
        let lu = a.to_faer().partial_piv_lu();
        let u = lu.U();
        if (0..a.rows()).any(|i| u[(i, i)] == 0.0) {
            return Err(Error::Singular);
        }
        Ok(Self { lu, n: a.rows() })
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        use faer::linalg::solvers::Solve;
        if b.rows() != self.n {
            return Err(Error::DimensionMismatch {
                op: "lu solve",
                expected: self.n,
                got: b.rows(),
            });
        }
        let x = DenseMatrix::from_faer(self.lu.solve(b.to_faer()).as_ref());
        x.ensure_finite().map_err(|_| Error::Singular)?;
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(&DenseMatrix::column_vector(b))?.into_vec())
    }
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    solve(a, &DenseMatrix::identity(a.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        q.tr_matmul(q).max_abs_diff(&DenseMatrix::identity(q.cols()))
    }

    #[test]
    fn svd_of_identity() {
        let svd = condensed_svd(&DenseMatrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.sigma.len(), 3);
        for s in &svd.sigma {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!(svd.reconstruct().max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn svd_of_rank_one() {
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let a = DenseMatrix::from_fn(3, 3, |i, j| u[i] * v[j]);
        let svd = condensed_svd(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.sigma[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let a = gaussian(6, 4, 11);
        let svd = condensed_svd(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(svd.reconstruct().rel_diff(&a) < 1e-10);
        assert!(orthonormality_error(&svd.u) < 1e-12);
        assert!(orthonormality_error(&svd.v) < 1e-12);
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        // wide input
        let b = a.transpose();
        assert!(condensed_svd(&b, DEFAULT_RANK_TOL).unwrap().reconstruct().rel_diff(&b) < 1e-10);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a.as_mut_slice()[1] = f64::INFINITY;
        assert_eq!(condensed_svd(&a, DEFAULT_RANK_TOL).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn pinv_examples() {
        let d = DenseMatrix::from_diagonal(&[2.0, 0.0]);
        let p = pinv(&d, DEFAULT_RANK_TOL).unwrap();
        assert!(p.max_abs_diff(&DenseMatrix::from_diagonal(&[0.5, 0.0])) < 1e-15);

        let q = orthonormal_basis(&gaussian(7, 3, 2), DEFAULT_RANK_TOL).unwrap();
        assert!(pinv(&q, DEFAULT_RANK_TOL).unwrap().max_abs_diff(&q.transpose()) < 1e-13);
    }

    #[test]
    fn pinv_matches_normal_equations() {
        let a = gaussian(5, 3, 3);
        // oracle: (AᵀA)⁻¹Aᵀ through a direct dense inverse
        let gram_inv = inverse(&a.tr_matmul(&a)).unwrap();
        let expected = gram_inv.matmul_tr(&a);
        assert!(pinv(&a, DEFAULT_RANK_TOL).unwrap().rel_diff(&expected) < 1e-12);
    }

    #[test]
    fn penrose_identities() {
        for seed in 0..10 {
            let a = gaussian(6, 3, 100 + seed).matmul(&gaussian(3, 5, 200 + seed));
            let p = pinv(&a, DEFAULT_RANK_TOL).unwrap();
            assert!(a.matmul(&p).matmul(&a).rel_diff(&a) < 1e-8);
            assert!(p.matmul(&a).matmul(&p).rel_diff(&p) < 1e-8);
            let ap = a.matmul(&p);
            assert!(ap.asymmetry() < 1e-10);
            let pa = p.matmul(&a);
            assert!(pa.asymmetry() < 1e-10);
        }
    }

    #[test]
    fn best_rank_k_examples() {
        let d = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let d2 = best_rank_k(&d, 2).unwrap();
        assert!(d2.max_abs_diff(&DenseMatrix::from_diagonal(&[3.0, 2.0, 0.0])) < 1e-14);

        let a = gaussian(6, 2, 4).matmul(&gaussian(2, 5, 5));
        assert!(best_rank_k(&a, 2).unwrap().rel_diff(&a) < 1e-10);

        assert_eq!(
            best_rank_k(&d, 4).unwrap_err(),
            Error::RankOutOfRange { k: 4, max: 3 }
        );
        assert!(best_rank_k(&d, 0).is_err());
    }

    #[test]
    fn best_rank_k_residual_is_tail_energy() {
        let a = gaussian(8, 6, 6);
        let sv = singular_values(&a).unwrap();
        let a3 = best_rank_k(&a, 3).unwrap();
        let tail: f64 = sv[3..].iter().map(|s| s * s).sum();
        assert!((a.sub(&a3).frobenius_norm_sq() - tail).abs() < 1e-10 * tail);
    }

    #[test]
    fn eckart_young_spot_check() {
        let a = gaussian(7, 6, 7);
        let best = a.sub(&best_rank_k(&a, 2).unwrap()).frobenius_norm();
        for t in 0..100 {
            let m = gaussian(7, 2, 1000 + t).matmul(&gaussian(2, 6, 2000 + t));
            assert!(best <= a.sub(&m).frobenius_norm());
        }
    }

    #[test]
    fn leverage_examples() {
        let s = leverage_scores(&DenseMatrix::identity(3), Side::Row, DEFAULT_RANK_TOL).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-14));

        // tall selector touching rows 0 and 1
        let sel = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let s = leverage_scores(&sel, Side::Row, DEFAULT_RANK_TOL).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14 && s[2].abs() < 1e-14);

        let a = gaussian(8, 3, 8);
        let s = leverage_scores(&a, Side::Row, DEFAULT_RANK_TOL).unwrap();
        assert!((s.iter().sum::<f64>() - 3.0).abs() < 1e-10);
        assert!(s.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        let c = leverage_scores(&a, Side::Column, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(c.len(), 3);

        assert_eq!(
            leverage_scores(&DenseMatrix::zeros(3, 2), Side::Row, DEFAULT_RANK_TOL).unwrap_err(),
            Error::ZeroMatrix
        );
    }

    #[test]
    fn sym_eig_examples() {
        let d = DenseMatrix::from_diagonal(&[5.0, 1.0]);
        let e = sym_eig_topk(&d, 1).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-14);

        let q = orthonormal_basis(&gaussian(3, 3, 9), DEFAULT_RANK_TOL).unwrap();
        let k = q.scale_cols(&[3.0, 2.0, 1.0]).matmul_tr(&q);
        let e = sym_eig_topk(&k, 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 2.0).abs() < 1e-12);
        assert!(orthonormality_error(&e.vectors) < 1e-12);

        let mut asym = DenseMatrix::identity(2);
        asym[(0, 1)] = 1.0;
        assert!(matches!(sym_eig_topk(&asym, 1), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eigenvector_signs_are_canonical() {
        let k = DenseMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        let e = sym_eig_topk(&k, 2).unwrap();
        for j in 0..2 {
            let col = e.vectors.column(j);
            let (mut best, mut val) = (0.0, 0.0);
            for v in col {
                if v.abs() > best {
                    best = v.abs();
                    val = v;
                }
            }
            assert!(val > 0.0);
        }
    }
}
