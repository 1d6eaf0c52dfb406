//! Downstream uses of a factored approximation `K̃ = C·U·Cᵀ`: truncated
//! eigendecomposition, regularized linear solves, kernel PCA features and
//! a normalized spectral embedding. Nothing here forms an `n x n` matrix.

use crate::error::{Error, Result};
use crate::kernel::KernelSource;
use crate::linalg::{
    canonicalize_sign, condensed_svd, norm, sym_eig_sorted, DenseMatrix, EigPair, LuFactors,
    DEFAULT_RANK_TOL,
};
use crate::spsd::LowRankSym;

/// Top-k eigenpairs of `C·U·Cᵀ` in O(nc²). With `C = U_C Σ V_Cᵀ` the
/// nonzero spectrum is that of the small matrix `(ΣV_Cᵀ)·U·(ΣV_Cᵀ)ᵀ`.
/// Fewer than `k` pairs are returned when rank(C) < k.
pub fn eig_lowrank(f: &LowRankSym, k: usize) -> Result<EigPair> {
    if k == 0 || k > f.width() {
        return Err(Error::RankOutOfRange { k, max: f.width() });
    }
    let svd = condensed_svd(f.c(), DEFAULT_RANK_TOL)?;
    let sv_t = svd.v.scale_cols(&svd.sigma).transpose();
    let z = sv_t.matmul(f.u()).matmul_tr(&sv_t).symmetrize();
    let (values, vectors) = sym_eig_sorted(&z)?;
    let keep = k.min(values.len());
    let mut v = svd.u.matmul(&vectors.columns_range(0, keep));
    for j in 0..keep {
        let mut col = v.column(j);
        canonicalize_sign(&mut col);
        for (i, x) in col.into_iter().enumerate() {
            v.row_mut(i)[j] = x;
        }
    }
    Ok(EigPair {
        vectors: v,
        values: values[..keep].to_vec(),
    })
}

/// Solver for `(C·U·Cᵀ + αI)·w = y`. The `c x c` system
/// `αI + U·CᵀC` is factored once; each solve then costs O(nc + c²).
#[derive(Debug)]
pub struct WoodburySolver {
    model: LowRankSym,
    alpha: f64,
    // factors of αI + U·CᵀC
    lu: LuFactors,
}

impl WoodburySolver {
    pub fn new(f: &LowRankSym, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let c = f.width();
        let gram = f.c().tr_matmul(f.c());
        let m = f.u().matmul(&gram).add(&DenseMatrix::identity(c).scale(alpha));
        Ok(Self {
            model: f.clone(),
            alpha,
            lu: LuFactors::new(&m)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn solve_once(&self, y: &[f64]) -> Result<Vec<f64>> {
        // w = α⁻¹(y − C·(αI + U·CᵀC)⁻¹·U·Cᵀy)
        let cty = self.model.c().tr_matvec(y);
        let t = self.lu.solve_vec(&self.model.u().matvec(&cty))?;
        let ct = self.model.c().matvec(&t);
        Ok(y.iter().zip(&ct).map(|(a, b)| (a - b) / self.alpha).collect())
    }

    /// Solves with one step of iterative refinement.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.model.n() {
            return Err(Error::DimensionMismatch {
                op: "woodbury solve",
                expected: self.model.n(),
                got: y.len(),
            });
        }
        let mut w = self.solve_once(y)?;
        let r = self.residual(&w, y);
        let dw = self.solve_once(&r)?;
        w.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        Ok(w)
    }

    /// `y − (C·U·Cᵀ + αI)·w`.
    pub fn residual(&self, w: &[f64], y: &[f64]) -> Vec<f64> {
        let kw = self
            .model
            .apply_vec(w)
            .expect("dimension checked by caller");
        y.iter()
            .zip(&kw)
            .zip(w)
            .map(|((yi, ki), wi)| yi - ki - self.alpha * wi)
            .collect()
    }
}

/// `(C·U·Cᵀ + αI)⁻¹·y`.
pub fn woodbury_solve(f: &LowRankSym, alpha: f64, y: &[f64]) -> Result<Vec<f64>> {
    WoodburySolver::new(f, alpha)?.solve(y)
}

/// Kernel PCA model built from an approximate training kernel.
#[derive(Debug, Clone)]
pub struct KpcaModel {
    /// n₁ x k, orthonormal columns.
    pub vectors: DenseMatrix,
    /// k positive values, descending.
    pub values: Vec<f64>,
    source: KernelSource,
}

/// Eigenvalues at or below this fraction of the largest are dropped.
const KPCA_EIG_FLOOR: f64 = 1e-12;

/// Top-k eigenpairs of the approximate training kernel; nonpositive
/// eigenvalues are trimmed, so the model may keep fewer than `k`.
pub fn kpca_fit(f: &LowRankSym, k: usize, source: &KernelSource) -> Result<KpcaModel> {
    if f.n() != source.dataset().n() {
        return Err(Error::DimensionMismatch {
            op: "kpca training set",
            expected: source.dataset().n(),
            got: f.n(),
        });
    }
    let eig = eig_lowrank(f, k)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let keep = eig
        .values
        .iter()
        .take_while(|&&v| v > 0.0 && v > KPCA_EIG_FLOOR * top)
        .count();
    if keep == 0 {
        return Err(Error::NoPositiveEigenvalues);
    }
    Ok(KpcaModel {
        vectors: eig.vectors.columns_range(0, keep),
        values: eig.values[..keep].to_vec(),
        source: source.clone(),
    })
}

impl KpcaModel {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// `Λ^{1/2}·Vᵀ`, one column per training point (k x n₁).
    pub fn train_features(&self) -> DenseMatrix {
        let roots: Vec<f64> = self.values.iter().map(|v| v.sqrt()).collect();
        self.vectors.scale_cols(&roots).transpose()
    }

    /// `Λ^{-1/2}·Vᵀ·kx` for a kernel vector `kx` against the training set.
    pub fn project(&self, kx: &[f64]) -> Result<Vec<f64>> {
        if kx.len() != self.vectors.rows() {
            return Err(Error::DimensionMismatch {
                op: "kpca projection",
                expected: self.vectors.rows(),
                got: kx.len(),
            });
        }
        Ok(self
            .vectors
            .tr_matvec(kx)
            .into_iter()
            .zip(&self.values)
            .map(|(p, v)| p / v.sqrt())
            .collect())
    }

    /// Features of a new point `x`.
    pub fn test_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.project(&self.source.kernel_vector(x)?)
    }
}

pub fn kpca_train_features(m: &KpcaModel) -> DenseMatrix {
    m.train_features()
}

pub fn kpca_test_features(m: &KpcaModel, x: &[f64]) -> Result<Vec<f64>> {
    m.test_features(x)
}

/// Degrees below this fraction of the largest degree are raised to it.
pub const DEGREE_FLOOR: f64 = 1e-10;

/// Normalized spectral embedding: top-k eigenvectors of
/// `D^{-1/2}·K̃·D^{-1/2}` with `D = diag(K̃·1)`, rows scaled to unit length.
pub fn spectral_embedding(f: &LowRankSym, k: usize) -> Result<DenseMatrix> {
    let n = f.n();
    let d = f.apply_vec(&vec![1.0; n])?;
    let max = d.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = if max > 0.0 { DEGREE_FLOOR * max } else { 1.0 };
    let inv_sqrt: Vec<f64> = d.iter().map(|&v| 1.0 / v.max(floor).sqrt()).collect();
    let scaled = LowRankSym::new(f.c().scale_rows(&inv_sqrt), f.u().clone())?;
    let mut emb = eig_lowrank(&scaled, k)?.vectors;
    for i in 0..n {
        let row = emb.row_mut(i);
        let len = norm(row);
        if len > 0.0 {
            row.iter_mut().for_each(|v| *v /= len);
        }
    }
    Ok(emb)
}
