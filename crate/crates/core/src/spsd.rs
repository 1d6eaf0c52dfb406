//! Low-rank SPSD approximations `K ≈ C·U·Cᵀ` with three choices of U:
//! Nyström `W†`, the Frobenius-optimal prototype `C†K(C†)ᵀ`, and the
//! sketched fast model `(SᵀC)†(SᵀKS)(CᵀS)†`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    condensed_svd, numerical_rank, orthonormal_basis, pinv, pinv_from_svd, DenseMatrix,
    DEFAULT_RANK_TOL,
};
use crate::sketch::{
    column_sampler, count_sketch, force_include, gaussian_sketch, leverage_sampler_including,
    srht_sketch, LeverageNorm, SamplingProbs, ScaleMode, Selection, SketchMethod, SketchOp,
};
use crate::source::{check_square, SymmetricSource};

/// `K̃ = C·U·Cᵀ`, kept in factored form. U is symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSym {
    c: DenseMatrix,
    u: DenseMatrix,
}

impl LowRankSym {
    pub fn new(c: DenseMatrix, u: DenseMatrix) -> Result<Self> {
        if !u.is_square() || u.rows() != c.cols() {
            return Err(Error::DimensionMismatch {
                op: "low-rank factors",
                expected: c.cols(),
                got: u.rows(),
            });
        }
        c.ensure_finite()?;
        u.ensure_finite()?;
        Ok(Self {
            c,
            u: u.symmetrize(),
        })
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn n(&self) -> usize {
        self.c.rows()
    }

    /// Number of columns of C.
    pub fn width(&self) -> usize {
        self.c.cols()
    }

    /// Dense `C·U·Cᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.c.matmul(&self.u).matmul_tr(&self.c).symmetrize()
    }

    /// `C(U(Cᵀx))` in O(nc).
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                op: "apply_vec",
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(self.c.matvec(&self.u.matvec(&self.c.tr_matvec(x))))
    }
}

/// `C = K·P`. For a selection P only the `n x c` block of K is evaluated.
pub fn form_c<S: SymmetricSource + ?Sized>(src: &S, p: &SketchOp) -> Result<DenseMatrix> {
    check_square(src)?;
    if p.n() != src.dim() {
        return Err(Error::DimensionMismatch {
            op: "form_c",
            expected: src.dim(),
            got: p.n(),
        });
    }
    match p.as_selection() {
        Some(sel) => Ok(src.columns(sel.indices())?.scale_cols(sel.scales())),
        None => p.apply_right(&src.full()?),
    }
}

/// Orthonormal basis of range(C).
pub fn orthonormalize_c(c: &DenseMatrix) -> Result<DenseMatrix> {
    if c.max_abs() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    orthonormal_basis(c, DEFAULT_RANK_TOL)
}

/// Nyström: `U = (PᵀC)†`.
pub fn u_nystrom(c: &DenseMatrix, p: &SketchOp) -> Result<LowRankSym> {
    let w = p.apply_left(c)?;
    if w.cols() != w.rows() {
        return Err(Error::DimensionMismatch {
            op: "nystrom intersection block",
            expected: w.rows(),
            got: w.cols(),
        });
    }
    LowRankSym::new(c.clone(), pinv(&w.symmetrize(), DEFAULT_RANK_TOL)?)
}

/// Prototype model: `U = C†K(C†)ᵀ`, reading all of K.
pub fn u_prototype<S: SymmetricSource + ?Sized>(src: &S, c: &DenseMatrix) -> Result<LowRankSym> {
    check_square(src)?;
    if c.rows() != src.dim() {
        return Err(Error::DimensionMismatch {
            op: "u_prototype",
            expected: src.dim(),
            got: c.rows(),
        });
    }
    let k = src.full()?;
    k.ensure_symmetric()?;
    let cp = pinv(c, DEFAULT_RANK_TOL)?;
    let u = cp.matmul(&k).matmul_tr(&cp);
    LowRankSym::new(c.clone(), u)
}

/// Fast-model result with rank diagnostics. `sketch_rank < c_rank` flags
/// an unlucky sketch; the pseudoinverse is used regardless.
#[derive(Debug, Clone)]
pub struct FastSolution {
    pub model: LowRankSym,
    pub sketch_rank: usize,
    pub c_rank: usize,
}

impl FastSolution {
    pub fn rank_deficient(&self) -> bool {
        self.sketch_rank < self.c_rank
    }
}

/// Fast model: `U = (SᵀC)†(SᵀKS)(CᵀS)†`, symmetrized. For a selection S
/// only the `s̃ x s̃` block of K is evaluated.
pub fn u_fast<S: SymmetricSource + ?Sized>(
    src: &S,
    c: &DenseMatrix,
    s: &SketchOp,
) -> Result<FastSolution> {
    sketched_solution(src, c, s, None)
}

fn sketched_solution<S: SymmetricSource + ?Sized>(
    src: &S,
    c: &DenseMatrix,
    s: &SketchOp,
    known: Option<&Selection>,
) -> Result<FastSolution> {
    let n = check_square(src)?;
    if s.n() != n || c.rows() != n {
        return Err(Error::DimensionMismatch {
            op: "u_fast",
            expected: n,
            got: if s.n() != n { s.n() } else { c.rows() },
        });
    }
    if s.s() == 0 {
        return Err(Error::EmptySketch);
    }
    let stc = s.apply_left(c)?;
    let sks = match (s.as_selection(), known) {
        (Some(sel), Some(p)) => selected_block_reusing(src, c, sel, p)?,
        (Some(sel), None) => src
            .block(sel.indices(), sel.indices())?
            .scale_rows(sel.scales())
            .scale_cols(sel.scales()),
        (None, _) => {
            let ks = s.apply_right(&src.full()?)?;
            s.apply_left(&ks)?
        }
    };
    let svd = condensed_svd(&stc, DEFAULT_RANK_TOL)?;
    let stc_pinv = pinv_from_svd(&svd);
    let u = stc_pinv.matmul(&sks.symmetrize()).matmul_tr(&stc_pinv);
    Ok(FastSolution {
        sketch_rank: svd.rank(),
        c_rank: numerical_rank(c, DEFAULT_RANK_TOL)?,
        model: LowRankSym::new(c.clone(), u)?,
    })
}

/// `SᵀKS` for a selection S when `C = K[:, P]` (unscaled) is already known:
/// entries in a row or column of P are read from C, and only the block on
/// `S ∖ P` is evaluated.
fn selected_block_reusing<S: SymmetricSource + ?Sized>(
    src: &S,
    c: &DenseMatrix,
    sel: &Selection,
    p: &Selection,
) -> Result<DenseMatrix> {
    let col_of = |i: usize| p.indices().iter().position(|&q| q == i);
    let idx = sel.indices();
    let pos: Vec<Option<usize>> = idx.iter().map(|&i| col_of(i)).collect();
    let fresh: Vec<usize> = (0..idx.len()).filter(|&a| pos[a].is_none()).collect();
    let fresh_idx: Vec<usize> = fresh.iter().map(|&a| idx[a]).collect();
    let inner = src.block(&fresh_idx, &fresh_idx)?;
    let mut slot = vec![usize::MAX; idx.len()];
    for (f, &a) in fresh.iter().enumerate() {
        slot[a] = f;
    }
    let m = idx.len();
    let mut out = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let v = match (pos[a], pos[b]) {
                (_, Some(q)) => c[(idx[a], q)],
                (Some(q), None) => c[(idx[b], q)],
                (None, None) => inner[(slot[a], slot[b])],
            };
            out.row_mut(a)[b] = v * sel.scales()[a] * sel.scales()[b];
        }
    }
    Ok(out)
}

/// `‖K − CUCᵀ‖_F ≤ tol·‖K‖_F`.
pub fn exact_recovery_holds(k: &DenseMatrix, f: &LowRankSym, tol: f64) -> bool {
    k.sub(&f.reconstruct()).frobenius_norm() <= tol * k.frobenius_norm()
}

/// Settings for the fast-model driver: how the second sketch S is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastConfig {
    pub method: SketchMethod,
    pub s: usize,
    pub scale: ScaleMode,
    pub leverage_norm: LeverageNorm,
    /// Keep every column of P inside S (selection sketches only).
    pub force_include: bool,
    /// Replace C by an orthonormal basis of its range before solving.
    pub orthonormalize: bool,
    pub seed: u64,
}

impl FastConfig {
    pub fn new(s: usize, seed: u64) -> Self {
        Self {
            method: SketchMethod::Leverage,
            s,
            scale: ScaleMode::Unscaled,
            leverage_norm: LeverageNorm::Rank,
            force_include: true,
            orthonormalize: false,
            seed,
        }
    }
}

/// Draws the second sketch S over `[n]` for a given C.
pub fn draw_sketch(c: &DenseMatrix, p: &SketchOp, config: &FastConfig) -> Result<SketchOp> {
    let n = c.rows();
    let forced: Vec<usize> = match (config.force_include, p.as_selection()) {
        (true, Some(sel)) => sel.indices().to_vec(),
        _ => Vec::new(),
    };
    match config.method {
        SketchMethod::Leverage => leverage_sampler_including(
            c,
            config.s,
            config.scale,
            config.leverage_norm,
            &forced,
            config.seed,
        ),
        SketchMethod::Uniform => {
            let probs = SamplingProbs::uniform(n)?;
            let base = column_sampler(&probs, config.s, config.scale, config.seed)?;
            if forced.is_empty() {
                Ok(base)
            } else {
                force_include(&base, &forced, &probs, config.seed)
            }
        }
        SketchMethod::Gaussian => Ok(gaussian_sketch(n, config.s, config.seed)),
        SketchMethod::Srht => srht_sketch(n, config.s, config.seed),
        SketchMethod::CountSketch => count_sketch(n, config.s, config.seed),
    }
}

/// Full fast-model pipeline: `C = K·P`, optional orthonormalization, draw
/// S, then solve for U. With an unscaled selection P and a selection S,
/// the kernel entries read are `n·c + |S ∖ P|²`.
pub fn fast_model<S: SymmetricSource + ?Sized>(
    src: &S,
    p: &SketchOp,
    config: &FastConfig,
) -> Result<FastSolution> {
    let mut c = form_c(src, p)?;
    if config.orthonormalize {
        c = orthonormalize_c(&c)?;
    }
    let s = draw_sketch(&c, p, config)?;
    let reuse = match p.as_selection() {
        Some(sel) if !config.orthonormalize && sel.is_unscaled() => Some(sel),
        _ => None,
    };
    sketched_solution(src, &c, &s, reuse)
}
