//! Closed-form oracles, error metrics and a seeded trial runner for
//! checking probabilistic error bounds empirically.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cur::{cur_sketch, select_indices, selection_weights, u_fast_cur, u_opt_cur, SelectionMethod};
use crate::error::{Error, Result};
use crate::kernel::{Dataset, KernelSource};
use crate::linalg::{orthonormal_basis, spectral_norm, sym_eigenvalues, DenseMatrix, Side, DEFAULT_RANK_TOL};
use crate::rng::{derive_seed, seeded};
use crate::sketch::{
    column_sampler, count_sketch, gaussian_sketch, leverage_sampler, srht_sketch, SamplingProbs, ScaleMode, SketchMethod,
    SketchOp,
};
use crate::source::EntrySource;
use crate::spsd::{fast_model, form_c, u_fast, u_prototype, FastConfig, LowRankSym};

/// Block-diagonal test matrix with `k` blocks `(1−α)I_p + α·11ᵀ`, `p = n/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSpec {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
}

impl AdversarialSpec {
    pub fn new(n: usize, k: usize, alpha: f64) -> Result<Self> {
        if k == 0 || n == 0 || n % k != 0 {
            return Err(Error::InvalidParameter(format!("k must divide n, got n={n}, k={k}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        Ok(Self { n, k, alpha })
    }

    pub fn block_size(&self) -> usize {
        self.n / self.k
    }

    /// `‖A − A_k‖_F² = (1−α)²(n−k)`.
    pub fn tail_energy(&self) -> f64 {
        (1.0 - self.alpha).powi(2) * (self.n - self.k) as f64
    }
}

pub fn adversarial_matrix(spec: &AdversarialSpec) -> Result<DenseMatrix> {
    let spec = AdversarialSpec::new(spec.n, spec.k, spec.alpha)?;
    let p = spec.block_size();
    Ok(DenseMatrix::from_fn(spec.n, spec.n, |i, j| {
        if i == j {
            1.0
        } else if i / p == j / p {
            spec.alpha
        } else {
            0.0
        }
    }))
}

/// Lower bound on `‖A − CUCᵀ‖_F² / ‖A − A_k‖_F²` for the fast model with
/// `c` selected columns and a selection sketch of size `s`:
/// `(n−c)/(n−k)·(1 + 2k/c) + (n−s)/(n−k)·k(n−s)/s²`.
pub fn lower_bound_rhs(n: usize, c: usize, s: usize, k: usize) -> Result<f64> {
    if k >= n || c == 0 || c > s || s > n {
        return Err(Error::InvalidParameter(format!(
            "need k < n and 1 <= c <= s <= n, got n={n}, c={c}, s={s}, k={k}"
        )));
    }
    let (n, c, s, k) = (n as f64, c as f64, s as f64, k as f64);
    Ok((n - c) / (n - k) * (1.0 + 2.0 * k / c) + (n - s) / (n - k) * k * (n - s) / (s * s))
}

/// `(aI_c + b·11ᵀ)⁻¹ = a⁻¹I − b/(a(a + bc))·11ᵀ`.
pub fn structured_inverse(a: f64, b: f64, c: usize) -> Result<DenseMatrix> {
    let cf = c as f64;
    if a == 0.0 || a + b * cf == 0.0 {
        return Err(Error::Singular);
    }
    let off = -b / (a * (a + b * cf));
    Ok(DenseMatrix::from_fn(c, c, |i, j| if i == j { 1.0 / a + off } else { off }))
}

/// `‖K − CUCᵀ‖_F² / ‖K‖_F²`.
pub fn rel_fro_error(k: &DenseMatrix, f: &LowRankSym) -> Result<f64> {
    let denom = k.frobenius_norm_sq();
    if denom == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(k.sub(&f.reconstruct()).frobenius_norm_sq() / denom)
}

/// `‖K − f‖_F² / ‖K − baseline‖_F²`.
pub fn objective_ratio(k: &DenseMatrix, f: &LowRankSym, baseline: &LowRankSym) -> Result<f64> {
    let denom = k.sub(&baseline.reconstruct()).frobenius_norm_sq();
    let num = k.sub(&f.reconstruct()).frobenius_norm_sq();
    if denom == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(num / denom)
}

fn ensure_orthonormal(v: &DenseMatrix, what: &str) -> Result<()> {
    let gram = v.tr_matmul(v);
    if gram.max_abs_diff(&DenseMatrix::identity(v.cols())) > 1e-8 {
        return Err(Error::InvalidParameter(format!("{what} must have orthonormal columns")));
    }
    Ok(())
}

/// `(1/k)·‖U_k − ṼṼᵀU_k‖_F²`: 0 when the spans agree, 1 when orthogonal.
pub fn misalignment(u_k: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
    if u_k.rows() != v.rows() {
        return Err(Error::DimensionMismatch {
            op: "misalignment",
            expected: u_k.rows(),
            got: v.rows(),
        });
    }
    if u_k.cols() == 0 {
        return Err(Error::InvalidParameter("need at least one reference vector".into()));
    }
    ensure_orthonormal(u_k, "reference basis")?;
    ensure_orthonormal(v, "approximate basis")?;
    let proj = v.matmul(&v.tr_matmul(u_k));
    Ok(u_k.sub(&proj).frobenius_norm_sq() / u_k.cols() as f64)
}

/// Value and verdict of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub value: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub successes: usize,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl TrialReport {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn median(&self) -> f64 {
        median(&self.values)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs `trials` independent trials in parallel. Trial `i` receives the
/// seed `derive_seed(base_seed, i)`, so the report does not depend on
/// scheduling.
pub fn run_trials<F>(trials: usize, base_seed: u64, trial: F) -> Result<TrialReport>
where
    F: Fn(u64) -> Result<TrialOutcome> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..trials as u64).map(|i| derive_seed(base_seed, i)).collect();
    let outcomes: Vec<TrialOutcome> = seeds
        .par_iter()
        .map(|&s| trial(s))
        .collect::<Result<_>>()?;
    Ok(TrialReport {
        trials,
        successes: outcomes.iter().filter(|o| o.success).count(),
        values: outcomes.iter().map(|o| o.value).collect(),
        seeds,
    })
}

/// `n` points with i.i.d. standard normal coordinates.
pub fn gaussian_points(n: usize, d: usize, seed: u64) -> Result<Arc<Dataset>> {
    Ok(Arc::new(Dataset::new(gaussian_matrix(n, d, seed), None)?))
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = seeded(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G·Gᵀ` for an `n x rank` Gaussian G.
pub fn random_psd(n: usize, rank: usize, seed: u64) -> DenseMatrix {
    let g = gaussian_matrix(n, rank, seed);
    g.matmul_tr(&g).symmetrize()
}

/// Rank-`rank` signal plus i.i.d. Gaussian noise of scale `noise`.
pub fn low_rank_plus_noise(m: usize, n: usize, rank: usize, noise: f64, seed: u64) -> DenseMatrix {
    let left = gaussian_matrix(m, rank, derive_seed(seed, 0));
    let right = gaussian_matrix(rank, n, derive_seed(seed, 1));
    left.matmul(&right)
        .add(&gaussian_matrix(m, n, derive_seed(seed, 2)).scale(noise))
}

/// `c` distinct indices of `[n]`, uniformly, sorted.
pub fn uniform_indices(n: usize, c: usize, seed: u64) -> Vec<usize> {
    let mut idx = index::sample(&mut seeded(seed), n, c).into_vec();
    idx.sort_unstable();
    idx
}

/// One fast-vs-prototype trial on a kernel: C from `c` uniformly chosen
/// columns, S from leverage sampling of size `s` that keeps C's columns.
/// The value is `‖K − CU_fastCᵀ‖_F² / ‖K − CU_protoCᵀ‖_F²`, successful when
/// at most `1 + eps`.
pub fn fast_vs_prototype_trial(
    k: &DenseMatrix,
    c: usize,
    s: usize,
    eps: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    let n = k.rows();
    let p = SketchOp::select(n, &uniform_indices(n, c, derive_seed(seed, 0)))?;
    let cmat = form_c(k, &p)?;
    let proto = u_prototype(k, &cmat)?;
    let fast = fast_model(k, &p, &FastConfig::new(s, derive_seed(seed, 1)))?;
    let value = objective_ratio(k, &fast.model, &proto)?;
    Ok(TrialOutcome {
        value,
        success: value <= 1.0 + eps,
    })
}

/// RBF kernel matrix of `data` at scale `sigma`.
pub fn rbf_kernel(data: &Arc<Dataset>, sigma: f64) -> Result<DenseMatrix> {
    KernelSource::new(Arc::clone(data), sigma)?.full()
}

/// A matrix with its leverage-score selection weights, computed once and
/// shared by every trial.
#[derive(Debug, Clone)]
pub struct CurInstance {
    pub a: DenseMatrix,
    pub col_weights: Vec<f64>,
    pub row_weights: Vec<f64>,
}

impl CurInstance {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        Ok(Self {
            col_weights: selection_weights(&a, SelectionMethod::Leverage, Side::Column)?,
            row_weights: selection_weights(&a, SelectionMethod::Leverage, Side::Row)?,
            a,
        })
    }
}

/// One fast-CUR trial: leverage-selected C (`c` columns) and R (`r` rows),
/// leverage sketches of sizes `s_c`, `s_r` that keep the selected rows and
/// columns. The value is the objective ratio against `U* = C†AR†`.
pub fn fast_cur_trial(
    inst: &CurInstance,
    c: usize,
    r: usize,
    s_c: usize,
    s_r: usize,
    eps: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    let a = &inst.a;
    let col_idx = select_indices(&inst.col_weights, c, derive_seed(seed, 0))?;
    let row_idx = select_indices(&inst.row_weights, r, derive_seed(seed, 1))?;
    let (cm, rm) = (a.select_cols(&col_idx), a.select_rows(&row_idx));
    let sc = cur_sketch(&cm, SketchMethod::Leverage, s_c, ScaleMode::Unscaled, &row_idx, derive_seed(seed, 2))?;
    let sr = cur_sketch(
        &rm.transpose(),
        SketchMethod::Leverage,
        s_r,
        ScaleMode::Unscaled,
        &col_idx,
        derive_seed(seed, 3),
    )?;
    let fast = u_fast_cur(a, &cm, &rm, &sc, &sr)?;
    let opt = u_opt_cur(a, &cm, &rm)?;
    let obj = |u: &DenseMatrix| a.sub(&cm.matmul(u).matmul(&rm)).frobenius_norm_sq();
    let value = obj(&fast) / obj(&opt);
    Ok(TrialOutcome {
        value,
        success: value <= 1.0 + eps,
    })
}

/// The block matrix together with its numerically measured tail energy.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub spec: AdversarialSpec,
    pub a: DenseMatrix,
    /// `‖A − A_k‖_F²` from the spectrum of A.
    pub tail_energy: f64,
}

impl LowerBoundInstance {
    pub fn new(spec: AdversarialSpec) -> Result<Self> {
        let a = adversarial_matrix(&spec)?;
        let tail_energy = tail_energy(&a, spec.k)?;
        Ok(Self { spec, a, tail_energy })
    }
}

/// Measured ratio on the block matrix for a column selection P of size
/// `c` and a selection S ⊇ P of size `s`, both uniform and unscaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundMeasurement {
    /// `‖A − CU_fastCᵀ‖_F² / ‖A − A_k‖_F²`.
    pub ratio: f64,
    pub rhs: f64,
}

impl LowerBoundMeasurement {
    /// The ratio clears the bound up to a relative `slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.ratio >= self.rhs * (1.0 - slack)
    }
}

pub fn lower_bound_trial(inst: &LowerBoundInstance, c: usize, s: usize, seed: u64) -> Result<LowerBoundMeasurement> {
    let (a, n) = (&inst.a, inst.spec.n);
    let rhs = lower_bound_rhs(n, c, s, inst.spec.k)?;
    let p_idx = uniform_indices(n, c, derive_seed(seed, 0));
    let rest: Vec<usize> = (0..n).filter(|i| p_idx.binary_search(i).is_err()).collect();
    let mut s_idx: Vec<usize> = uniform_indices(rest.len(), s - c, derive_seed(seed, 1))
        .into_iter()
        .map(|j| rest[j])
        .chain(p_idx.iter().copied())
        .collect();
    s_idx.sort_unstable();
    let p = SketchOp::select(n, &p_idx)?;
    let cmat = form_c(a, &p)?;
    let fast = u_fast(a, &cmat, &SketchOp::select(n, &s_idx)?)?;
    Ok(LowerBoundMeasurement {
        ratio: a.sub(&fast.model.reconstruct()).frobenius_norm_sq() / inst.tail_energy,
        rhs,
    })
}

/// `‖A − A_k‖_F²` for symmetric A: the squared eigenvalues beyond the
/// `k` largest in magnitude.
pub fn tail_energy(a: &DenseMatrix, k: usize) -> Result<f64> {
    let mut ev: Vec<f64> = sym_eigenvalues(a)?.into_iter().map(f64::abs).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev.iter().skip(k).map(|v| v * v).sum())
}

/// A scaled sketch of family `method` with `s` columns, drawn against the
/// orthonormal basis `u` (used only for leverage sampling).
pub fn embedding_sketch(u: &DenseMatrix, method: SketchMethod, s: usize, seed: u64) -> Result<SketchOp> {
    let n = u.rows();
    match method {
        SketchMethod::Leverage => leverage_sampler(u, s, ScaleMode::Scaled, seed),
        SketchMethod::Uniform => column_sampler(&SamplingProbs::uniform(n)?, s, ScaleMode::Scaled, seed),
        SketchMethod::Gaussian => Ok(gaussian_sketch(n, s, seed)),
        SketchMethod::Srht => srht_sketch(n, s, seed),
        SketchMethod::CountSketch => count_sketch(n, s, seed),
    }
}

/// `‖UᵀSSᵀU − I‖₂` for one draw; succeeds when below `eta`.
pub fn subspace_embedding_trial(
    u: &DenseMatrix,
    method: SketchMethod,
    s: usize,
    eta: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    let su = embedding_sketch(u, method, s, seed)?.apply_left(u)?;
    let gram = su.tr_matmul(&su).sub(&DenseMatrix::identity(u.cols()));
    let value = spectral_norm(&gram)?;
    Ok(TrialOutcome {
        value,
        success: value < eta,
    })
}

/// `‖UᵀB − UᵀSSᵀB‖_F² / ‖B‖_F²` for one draw; succeeds when below `eps`.
pub fn product_preservation_trial(
    u: &DenseMatrix,
    b: &DenseMatrix,
    method: SketchMethod,
    s: usize,
    eps: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    let sketch = embedding_sketch(u, method, s, seed)?;
    let (su, sb) = (sketch.apply_left(u)?, sketch.apply_left(b)?);
    let err = u.tr_matmul(b).sub(&su.tr_matmul(&sb));
    let value = err.frobenius_norm_sq() / b.frobenius_norm_sq();
    Ok(TrialOutcome {
        value,
        success: value < eps,
    })
}

/// Orthonormal `n x k` basis whose row leverage scores are uneven: rows of
/// a Gaussian matrix are stretched by factors growing from 1 to `spread`.
pub fn skewed_basis(n: usize, k: usize, spread: f64, seed: u64) -> Result<DenseMatrix> {
    let g = gaussian_matrix(n, k, seed);
    let stretch: Vec<f64> = (0..n)
        .map(|i| 1.0 + (spread - 1.0) * i as f64 / (n.max(2) - 1) as f64)
        .collect();
    orthonormal_basis(&g.scale_rows(&stretch), DEFAULT_RANK_TOL)
}

/// Orthonormal `n x k` cosine basis (`cos(π(i+½)j/n)`, `j = 1..=k`), with
/// every leverage score at most `2k/n`.
pub fn cosine_basis(n: usize, k: usize) -> DenseMatrix {
    let norm = (2.0 / n as f64).sqrt();
    DenseMatrix::from_fn(n, k, |i, j| {
        norm * (std::f64::consts::PI * (i as f64 + 0.5) * (j + 1) as f64 / n as f64).cos()
    })
}
