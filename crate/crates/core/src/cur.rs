//! CUR decomposition `A ≈ C·U·R` from actual columns C and rows R of A,
//! with the optimal `U = C†AR†` or the sketched
//! `Ũ = (S_CᵀC)†(S_CᵀAS_R)(RS_R)†`.

use rand::seq::index;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, pinv, row_norms_sq, DenseMatrix, Side, DEFAULT_RANK_TOL};
use crate::rng::{derive_seed, seeded};
use crate::sketch::{
    column_sampler, count_sketch, force_include, gaussian_sketch, leverage_sampler_including,
    srht_sketch, LeverageNorm, SamplingProbs, ScaleMode, SketchMethod, SketchOp,
};
use crate::source::EntrySource;

#[derive(Debug, Clone, PartialEq)]
pub struct CurFactors {
    pub c: DenseMatrix,
    pub u: DenseMatrix,
    pub r: DenseMatrix,
    pub col_idx: Option<Vec<usize>>,
    pub row_idx: Option<Vec<usize>>,
}

impl CurFactors {
    pub fn new(c: DenseMatrix, u: DenseMatrix, r: DenseMatrix) -> Result<Self> {
        if u.rows() != c.cols() || u.cols() != r.rows() {
            return Err(Error::DimensionMismatch {
                op: "cur factors",
                expected: c.cols(),
                got: u.rows(),
            });
        }
        Ok(Self {
            c,
            u,
            r,
            col_idx: None,
            row_idx: None,
        })
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.c.matmul(&self.u).matmul(&self.r)
    }

    /// `‖A − CUR‖_F²`.
    pub fn objective(&self, a: &DenseMatrix) -> f64 {
        a.sub(&self.reconstruct()).frobenius_norm_sq()
    }
}

/// How the columns of C and rows of R are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    Uniform,
    Leverage,
}

/// `count` distinct indices drawn one after another, each with probability
/// proportional to its weight among those not yet taken; sorted.
pub fn select_indices(weights: &[f64], count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 || count > weights.len() {
        return Err(Error::RankOutOfRange {
            k: count,
            max: weights.len(),
        });
    }
    let mut rng = seeded(seed);
    let picked = index::sample_weighted(&mut rng, weights.len(), |i| weights[i], count)
        .map_err(|e| Error::InvalidProbabilities(e.to_string()))?;
    if picked.len() < count {
        return Err(Error::InvalidProbabilities(format!(
            "only {} indices carry positive weight, {count} requested",
            picked.len()
        )));
    }
    let mut idx = picked.into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Selection weights over the rows (`Side::Row`) or columns of `a`.
pub fn selection_weights(a: &DenseMatrix, method: SelectionMethod, side: Side) -> Result<Vec<f64>> {
    let len = match side {
        Side::Row => a.rows(),
        Side::Column => a.cols(),
    };
    match method {
        SelectionMethod::Uniform => Ok(vec![1.0; len]),
        SelectionMethod::Leverage => {
            let mut w = leverage_scores(a, side, DEFAULT_RANK_TOL)?;
            // scores are squared norms, so round-off sits near ε²
            let floor = 1e-20 * w.iter().fold(0.0f64, |m, &v| m.max(v));
            w.iter_mut().filter(|v| **v <= floor).for_each(|v| *v = 0.0);
            Ok(w)
        }
    }
}

/// `c` distinct columns of `a` by [`select_indices`] on the selection
/// weights. Returns the unscaled columns and their sorted indices.
pub fn select_columns(
    a: &DenseMatrix,
    method: SelectionMethod,
    c: usize,
    seed: u64,
) -> Result<(DenseMatrix, Vec<usize>)> {
    let idx = select_indices(&selection_weights(a, method, Side::Column)?, c, seed)?;
    Ok((a.select_cols(&idx), idx))
}

/// Row counterpart of [`select_columns`].
pub fn select_rows(
    a: &DenseMatrix,
    method: SelectionMethod,
    r: usize,
    seed: u64,
) -> Result<(DenseMatrix, Vec<usize>)> {
    let idx = select_indices(&selection_weights(a, method, Side::Row)?, r, seed)?;
    Ok((a.select_rows(&idx), idx))
}

/// Rows drawn by adaptive sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRows {
    /// `r2` i.i.d. draws, possibly repeating.
    pub indices: Vec<usize>,
    /// Row probabilities that were used.
    pub probs: Vec<f64>,
    /// The residual vanished and uniform probabilities were used instead.
    pub uniform_fallback: bool,
}

/// Draws `r2` row indices i.i.d. with probability proportional to the
/// squared norm of each row of `A − A·R₁†R₁`, the part of A outside the
/// row space of `r1`.
pub fn adaptive_sample_rows(
    a: &DenseMatrix,
    r1: &DenseMatrix,
    r2: usize,
    seed: u64,
) -> Result<AdaptiveRows> {
    if r2 == 0 {
        return Err(Error::InvalidParameter("r2 must be at least 1".into()));
    }
    if r1.cols() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "adaptive sampling",
            expected: a.cols(),
            got: r1.cols(),
        });
    }
    let residual = if r1.rows() == 0 || r1.max_abs() == 0.0 {
        a.clone()
    } else {
        let proj = pinv(r1, DEFAULT_RANK_TOL)?.matmul(r1);
        a.sub(&a.matmul(&proj))
    };
    let weights = row_norms_sq(&residual);
    let total: f64 = weights.iter().sum();
    let uniform_fallback = !(total > 1e-20 * a.frobenius_norm_sq());
    let probs = if uniform_fallback {
        vec![1.0 / a.rows() as f64; a.rows()]
    } else {
        weights.iter().map(|w| w / total).collect()
    };
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidProbabilities(e.to_string()))?;
    let mut rng = seeded(seed);
    let indices = (0..r2).map(|_| dist.sample(&mut rng)).collect();
    Ok(AdaptiveRows {
        indices,
        probs,
        uniform_fallback,
    })
}

fn check_cur_shapes(a: (usize, usize), c: &DenseMatrix, r: &DenseMatrix) -> Result<()> {
    let (m, n) = a;
    if c.rows() != m {
        return Err(Error::DimensionMismatch {
            op: "cur columns",
            expected: m,
            got: c.rows(),
        });
    }
    if r.cols() != n {
        return Err(Error::DimensionMismatch {
            op: "cur rows",
            expected: n,
            got: r.cols(),
        });
    }
    Ok(())
}

/// `U* = C†·A·R†`, the minimizer of `‖A − CUR‖_F`.
pub fn u_opt_cur(a: &DenseMatrix, c: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    check_cur_shapes(a.shape(), c, r)?;
    let cp = pinv(c, DEFAULT_RANK_TOL)?;
    let rp = pinv(r, DEFAULT_RANK_TOL)?;
    Ok(cp.matmul(a).matmul(&rp))
}

/// `Ũ = (S_CᵀC)†·(S_CᵀA·S_R)·(R·S_R)†`. When both sketches are selections
/// only the `s_c x s_r` block of A is read.
pub fn u_fast_cur<A: EntrySource + ?Sized>(
    a: &A,
    c: &DenseMatrix,
    r: &DenseMatrix,
    s_c: &SketchOp,
    s_r: &SketchOp,
) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    check_cur_shapes((m, n), c, r)?;
    if s_c.s() == 0 || s_r.s() == 0 {
        return Err(Error::EmptySketch);
    }
    if s_c.n() != m || s_r.n() != n {
        return Err(Error::DimensionMismatch {
            op: "u_fast_cur sketches",
            expected: if s_c.n() != m { m } else { n },
            got: if s_c.n() != m { s_c.n() } else { s_r.n() },
        });
    }
    let core = match (s_c.as_selection(), s_r.as_selection()) {
        (Some(rows), Some(cols)) => a
            .block(rows.indices(), cols.indices())?
            .scale_rows(rows.scales())
            .scale_cols(cols.scales()),
        _ => s_r.apply_right(&s_c.apply_left(&a.full()?)?)?,
    };
    let left = pinv(&s_c.apply_left(c)?, DEFAULT_RANK_TOL)?;
    let right = pinv(&s_r.apply_right(r)?, DEFAULT_RANK_TOL)?;
    Ok(left.matmul(&core).matmul(&right))
}

/// How U is computed in [`cur_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurUMode {
    Optimal,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurConfig {
    pub c: usize,
    pub r: usize,
    pub select: SelectionMethod,
    pub u_mode: CurUMode,
    pub sketch: SketchMethod,
    pub s_c: usize,
    pub s_r: usize,
    pub scale: ScaleMode,
    /// Keep the selected rows in S_C and the selected columns in S_R.
    pub force_include: bool,
    pub seed: u64,
}

impl CurConfig {
    pub fn new(c: usize, r: usize, s_c: usize, s_r: usize, seed: u64) -> Self {
        Self {
            c,
            r,
            select: SelectionMethod::Leverage,
            u_mode: CurUMode::Fast,
            sketch: SketchMethod::Leverage,
            s_c,
            s_r,
            scale: ScaleMode::Unscaled,
            force_include: true,
            seed,
        }
    }
}

/// Sketch over the rows of `basis` (`m x c`), keeping `forced` if requested.
pub fn cur_sketch(
    basis: &DenseMatrix,
    method: SketchMethod,
    s: usize,
    scale: ScaleMode,
    forced: &[usize],
    seed: u64,
) -> Result<SketchOp> {
    let m = basis.rows();
    match method {
        SketchMethod::Leverage => {
            leverage_sampler_including(basis, s, scale, LeverageNorm::Rank, forced, seed)
        }
        SketchMethod::Uniform => {
            let probs = SamplingProbs::uniform(m)?;
            let base = column_sampler(&probs, s, scale, seed)?;
            if forced.is_empty() {
                Ok(base)
            } else {
                force_include(&base, forced, &probs, seed)
            }
        }
        SketchMethod::Gaussian => Ok(gaussian_sketch(m, s, seed)),
        SketchMethod::Srht => srht_sketch(m, s, seed),
        SketchMethod::CountSketch => count_sketch(m, s, seed),
    }
}

/// Column and row selection followed by the optimal or sketched U.
pub fn cur_pipeline<A: EntrySource + ?Sized>(a: &A, config: &CurConfig) -> Result<CurFactors> {
    let (m, n) = a.shape();
    if config.c == 0 || config.c > n || config.r == 0 || config.r > m {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= c <= {n} and 1 <= r <= {m}, got c={}, r={}",
            config.c, config.r
        )));
    }
    // Uniform selection with a sampled U never needs all of A.
    let lazy = config.select == SelectionMethod::Uniform
        && config.u_mode == CurUMode::Fast
        && config.sketch.is_sampling();
    let dense = if lazy { None } else { Some(a.full()?) };
    let weights = |side: Side, len: usize| match &dense {
        Some(d) => selection_weights(d, config.select, side),
        None => Ok(vec![1.0; len]),
    };
    let col_idx = select_indices(&weights(Side::Column, n)?, config.c, derive_seed(config.seed, 0))?;
    let row_idx = select_indices(&weights(Side::Row, m)?, config.r, derive_seed(config.seed, 1))?;
    let (c, r) = match &dense {
        Some(d) => (d.select_cols(&col_idx), d.select_rows(&row_idx)),
        None => (a.columns(&col_idx)?, a.rows(&row_idx)?),
    };
    let u = match config.u_mode {
        CurUMode::Optimal => u_opt_cur(dense.as_ref().expect("read in full"), &c, &r)?,
        CurUMode::Fast => {
            let (fr, fc): (&[usize], &[usize]) = if config.force_include {
                (&row_idx, &col_idx)
            } else {
                (&[], &[])
            };
            let s_c = cur_sketch(&c, config.sketch, config.s_c, config.scale, fr, derive_seed(config.seed, 2))?;
            let s_r = cur_sketch(
                &r.transpose(),
                config.sketch,
                config.s_r,
                config.scale,
                fc,
                derive_seed(config.seed, 3),
            )?;
            u_fast_cur(a, &c, &r, &s_c, &s_r)?
        }
    };
    let mut f = CurFactors::new(c, u, r)?;
    f.col_idx = Some(col_idx);
    f.row_idx = Some(row_idx);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::CountingMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn full_selection_is_a_permutation() {
        let a = gaussian(5, 6, 1);
        let (c, idx) = select_columns(&a, SelectionMethod::Leverage, 6, 2).unwrap();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert_eq!(c, a);
        assert!(select_columns(&a, SelectionMethod::Uniform, 7, 2).is_err());
        assert!(select_rows(&a, SelectionMethod::Uniform, 0, 2).is_err());
    }

    #[test]
    fn rank_one_leverage_skips_zero_columns() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.0, 1.0, 0.0, 3.0, 0.0, -1.0];
        let a = DenseMatrix::from_fn(3, 6, |i, j| u[i] * v[j]);
        for seed in 0..100 {
            let (_, idx) = select_columns(&a, SelectionMethod::Leverage, 2, seed).unwrap();
            assert!(idx.iter().all(|&j| v[j] != 0.0));
        }
        assert!(select_columns(&a, SelectionMethod::Leverage, 4, 0).is_err());
    }

    /// Exact inclusion probabilities of sequential weighted sampling without
    /// replacement, by enumerating every ordered draw.
    fn inclusion_oracle(w: &[f64], c: usize) -> Vec<f64> {
        fn walk(w: &[f64], taken: &mut Vec<usize>, prob: f64, c: usize, out: &mut [f64]) {
            if taken.len() == c {
                for &i in taken.iter() {
                    out[i] += prob;
                }
                return;
            }
            let rest: f64 = (0..w.len()).filter(|i| !taken.contains(i)).map(|i| w[i]).sum();
            for i in 0..w.len() {
                if taken.contains(&i) || w[i] == 0.0 {
                    continue;
                }
                taken.push(i);
                walk(w, taken, prob * w[i] / rest, c, out);
                taken.pop();
            }
        }
        let mut out = vec![0.0; w.len()];
        walk(w, &mut Vec::new(), 1.0, c, &mut out);
        out
    }

    #[test]
    fn inclusion_frequencies_match_enumeration() {
        let a = gaussian(4, 6, 3);
        let w = leverage_scores(&a, Side::Column, DEFAULT_RANK_TOL).unwrap();
        let expected = inclusion_oracle(&w, 3);
        let trials = 5000;
        let mut hits = [0usize; 6];
        for seed in 0..trials {
            for j in select_columns(&a, SelectionMethod::Leverage, 3, seed).unwrap().1 {
                hits[j] += 1;
            }
        }
        for j in 0..6 {
            let f = hits[j] as f64 / trials as f64;
            assert!((f - expected[j]).abs() < 0.03, "column {j}: {f} vs {}", expected[j]);
        }
    }

    #[test]
    fn adaptive_sampling_falls_back_when_spanned() {
        let a = gaussian(6, 4, 4);
        let out = adaptive_sample_rows(&a, &a, 5, 1).unwrap();
        assert!(out.uniform_fallback);
        assert_eq!(out.indices.len(), 5);
    }

    #[test]
    fn adaptive_sampling_targets_uncovered_block() {
        let mut a = DenseMatrix::zeros(20, 8);
        let b1 = gaussian(10, 4, 5);
        let b2 = gaussian(10, 4, 6);
        for i in 0..10 {
            a.row_mut(i)[..4].copy_from_slice(b1.row(i));
            a.row_mut(10 + i)[4..].copy_from_slice(b2.row(i));
        }
        let r1 = a.select_rows(&[0, 1, 2, 3]);
        let mut second = 0;
        let mut total = 0;
        for seed in 0..200 {
            let out = adaptive_sample_rows(&a, &r1, 5, seed).unwrap();
            assert!(!out.uniform_fallback);
            second += out.indices.iter().filter(|&&i| i >= 10).count();
            total += out.indices.len();
        }
        assert!(second as f64 / total as f64 >= 0.95);
    }

    #[test]
    fn adaptive_probabilities_follow_residual_norms() {
        let a = gaussian(8, 5, 7);
        let r1 = a.select_rows(&[0, 1]);
        let proj = pinv(&r1, DEFAULT_RANK_TOL).unwrap().matmul(&r1);
        let res = a.sub(&a.matmul(&proj));
        let w = row_norms_sq(&res);
        let total: f64 = w.iter().sum();
        let trials = 5000;
        let mut hits = [0usize; 8];
        for seed in 0..trials {
            hits[adaptive_sample_rows(&a, &r1, 1, seed).unwrap().indices[0]] += 1;
        }
        for i in 0..8 {
            let f = hits[i] as f64 / trials as f64;
            assert!((f - w[i] / total).abs() < 0.03);
        }
    }

    #[test]
    fn optimal_u_examples() {
        let c = gaussian(7, 2, 8);
        let r = gaussian(2, 5, 9);
        let a = c.matmul(&r);
        let u = u_opt_cur(&a, &c, &r).unwrap();
        assert!(a.sub(&c.matmul(&u).matmul(&r)).frobenius_norm() < 1e-10 * a.frobenius_norm());

        let a = gaussian(5, 4, 10);
        let u = u_opt_cur(&a, &a, &a).unwrap();
        assert!(u.rel_diff(&pinv(&a, DEFAULT_RANK_TOL).unwrap()) < 1e-10);
        assert!(u_opt_cur(&a, &gaussian(4, 2, 1), &a).is_err());
    }

    #[test]
    fn identity_sketches_reduce_to_optimal() {
        let a = gaussian(12, 9, 11);
        let (c, _) = select_columns(&a, SelectionMethod::Uniform, 4, 1).unwrap();
        let (r, _) = select_rows(&a, SelectionMethod::Uniform, 4, 2).unwrap();
        let fast = u_fast_cur(&a, &c, &r, &SketchOp::identity(12), &SketchOp::identity(9)).unwrap();
        let opt = u_opt_cur(&a, &c, &r).unwrap();
        assert!(fast.rel_diff(&opt) < 1e-10);
    }

    #[test]
    fn selector_sketches_give_intersection_inverse() {
        let a = gaussian(12, 9, 12);
        let (c, ci) = select_columns(&a, SelectionMethod::Uniform, 3, 1).unwrap();
        let (r, ri) = select_rows(&a, SelectionMethod::Uniform, 3, 2).unwrap();
        let p_r = SketchOp::select(12, &ri).unwrap();
        let p_c = SketchOp::select(9, &ci).unwrap();
        let u = u_fast_cur(&a, &c, &r, &p_r, &p_c).unwrap();
        let w = a.select_rows(&ri).select_cols(&ci);
        assert!(u.rel_diff(&pinv(&w, DEFAULT_RANK_TOL).unwrap()) < 1e-8);
        let opt = u_opt_cur(&a, &c, &r).unwrap();
        let obj = |u: &DenseMatrix| a.sub(&c.matmul(u).matmul(&r)).frobenius_norm_sq();
        assert!(obj(&u) > obj(&opt));
    }

    #[test]
    fn fast_u_reads_only_the_sketched_block() {
        let a = gaussian(30, 40, 13);
        let src = CountingMatrix::new(a.clone());
        let (c, _) = select_columns(&a, SelectionMethod::Uniform, 3, 1).unwrap();
        let (r, _) = select_rows(&a, SelectionMethod::Uniform, 3, 2).unwrap();
        let s_c = cur_sketch(&c, SketchMethod::Leverage, 10, ScaleMode::Scaled, &[], 3).unwrap();
        let s_r = cur_sketch(&r.transpose(), SketchMethod::Leverage, 12, ScaleMode::Scaled, &[], 4).unwrap();
        let u = u_fast_cur(&src, &c, &r, &s_c, &s_r).unwrap();
        assert_eq!(src.entries(), (s_c.s() * s_r.s()) as u64);
        let explicit = u_fast_cur(&a, &c, &r, &s_c, &s_r).unwrap();
        assert_eq!(u, explicit);
        assert!(u_fast_cur(&a, &c, &r, &SketchOp::identity(29), &s_r).is_err());
    }

    #[test]
    fn pipeline_recovers_rank_two() {
        let a = gaussian(15, 2, 14).matmul(&gaussian(2, 11, 15));
        let mut config = CurConfig::new(2, 2, 4, 4, 16);
        config.u_mode = CurUMode::Optimal;
        let f = cur_pipeline(&a, &config).unwrap();
        assert!(f.objective(&a) < 1e-18 * a.frobenius_norm_sq());
        assert_eq!(f.col_idx.as_ref().unwrap().len(), 2);
    }
}
