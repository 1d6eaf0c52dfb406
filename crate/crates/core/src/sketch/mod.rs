//! Sketching operators `S ∈ R^{n×s}`: column selection (uniform or
//! leverage-score sampling), Gaussian projection, SRHT and count sketch.
//!
//! Operators are implicit where possible. [`SketchOp::apply_left`] returns
//! `SᵀA` and [`SketchOp::apply_right`] returns `A·S` without materializing
//! `S`; [`SketchOp::densify`] exists for testing against the explicit
//! product.

mod hadamard;
mod sizes;

pub use hadamard::fwht;
pub use sizes::{
    product_preservation_size, recommended_cur_s, recommended_s, row_coherence,
    subspace_embedding_size, EmbeddingFamily, SizeRecipe,
};

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, DenseMatrix, Side, DEFAULT_RANK_TOL};
use crate::rng::seeded;

/// Whether sampled columns carry the importance weight `1/√(s·p_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    Scaled,
    #[default]
    Unscaled,
}

/// Denominator used in the leverage-sampling scale `√(norm/(s·ℓ_i))`.
/// Sampling probabilities are `min(1, s·ℓ_i/ρ)` in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LeverageNorm {
    /// Numerical rank ρ of C, consistent with `p_i = ℓ_i/ρ`.
    #[default]
    Rank,
    /// Column count c of C.
    Columns,
}

/// Sampling distribution over `[n]`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingProbs {
    probs: Vec<f64>,
}

impl SamplingProbs {
    /// Normalizes nonnegative weights into a distribution.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbabilities("empty distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidProbabilities(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidProbabilities("all weights are zero".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    /// `p_i = ℓ_i / ρ` from the row leverage scores of `c`.
    pub fn from_leverage(c: &DenseMatrix) -> Result<Self> {
        Self::new(leverage_scores(c, Side::Row, DEFAULT_RANK_TOL)?)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Inclusion probabilities `min(1, s·p_i)`.
    pub fn inclusion(&self, s: usize) -> Vec<f64> {
        self.probs.iter().map(|p| (s as f64 * p).min(1.0)).collect()
    }

    /// Entries whose inclusion probability was capped at one.
    pub fn capped(&self, s: usize) -> Vec<bool> {
        self.probs.iter().map(|p| s as f64 * p >= 1.0).collect()
    }
}

/// Column selection: column `j` of S is `scales[j] · e_{indices[j]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    indices: Vec<usize>,
    scales: Vec<f64>,
    requested: usize,
    mode: ScaleMode,
}

impl Selection {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// The target size `s` the selection was drawn for (its expectation).
    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn mode(&self) -> ScaleMode {
        self.mode
    }

    pub fn is_unscaled(&self) -> bool {
        self.scales.iter().all(|&w| w == 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Srht {
    padded: usize,
    signs: Vec<f64>,
    positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountSketch {
    buckets: Vec<usize>,
    signs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchKind {
    Selection(Selection),
    /// Explicit n x s matrix with i.i.d. N(0, 1/s) entries.
    Gaussian(DenseMatrix),
    Srht(Srht),
    CountSketch(CountSketch),
}

/// An `n x s` sketching operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOp {
    n: usize,
    s: usize,
    kind: SketchKind,
}

impl SketchOp {
    /// Explicit selection operator; indices may repeat.
    pub fn selection(n: usize, indices: Vec<usize>, scales: Vec<f64>) -> Result<Self> {
        if indices.len() != scales.len() {
            return Err(Error::DimensionMismatch {
                op: "selection scales",
                expected: indices.len(),
                got: scales.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, dim: n });
        }
        if scales.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("selection scales must be positive".into()));
        }
        let mode = if scales.iter().all(|&w| w == 1.0) {
            ScaleMode::Unscaled
        } else {
            ScaleMode::Scaled
        };
        Ok(Self {
            n,
            s: indices.len(),
            kind: SketchKind::Selection(Selection {
                requested: indices.len(),
                indices,
                scales,
                mode,
            }),
        })
    }

    /// Unscaled selection of the given indices (the P of `C = K·P`).
    pub fn select(n: usize, indices: &[usize]) -> Result<Self> {
        Self::selection(n, indices.to_vec(), vec![1.0; indices.len()])
    }

    /// `S = I_n` as a full unscaled selection.
    pub fn identity(n: usize) -> Self {
        Self::select(n, &(0..n).collect::<Vec<_>>()).expect("identity selection is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Realized number of columns `s̃`.
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn kind(&self) -> &SketchKind {
        &self.kind
    }

    pub fn as_selection(&self) -> Option<&Selection> {
        match &self.kind {
            SketchKind::Selection(sel) => Some(sel),
            _ => None,
        }
    }

    pub fn is_selection(&self) -> bool {
        self.as_selection().is_some()
    }

    /// Explicit `n x s` matrix.
    pub fn densify(&self) -> DenseMatrix {
        match &self.kind {
            SketchKind::Selection(sel) => {
                let mut d = DenseMatrix::zeros(self.n, self.s);
                for (j, (&i, &w)) in sel.indices.iter().zip(&sel.scales).enumerate() {
                    d[(i, j)] = w;
                }
                d
            }
            SketchKind::Gaussian(g) => g.clone(),
            SketchKind::CountSketch(cs) => {
                let mut d = DenseMatrix::zeros(self.n, self.s);
                for (i, (&b, &g)) in cs.buckets.iter().zip(&cs.signs).enumerate() {
                    d[(i, b)] = g;
                }
                d
            }
            SketchKind::Srht(_) => self
                .apply_left(&DenseMatrix::identity(self.n))
                .expect("identity has matching dimension")
                .transpose(),
        }
    }

    /// `Sᵀ·A` for `A` with `n` rows.
    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.n {
            return Err(Error::DimensionMismatch {
                op: "apply_left",
                expected: self.n,
                got: a.rows(),
            });
        }
        let width = a.cols();
        Ok(match &self.kind {
            SketchKind::Selection(sel) => {
                let mut out = DenseMatrix::zeros(self.s, width);
                for (j, (&i, &w)) in sel.indices.iter().zip(&sel.scales).enumerate() {
                    for (o, &v) in out.row_mut(j).iter_mut().zip(a.row(i)) {
                        *o = w * v;
                    }
                }
                out
            }
            SketchKind::Gaussian(g) => g.tr_matmul(a),
            SketchKind::CountSketch(cs) => {
                let mut out = DenseMatrix::zeros(self.s, width);
                for (i, (&b, &g)) in cs.buckets.iter().zip(&cs.signs).enumerate() {
                    let dst = out.row_mut(b);
                    for (o, &v) in dst.iter_mut().zip(a.row(i)) {
                        if v != 0.0 {
                            *o += g * v;
                        }
                    }
                }
                out
            }
            SketchKind::Srht(t) => {
                let mut buf = vec![0.0; t.padded * width];
                for i in 0..self.n {
                    let sign = t.signs[i];
                    for (b, &v) in buf[i * width..(i + 1) * width].iter_mut().zip(a.row(i)) {
                        *b = sign * v;
                    }
                }
                hadamard::fwht_rows(&mut buf, t.padded, width);
                // (1/√m)·√(m/s) folds into a single 1/√s factor
                let factor = 1.0 / (self.s as f64).sqrt();
                let mut out = DenseMatrix::zeros(self.s, width);
                for (j, &p) in t.positions.iter().enumerate() {
                    for (o, &v) in out.row_mut(j).iter_mut().zip(&buf[p * width..(p + 1) * width]) {
                        *o = factor * v;
                    }
                }
                out
            }
        })
    }

    /// `A·S` for `A` with `n` columns.
    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.cols() != self.n {
            return Err(Error::DimensionMismatch {
                op: "apply_right",
                expected: self.n,
                got: a.cols(),
            });
        }
        Ok(match &self.kind {
            SketchKind::Selection(sel) => a.select_cols(&sel.indices).scale_cols(&sel.scales),
            SketchKind::Gaussian(g) => a.matmul(g),
            SketchKind::CountSketch(cs) => {
                let mut out = DenseMatrix::zeros(a.rows(), self.s);
                for r in 0..a.rows() {
                    let src = a.row(r);
                    let dst = out.row_mut(r);
                    for (i, &v) in src.iter().enumerate() {
                        if v != 0.0 {
                            dst[cs.buckets[i]] += cs.signs[i] * v;
                        }
                    }
                }
                out
            }
            SketchKind::Srht(_) => self.apply_left(&a.transpose())?.transpose(),
        })
    }
}

fn draw_selection(
    inclusion: &[f64],
    forced: &BTreeSet<usize>,
    requested: usize,
    mode: ScaleMode,
    scale_of: impl Fn(usize, f64) -> f64,
    seed: u64,
) -> SketchOp {
    let mut rng = seeded(seed);
    let mut indices = Vec::new();
    let mut scales = Vec::new();
    for (i, &pi) in inclusion.iter().enumerate() {
        // one uniform per index keeps the stream aligned across variants
        let u: f64 = rng.random();
        if forced.contains(&i) {
            indices.push(i);
            scales.push(1.0);
        } else if pi > 0.0 && u < pi {
            indices.push(i);
            scales.push(match mode {
                ScaleMode::Scaled => scale_of(i, pi),
                ScaleMode::Unscaled => 1.0,
            });
        }
    }
    let s = indices.len();
    SketchOp {
        n: inclusion.len(),
        s,
        kind: SketchKind::Selection(Selection {
            indices,
            scales,
            requested,
            mode,
        }),
    }
}

/// Independent Bernoulli column sampling: index `i` is kept with
/// probability `min(1, s·p_i)` and, when scaled, weighted by
/// `1/√min(1, s·p_i)`.
pub fn column_sampler(probs: &SamplingProbs, s: usize, scale: ScaleMode, seed: u64) -> Result<SketchOp> {
    if s == 0 {
        return Err(Error::InvalidParameter("sketch size s must be at least 1".into()));
    }
    let inclusion = probs.inclusion(s);
    Ok(draw_selection(
        &inclusion,
        &BTreeSet::new(),
        s,
        scale,
        |_, pi| 1.0 / pi.sqrt(),
        seed,
    ))
}

/// Leverage-score sampling on the rows of `c` with the default
/// [`LeverageNorm::Rank`] scale.
pub fn leverage_sampler(c: &DenseMatrix, s: usize, scale: ScaleMode, seed: u64) -> Result<SketchOp> {
    leverage_sampler_with(c, s, scale, LeverageNorm::Rank, seed)
}

pub fn leverage_sampler_with(
    c: &DenseMatrix,
    s: usize,
    scale: ScaleMode,
    norm: LeverageNorm,
    seed: u64,
) -> Result<SketchOp> {
    leverage_sampler_including(c, s, scale, norm, &[], seed)
}

/// Leverage-score sampling in which the indices of `forced` are always
/// kept with weight one.
pub fn leverage_sampler_including(
    c: &DenseMatrix,
    s: usize,
    scale: ScaleMode,
    norm: LeverageNorm,
    forced: &[usize],
    seed: u64,
) -> Result<SketchOp> {
    if s == 0 {
        return Err(Error::InvalidParameter("sketch size s must be at least 1".into()));
    }
    if let Some(&bad) = forced.iter().find(|&&i| i >= c.rows()) {
        return Err(Error::IndexOutOfRange { index: bad, dim: c.rows() });
    }
    let scores = leverage_scores(c, Side::Row, DEFAULT_RANK_TOL)?;
    let rho: f64 = scores.iter().sum();
    let denom = match norm {
        LeverageNorm::Rank => rho,
        LeverageNorm::Columns => c.cols() as f64,
    };
    let sf = s as f64;
    let inclusion: Vec<f64> = scores.iter().map(|l| (sf * l / rho).min(1.0)).collect();
    Ok(draw_selection(
        &inclusion,
        &forced.iter().copied().collect(),
        s,
        scale,
        |i, _| 1.0 / (sf * scores[i] / denom).min(1.0).sqrt(),
        seed,
    ))
}

/// Redraws a selection so that every index of `forced` is kept with
/// probability one (weight one); the remaining indices are sampled with
/// their original probabilities `min(1, s·p_i)` under `base`'s size and
/// scale mode.
pub fn force_include(
    base: &SketchOp,
    forced: &[usize],
    probs: &SamplingProbs,
    seed: u64,
) -> Result<SketchOp> {
    let sel = base.as_selection().ok_or(Error::NotSelection)?;
    if probs.len() != base.n {
        return Err(Error::DimensionMismatch {
            op: "force_include probabilities",
            expected: base.n,
            got: probs.len(),
        });
    }
    if let Some(&bad) = forced.iter().find(|&&i| i >= base.n) {
        return Err(Error::IndexOutOfRange { index: bad, dim: base.n });
    }
    let forced: BTreeSet<usize> = forced.iter().copied().collect();
    let inclusion = probs.inclusion(sel.requested);
    Ok(draw_selection(
        &inclusion,
        &forced,
        sel.requested,
        sel.mode,
        |_, pi| 1.0 / pi.sqrt(),
        seed,
    ))
}

/// `S = G/√s` with i.i.d. standard normal `G`.
pub fn gaussian_sketch(n: usize, s: usize, seed: u64) -> SketchOp {
    let mut rng = seeded(seed);
    let scale = if s > 0 { 1.0 / (s as f64).sqrt() } else { 0.0 };
    let g = DenseMatrix::from_fn(n, s, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    });
    SketchOp {
        n,
        s,
        kind: SketchKind::Gaussian(g),
    }
}

/// Subsampled randomized Hadamard transform. `n` is zero-padded to the
/// next power of two `m`; `s` distinct positions of `[m]` are kept with
/// weight `√(m/s)`.
pub fn srht_sketch(n: usize, s: usize, seed: u64) -> Result<SketchOp> {
    if n == 0 {
        return Err(Error::InvalidParameter("SRHT needs n >= 1".into()));
    }
    if s > n {
        return Err(Error::InvalidParameter(format!("SRHT needs s <= n, got s={s}, n={n}")));
    }
    let padded = n.next_power_of_two();
    let mut rng = seeded(seed);
    let signs: Vec<f64> = (0..padded)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut positions = index::sample(&mut rng, padded, s).into_vec();
    positions.sort_unstable();
    Ok(SketchOp {
        n,
        s,
        kind: SketchKind::Srht(Srht {
            padded,
            signs,
            positions,
        }),
    })
}

/// Count sketch: each of the `n` source rows goes to one of `s` buckets
/// with a random sign.
pub fn count_sketch(n: usize, s: usize, seed: u64) -> Result<SketchOp> {
    if s == 0 {
        return Err(Error::InvalidParameter("count sketch needs s >= 1".into()));
    }
    let mut rng = seeded(seed);
    let mut buckets = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for _ in 0..n {
        buckets.push(rng.random_range(0..s));
        signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    Ok(SketchOp {
        n,
        s,
        kind: SketchKind::CountSketch(CountSketch { buckets, signs }),
    })
}

/// Which sketch to draw for the fast model or fast CUR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchMethod {
    Uniform,
    Leverage,
    Gaussian,
    Srht,
    CountSketch,
}

impl SketchMethod {
    pub fn is_sampling(self) -> bool {
        matches!(self, SketchMethod::Uniform | SketchMethod::Leverage)
    }
}
