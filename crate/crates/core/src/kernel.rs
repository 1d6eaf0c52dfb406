//! Gaussian RBF kernels `exp(−‖x − y‖²/(2σ²))` evaluated on demand, and
//! calibration of σ through the spectral-mass statistic η.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{singular_values, sym_eigenvalues, DenseMatrix};
use crate::source::{check_indices, EntryCounter, EntrySource, SymmetricSource};

/// Row block size for full-kernel evaluation.
pub const FULL_BLOCK_ROWS: usize = 256;

/// `n` points in `d` dimensions, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: DenseMatrix,
    labels: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(points: DenseMatrix, labels: Option<Vec<f64>>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one point".into()));
        }
        points.ensure_finite()?;
        if let Some(l) = &labels {
            if l.len() != points.rows() {
                return Err(Error::DimensionMismatch {
                    op: "dataset labels",
                    expected: points.rows(),
                    got: l.len(),
                });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn d(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &DenseMatrix {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    /// The points at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        check_indices(idx, self.n())?;
        Ok(Self {
            points: self.points.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        })
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rbf(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp()
}

/// RBF kernel matrix over a dataset, evaluated lazily. Clones share the
/// dataset and the entry counter.
#[derive(Debug, Clone)]
pub struct KernelSource {
    data: Arc<Dataset>,
    sigma: f64,
    counter: Arc<EntryCounter>,
}

impl KernelSource {
    pub fn new(data: Arc<Dataset>, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            data,
            sigma,
            counter: Arc::new(EntryCounter::default()),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn entries(&self) -> u64 {
        self.counter.get()
    }

    pub fn reset_entries(&self) {
        self.counter.reset();
    }

    /// Kernel vector `k(x)_i = exp(−‖x − x_i‖²/(2σ²))` against every point.
    pub fn kernel_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.data.d() {
            return Err(Error::DimensionMismatch {
                op: "kernel vector",
                expected: self.data.d(),
                got: x.len(),
            });
        }
        self.counter.add(self.data.n());
        Ok((0..self.data.n())
            .map(|i| rbf(x, self.data.point(i), self.sigma))
            .collect())
    }
}

impl SymmetricSource for KernelSource {}

impl EntrySource for KernelSource {
    fn shape(&self) -> (usize, usize) {
        (self.data.n(), self.data.n())
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
        rbf_block(self, rows, cols)
    }

    fn full(&self) -> Result<DenseMatrix> {
        let n = self.data.n();
        let mut out = DenseMatrix::zeros(n, n);
        let gamma = 1.0 / (2.0 * self.sigma * self.sigma);
        out.as_mut_slice()
            .par_chunks_mut(FULL_BLOCK_ROWS * n)
            .enumerate()
            .for_each(|(b, chunk)| {
                for (r, row) in chunk.chunks_mut(n).enumerate() {
                    let x = self.data.point(b * FULL_BLOCK_ROWS + r);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (-gamma * sq_dist(x, self.data.point(j))).exp();
                    }
                }
            });
        self.counter.add(n * n);
        Ok(out)
    }
}

/// `K[rows, cols]` for the RBF kernel of `src`.
pub fn rbf_block(src: &KernelSource, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
    let n = src.data.n();
    check_indices(rows, n)?;
    check_indices(cols, n)?;
    let width = cols.len();
    let mut out = DenseMatrix::zeros(rows.len(), width);
    if width == 0 {
        return Ok(out);
    }
    let gamma = 1.0 / (2.0 * src.sigma * src.sigma);
    out.as_mut_slice()
        .par_chunks_mut(width)
        .zip(rows.par_iter())
        .for_each(|(row, &i)| {
            let x = src.data.point(i);
            for (v, &j) in row.iter_mut().zip(cols) {
                *v = (-gamma * sq_dist(x, src.data.point(j))).exp();
            }
        });
    src.counter.add(rows.len() * width);
    Ok(out)
}

/// Share of squared spectral mass in the top `k` singular values,
/// `Σ_{i≤k} σ_i² / ‖K‖_F²`.
pub fn eta(k_mat: &DenseMatrix, k: usize) -> Result<f64> {
    let n = k_mat.rows().min(k_mat.cols());
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let total = k_mat.frobenius_norm_sq();
    if total == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut sv: Vec<f64> = if k_mat.is_square() && k_mat.ensure_symmetric().is_ok() {
        sym_eigenvalues(k_mat)?.into_iter().map(f64::abs).collect()
    } else {
        singular_values(k_mat)?
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = sv[..k].iter().map(|s| s * s).sum();
    Ok((top / total).min(1.0))
}

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 1e6;
const GRID_POINTS: usize = 64;
const MAX_BISECTIONS: usize = 200;

/// Finds σ with `|η(K(σ), k) − target| ≤ tol` by bisection on `ln σ` over
/// `[SIGMA_MIN, SIGMA_MAX]`. If η turns out non-monotone inside the
/// bracket, a 64-point log-spaced scan locates a fresh bracket.
pub fn calibrate_sigma(data: &Arc<Dataset>, k: usize, target: f64, tol: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("eta target must lie in (0, 1), got {target}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if k == 0 || k > data.n() {
        return Err(Error::RankOutOfRange { k, max: data.n() });
    }
    let eval = |log_sigma: f64| -> Result<f64> {
        let src = KernelSource::new(Arc::clone(data), log_sigma.exp())?;
        eta(&src.full()?, k)
    };
    let no_bracket = Error::NoBracket {
        lo: SIGMA_MIN,
        hi: SIGMA_MAX,
        target,
    };

    let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    let (mut eta_lo, mut eta_hi) = (eval(lo)?, eval(hi)?);
    for (x, e) in [(lo, eta_lo), (hi, eta_hi)] {
        if (e - target).abs() <= tol {
            return Ok(x.exp());
        }
    }
    if !(eta_lo < target && target < eta_hi) {
        (lo, hi, eta_lo, eta_hi) = grid_bracket(&eval, target, tol)?.ok_or(no_bracket.clone())?;
        if (eta_lo - target).abs() <= tol {
            return Ok(lo.exp());
        }
    }
    let mut rescanned = false;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let e = eval(mid)?;
        if (e - target).abs() <= tol {
            return Ok(mid.exp());
        }
        if e < eta_lo || e > eta_hi {
            if rescanned {
                return Err(no_bracket);
            }
            rescanned = true;
            (lo, hi, eta_lo, eta_hi) = grid_bracket(&eval, target, tol)?.ok_or(no_bracket.clone())?;
            if (eta_lo - target).abs() <= tol {
                return Ok(lo.exp());
            }
            continue;
        }
        if e < target {
            (lo, eta_lo) = (mid, e);
        } else {
            (hi, eta_hi) = (mid, e);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Err(Error::NoConvergence)
}

type Bracket = (f64, f64, f64, f64);

fn grid_bracket(
    eval: &impl Fn(f64) -> Result<f64>,
    target: f64,
    tol: f64,
) -> Result<Option<Bracket>> {
    let (a, b) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    let step = (b - a) / (GRID_POINTS - 1) as f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..GRID_POINTS {
        let x = a + step * i as f64;
        let e = eval(x)?;
        if (e - target).abs() <= tol {
            return Ok(Some((x, x, e, e)));
        }
        if let Some((px, pe)) = prev {
            if pe < target && target < e {
                return Ok(Some((px, x, pe, e)));
            }
        }
        prev = Some((x, e));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::source::EntrySource;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Arc<Dataset> {
        let mut rng = seeded(seed);
        let pts = DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        Arc::new(Dataset::new(pts, None).unwrap())
    }

    #[test]
    fn identical_points_give_all_ones() {
        let pts = DenseMatrix::filled(4, 3, 0.7);
        let src = KernelSource::new(Arc::new(Dataset::new(pts, None).unwrap()), 0.3).unwrap();
        let k = src.full().unwrap();
        assert!(k.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn distance_two_sigma_squared_gives_inverse_e() {
        let sigma: f64 = 1.5;
        let pts = DenseMatrix::from_rows(&[[0.0, 0.0], [sigma * 2f64.sqrt(), 0.0]]).unwrap();
        let src = KernelSource::new(Arc::new(Dataset::new(pts, None).unwrap()), sigma).unwrap();
        let b = src.block(&[0], &[1]).unwrap();
        assert!((b[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn block_matches_scalar_loop() {
        let data = random_dataset(5, 3, 1);
        let src = KernelSource::new(Arc::clone(&data), 0.8).unwrap();
        let k = src.full().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut d2 = 0.0;
                for t in 0..3 {
                    let diff = data.point(i)[t] - data.point(j)[t];
                    d2 += diff * diff;
                }
                let expected = (-d2 / (2.0 * 0.8 * 0.8)).exp();
                assert!((k[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn self_block_properties_and_counting() {
        let data = random_dataset(300, 4, 2);
        let src = KernelSource::new(data, 1.1).unwrap();
        let k = src.full().unwrap();
        assert_eq!(src.entries(), 90_000);
        assert_eq!(k.asymmetry(), 0.0);
        assert!(k.diagonal().iter().all(|&v| v == 1.0));
        assert!(k.as_slice().iter().all(|&v| v > 0.0 && v <= 1.0));
        let rows = [3, 299, 17];
        let cols = [0, 5];
        let a = src.block(&rows, &cols).unwrap();
        let b = src.block(&cols, &rows).unwrap();
        assert_eq!(a, b.transpose());
        assert_eq!(a, k.select_rows(&rows).select_cols(&cols));
        assert_eq!(src.entries(), 90_012);
        assert!(src.block(&[300], &[0]).is_err());
    }

    #[test]
    fn eta_examples() {
        let d = DenseMatrix::from_diagonal(&[2.0, 1.0, 1.0]);
        assert!((eta(&d, 1).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let v = [1.0, 2.0, -1.0, 0.5];
        let rank1 = DenseMatrix::from_fn(4, 4, |i, j| v[i] * v[j]);
        assert!((eta(&rank1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(eta(&DenseMatrix::zeros(3, 3), 1).unwrap_err(), Error::ZeroMatrix);
    }

    #[test]
    fn eta_matches_svd_and_grows_with_k() {
        let mut rng = seeded(4);
        let g = DenseMatrix::from_fn(50, 50, |_, _| rng.sample(StandardNormal));
        let k = g.matmul_tr(&g);
        let sv = singular_values(&k).unwrap();
        let total: f64 = sv.iter().map(|s| s * s).sum();
        let expected: f64 = sv[..5].iter().map(|s| s * s).sum::<f64>() / total;
        assert!((eta(&k, 5).unwrap() - expected).abs() < 1e-12);
        let mut prev = 0.0;
        for kk in 1..=50 {
            let e = eta(&k, kk).unwrap();
            assert!(e >= prev - 1e-15);
            prev = e;
        }
    }

    #[test]
    fn calibration_hits_target() {
        let data = random_dataset(120, 3, 5);
        let sigma = calibrate_sigma(&data, 2, 0.9, 1e-3).unwrap();
        let src = KernelSource::new(Arc::clone(&data), sigma).unwrap();
        let e = eta(&src.full().unwrap(), 2).unwrap();
        assert!((e - 0.9).abs() <= 1e-3);

        // near-one targets need a wide kernel
        let wide = calibrate_sigma(&data, 2, 0.999, 1e-4).unwrap();
        assert!(wide > sigma);
    }

    #[test]
    fn unreachable_target_reports_no_bracket() {
        // two points: η(k=2) = 1 for every σ
        let data = random_dataset(2, 2, 6);
        assert!(calibrate_sigma(&data, 2, 0.5, 1e-3).is_err());
    }
}
