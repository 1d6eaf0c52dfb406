//! Sketch-size recipes. All formulas are the orders of growth with the
//! hidden constant set to one, rounded up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, DenseMatrix, Side};

/// Sketching family whose size recipe is requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum SizeRecipe {
    Leverage,
    /// Uniform sampling; the size is inflated by the row coherence.
    Uniform { coherence: f64 },
    Gaussian,
    Srht,
    CountSketch,
}

fn check_eps(eps: f64) -> Result<()> {
    // eps = 1 is admitted: it is the natural "order of" evaluation point.
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

fn check_coherence(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu >= 1.0) {
        return Err(Error::InvalidParameter(format!("coherence must be >= 1, got {mu}")));
    }
    Ok(())
}

// Rounds up, ignoring float noise just above an integer (4/0.05 = 80.000…01).
fn ceil_tol(x: f64) -> usize {
    ((x * (1.0 - 1e-12)).ceil().max(1.0)) as usize
}

fn ceil_capped(x: f64, cap: usize) -> usize {
    ceil_tol(x).min(cap)
}

/// Sketch size `s` for the fast SPSD model with `c` columns in C,
/// capped at `n`.
pub fn recommended_s(method: SizeRecipe, n: usize, c: usize, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    if c == 0 || c > n {
        return Err(Error::InvalidParameter(format!("need 1 <= c <= n, got c={c}, n={n}")));
    }
    let (nf, cf) = (n as f64, c as f64);
    let raw = match method {
        SizeRecipe::Leverage | SizeRecipe::CountSketch => cf * (nf / eps).sqrt(),
        SizeRecipe::Uniform { coherence } => {
            check_coherence(coherence)?;
            coherence * cf * (nf / eps).sqrt()
        }
        SizeRecipe::Gaussian => (nf / (cf * eps)).sqrt() * (cf + (nf / cf).ln()),
        SizeRecipe::Srht => (nf / (cf * eps)).sqrt() * (cf + nf.ln()) * nf.ln(),
    };
    Ok(ceil_capped(raw, n))
}

/// Sketch sizes `(s_c, s_r)` for fast CUR of an `m x n` matrix with `c`
/// columns and `r` rows. For uniform sampling `coherence` is μ(C) and
/// `row_coherence` is ν(R).
pub fn recommended_cur_s(
    method: SizeRecipe,
    m: usize,
    n: usize,
    c: usize,
    r: usize,
    eps: f64,
    row_coherence: Option<f64>,
) -> Result<(usize, usize)> {
    check_eps(eps)?;
    if c == 0 || r == 0 || c > n || r > m {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= c <= n and 1 <= r <= m, got c={c}, r={r}, m={m}, n={n}"
        )));
    }
    let (mf, nf, cf, rf) = (m as f64, n as f64, c as f64, r as f64);
    let q = mf.min(nf);
    let (sc, sr) = match method {
        SizeRecipe::Leverage | SizeRecipe::CountSketch => {
            (cf * (q / eps).sqrt(), rf * (q / eps).sqrt())
        }
        SizeRecipe::Uniform { coherence } => {
            check_coherence(coherence)?;
            let nu = row_coherence.unwrap_or(coherence);
            check_coherence(nu)?;
            (coherence * cf * (q / eps).sqrt(), nu * rf * (q / eps).sqrt())
        }
        SizeRecipe::Gaussian => (
            (mf / (cf * eps)).sqrt() * (cf + (nf / cf).ln()),
            (nf / (rf * eps)).sqrt() * (rf + (mf / rf).ln()),
        ),
        SizeRecipe::Srht => (
            (mf / (cf * eps)).sqrt() * (cf + (mf * nf / cf).ln()) * mf.ln(),
            (nf / (rf * eps)).sqrt() * (rf + (mf * nf / rf).ln()) * nf.ln(),
        ),
    };
    Ok((ceil_capped(sc, m), ceil_capped(sr, n)))
}

/// Row coherence `μ(C) = n/ρ · max_i ℓ_i`.
pub fn row_coherence(c: &DenseMatrix, rank_tol: f64) -> Result<f64> {
    let scores = leverage_scores(c, Side::Row, rank_tol)?;
    let rho: f64 = scores.iter().sum::<f64>().round().max(1.0);
    let max = scores.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(c.rows() as f64 / rho * max)
}

/// Sampling family for the subspace-embedding and product-preservation
/// sizes below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbeddingFamily {
    Leverage,
    Uniform { coherence: f64 },
    Gaussian,
    Srht { n: usize },
    CountSketch,
}

/// Size at which `‖UᵀSSᵀU − I_k‖₂ < η` holds with probability `1 − δ` for
/// an orthonormal `U` with `k` columns. The column-sampling sizes carry the
/// explicit matrix-Chernoff constant `(6 + 2η)/(3η²)`.
pub fn subspace_embedding_size(family: EmbeddingFamily, k: usize, eta: f64, delta: f64) -> usize {
    let (kf, eta2) = (k as f64, eta * eta);
    let chernoff = (6.0 + 2.0 * eta) / (3.0 * eta2) * (kf / delta).ln();
    let raw = match family {
        EmbeddingFamily::Leverage => kf * chernoff,
        EmbeddingFamily::Uniform { coherence } => coherence * kf * chernoff,
        EmbeddingFamily::Gaussian => (kf + (1.0 / delta).ln()) / eta2,
        EmbeddingFamily::Srht { n } => (kf + (n as f64).ln()) / eta2 * (kf / delta).ln(),
        EmbeddingFamily::CountSketch => kf * kf / (delta * eta2),
    };
    ceil_tol(raw)
}

/// Size at which `‖UᵀB − UᵀSSᵀB‖_F² < ε‖B‖_F²` holds with probability
/// `1 − δ`.
pub fn product_preservation_size(family: EmbeddingFamily, k: usize, eps: f64, delta: f64) -> usize {
    let kf = k as f64;
    let raw = match family {
        EmbeddingFamily::Leverage | EmbeddingFamily::Gaussian | EmbeddingFamily::CountSketch => {
            kf / (eps * delta)
        }
        EmbeddingFamily::Uniform { coherence } => coherence * kf / (eps * delta),
        EmbeddingFamily::Srht { n } => (kf + (n as f64).ln()) / (eps * delta),
    };
    ceil_tol(raw)
}
