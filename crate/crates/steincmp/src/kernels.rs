//! Positive-definite kernels on continuous and discrete domains.
//!
//! Besides plain evaluation, each kernel exposes the derivative-like
//! quantities the Stein kernel needs: the first-argument gradient `k₁`
//! and the mixed-derivative trace `tr[k₁₂]` for continuous kernels, and
//! their cyclic backward-difference counterparts for discrete kernels
//! (`Δ⁻¹` applied per coordinate, indices wrapping mod L).
//!
//! Continuous variants:
//!
//! ```text
//! GaussianSq:   k(x,x') = exp(−‖x−x'‖² / λ²)
//! GaussianHalf: k(x,x') = exp(−‖x−x'‖² / (2λ²))
//! ```
//!
//! Discrete variants on `{0,…,L−1}^D`:
//!
//! ```text
//! ExpHamming:   k(x,x') = exp(−d_H(x,x')),  d_H = D⁻¹ Σ_d 1[x^d ≠ x'^d]
//! BoWGaussian:  k(x,x') = exp(−‖B(x)−B(x')‖² / (2D)),  B = word counts
//! ```
//!
//! The BoWGaussian divisor is fixed at 2D (no tunable bandwidth).

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::util::median_in_place;
use serde::{Deserialize, Serialize};

/// Length-scale of a Gaussian kernel; construction rejects λ ≤ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self(lambda))
        } else {
            Err(Error::InvalidBandwidth(lambda))
        }
    }

    pub fn lambda(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Bandwidth::new(v)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.0
    }
}

/// Kernel family plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    GaussianSq { bandwidth: Bandwidth },
    GaussianHalf { bandwidth: Bandwidth },
    BowGaussian { vocab_size: u32 },
    ExpHamming { vocab_size: u32 },
}

impl KernelSpec {
    pub fn domain(&self) -> Domain {
        match *self {
            KernelSpec::GaussianSq { .. } | KernelSpec::GaussianHalf { .. } => Domain::Continuous,
            KernelSpec::BowGaussian { vocab_size } | KernelSpec::ExpHamming { vocab_size } => {
                Domain::Discrete { vocab_size }
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.domain(), Domain::Discrete { .. })
    }

    /// Squared-exponential decay coefficient: k = exp(−c/2 · r²) has
    /// c = 2/λ² for GaussianSq and 1/λ² for GaussianHalf.
    fn gauss_coef(&self) -> Result<f64> {
        match *self {
            KernelSpec::GaussianSq { bandwidth } => {
                Ok(2.0 / (bandwidth.lambda() * bandwidth.lambda()))
            }
            KernelSpec::GaussianHalf { bandwidth } => {
                Ok(1.0 / (bandwidth.lambda() * bandwidth.lambda()))
            }
            _ => Err(Error::KernelNotContinuous),
        }
    }

    fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(x.len(), y.len()));
        }
        Ok(())
    }

    fn check_symbols(&self, point: &[f64]) -> Result<()> {
        if let Domain::Discrete { vocab_size } = self.domain() {
            for (coord, &v) in point.iter().enumerate() {
                if v.fract() != 0.0 || v < 0.0 || v >= vocab_size as f64 {
                    return Err(Error::OutOfRangeSymbol {
                        value: v,
                        coord,
                        vocab: vocab_size,
                    });
                }
            }
        }
        Ok(())
    }

    /// Evaluate k(x, y).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Self::check_dims(x, y)?;
        self.check_symbols(x)?;
        self.check_symbols(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::GaussianSq { .. } | KernelSpec::GaussianHalf { .. } => {
                let c = self.gauss_coef().expect("continuous");
                let r2 = sq_dist(x, y);
                (-0.5 * c * r2).exp()
            }
            KernelSpec::ExpHamming { .. } => {
                let d = x.len() as f64;
                let mismatches = x.iter().zip(y).filter(|(a, b)| a != b).count() as f64;
                (-mismatches / d).exp()
            }
            KernelSpec::BowGaussian { vocab_size } => {
                let bx = bow_counts(x, vocab_size);
                let by = bow_counts(y, vocab_size);
                let r2 = sq_dist(&bx, &by);
                (-r2 / (2.0 * x.len() as f64)).exp()
            }
        }
    }

    /// ∇_x k(x, x') evaluated at (x, y). Continuous variants only.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Self::check_dims(x, y)?;
        let c = self.gauss_coef()?;
        let r2 = sq_dist(x, y);
        let k = (-0.5 * c * r2).exp();
        Ok(x.iter().zip(y).map(|(xi, yi)| -c * (xi - yi) * k).collect())
    }

    /// tr[∇_x ∇_{x'}ᵀ k] evaluated at (x, y). Continuous variants only.
    pub fn trace12(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Self::check_dims(x, y)?;
        let c = self.gauss_coef()?;
        let d = x.len() as f64;
        let r2 = sq_dist(x, y);
        let k = (-0.5 * c * r2).exp();
        Ok((c * d - c * c * r2) * k)
    }

    /// Backward cyclic difference of k in its first argument:
    /// component d is `k(x,y) − k(x̄_d, y)` with `x̄_d` decrementing
    /// coordinate d mod L. Discrete variants only.
    pub fn diff_back_1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Self::check_dims(x, y)?;
        self.check_symbols(x)?;
        self.check_symbols(y)?;
        let vocab = match self.domain() {
            Domain::Discrete { vocab_size } => vocab_size,
            Domain::Continuous => return Err(Error::KernelNotDiscrete),
        };
        let k_xy = self.eval_unchecked(x, y);
        let mut xm = x.to_vec();
        let out = (0..x.len())
            .map(|d| {
                let orig = xm[d];
                xm[d] = dec_mod(orig, vocab);
                let k_dec = self.eval_unchecked(&xm, y);
                xm[d] = orig;
                k_xy - k_dec
            })
            .collect();
        Ok(out)
    }

    /// Backward-difference analogue of tr[k₁₂]:
    /// `Σ_d [k(x,y) − k(x̄_d,y) − k(x,ȳ_d) + k(x̄_d,ȳ_d)]`.
    pub fn trace12_discrete(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Self::check_dims(x, y)?;
        self.check_symbols(x)?;
        self.check_symbols(y)?;
        let vocab = match self.domain() {
            Domain::Discrete { vocab_size } => vocab_size,
            Domain::Continuous => return Err(Error::KernelNotDiscrete),
        };
        let k_xy = self.eval_unchecked(x, y);
        let mut xm = x.to_vec();
        let mut ym = y.to_vec();
        let mut total = 0.0;
        for d in 0..x.len() {
            let (ox, oy) = (xm[d], ym[d]);
            xm[d] = dec_mod(ox, vocab);
            let k_xd = self.eval_unchecked(&xm, y);
            ym[d] = dec_mod(oy, vocab);
            let k_xdyd = self.eval_unchecked(&xm, &ym);
            xm[d] = ox;
            let k_yd = self.eval_unchecked(x, &ym);
            ym[d] = oy;
            total += k_xy - k_xd - k_yd + k_xdyd;
        }
        Ok(total)
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

#[inline]
fn dec_mod(v: f64, vocab: u32) -> f64 {
    if v == 0.0 {
        (vocab - 1) as f64
    } else {
        v - 1.0
    }
}

/// Bag-of-words count vector over the vocabulary.
pub fn bow_counts(doc: &[f64], vocab_size: u32) -> Vec<f64> {
    let mut counts = vec![0.0; vocab_size as usize];
    for &w in doc {
        counts[w as usize] += 1.0;
    }
    counts
}

/// Median-heuristic bandwidth: λ = median of the n(n−1)/2 pairwise
/// Euclidean distances. Discrete data is measured in its bag-of-words
/// representation.
pub fn median_heuristic(data: &Dataset) -> Result<Bandwidth> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: n,
        });
    }
    let rows: Vec<Vec<f64>> = match data.domain() {
        Domain::Continuous => (0..n).map(|i| data.row(i).to_vec()).collect(),
        Domain::Discrete { vocab_size } => {
            (0..n).map(|i| bow_counts(data.row(i), vocab_size)).collect()
        }
    };
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(&rows[i], &rows[j]).sqrt());
        }
    }
    let med = median_in_place(&mut dists);
    if med <= 0.0 {
        return Err(Error::ZeroMedian);
    }
    Bandwidth::new(med)
}

// --------------------------------------------------------------------------
// Per-pair Stein terms. Gram assembly is O(n²) and calls these instead of
// the public single-purpose operations; the math is identical (tested
// against term-by-term recomputation) but evaluated in one pass without
// re-deriving shared subexpressions like ‖x−y‖² or the BoW count delta.
// --------------------------------------------------------------------------

/// All kernel-side ingredients of one Stein-gram entry:
/// `k(x_i,x_j)`, `s_iᵀk₁(x_j,x_i)`, `k₁(x_i,x_j)ᵀs_j`, `tr[k₁₂(x_i,x_j)]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SteinTerms {
    pub k: f64,
    pub si_dot_k1_ji: f64,
    pub k1_ij_dot_sj: f64,
    pub trace: f64,
}

impl KernelSpec {
    pub(crate) fn stein_terms_continuous(
        &self,
        xi: &[f64],
        xj: &[f64],
        si: &[f64],
        sj: &[f64],
    ) -> SteinTerms {
        let c = self.gauss_coef().expect("continuous kernel");
        let mut r2 = 0.0;
        let mut si_diff = 0.0;
        let mut sj_diff = 0.0;
        for d in 0..xi.len() {
            let diff = xi[d] - xj[d];
            r2 += diff * diff;
            si_diff += si[d] * diff;
            sj_diff += sj[d] * diff;
        }
        let k = (-0.5 * c * r2).exp();
        // k₁(x_j, x_i) = −c (x_j − x_i) k = c (x_i − x_j) k
        SteinTerms {
            k,
            si_dot_k1_ji: c * k * si_diff,
            k1_ij_dot_sj: -c * k * sj_diff,
            trace: (c * xi.len() as f64 - c * c * r2) * k,
        }
    }

    /// Discrete counterpart. `bow_i`/`bow_j` carry precomputed count
    /// vectors for the BoWGaussian variant (ignored by ExpHamming).
    pub(crate) fn stein_terms_discrete(
        &self,
        xi: &[f64],
        xj: &[f64],
        si: &[f64],
        sj: &[f64],
        bow_i: Option<&[f64]>,
        bow_j: Option<&[f64]>,
    ) -> SteinTerms {
        match *self {
            KernelSpec::ExpHamming { vocab_size } => {
                exp_hamming_terms(xi, xj, si, sj, vocab_size)
            }
            KernelSpec::BowGaussian { vocab_size } => {
                let bi = bow_i.expect("bow counts for i");
                let bj = bow_j.expect("bow counts for j");
                bow_terms(xi, xj, si, sj, bi, bj, vocab_size)
            }
            _ => unreachable!("continuous kernel in discrete path"),
        }
    }
}

fn exp_hamming_terms(xi: &[f64], xj: &[f64], si: &[f64], sj: &[f64], vocab: u32) -> SteinTerms {
    let dim = xi.len() as f64;
    let mismatches = xi.iter().zip(xj).filter(|(a, b)| a != b).count() as f64;
    let k = (-mismatches / dim).exp();
    // Changing one coordinate moves d_H by −1/D, 0, or +1/D.
    let up = (-1.0 / dim).exp();
    let down = (1.0 / dim).exp();
    let mult = |before: bool, after: bool| -> f64 {
        match (before, after) {
            (true, false) => down, // mismatch resolved: d_H decreases
            (false, true) => up,
            _ => 1.0,
        }
    };
    let mut si_dot = 0.0;
    let mut sj_dot = 0.0;
    let mut trace = 0.0;
    for d in 0..xi.len() {
        let neq = xi[d] != xj[d];
        let xid = dec_mod(xi[d], vocab);
        let xjd = dec_mod(xj[d], vocab);
        let k_xi_dec = k * mult(neq, xid != xj[d]);
        let k_xj_dec = k * mult(neq, xi[d] != xjd);
        let k_both = k * mult(neq, xid != xjd);
        // k₁(x_j,x_i)_d = k − k(x̄j_d, x_i); k₁(x_i,x_j)_d = k − k(x̄i_d, x_j)
        si_dot += si[d] * (k - k_xj_dec);
        sj_dot += sj[d] * (k - k_xi_dec);
        trace += k - k_xi_dec - k_xj_dec + k_both;
    }
    SteinTerms {
        k,
        si_dot_k1_ji: si_dot,
        k1_ij_dot_sj: sj_dot,
        trace,
    }
}

fn bow_terms(
    xi: &[f64],
    xj: &[f64],
    si: &[f64],
    sj: &[f64],
    bow_i: &[f64],
    bow_j: &[f64],
    vocab: u32,
) -> SteinTerms {
    let dim = xi.len() as f64;
    let inv2d = 1.0 / (2.0 * dim);
    // v = B(x_i) − B(x_j); decrementing word w of x_i shifts v at two
    // vocabulary slots, changing ‖v‖² by an O(1)-computable delta.
    let v: Vec<f64> = bow_i.iter().zip(bow_j).map(|(a, b)| a - b).collect();
    let r2: f64 = v.iter().map(|d| d * d).sum();
    let k = (-r2 * inv2d).exp();
    // ‖v‖² delta when v[w1] ← v[w1]−1 and v[w2] ← v[w2]+1 (w1 ≠ w2).
    let delta_shift = |v1: f64, v2: f64| (-2.0 * v1 + 1.0) + (2.0 * v2 + 1.0);
    let mut si_dot = 0.0;
    let mut sj_dot = 0.0;
    let mut trace = 0.0;
    for d in 0..xi.len() {
        let wi = xi[d] as usize;
        let wi_dec = dec_mod(xi[d], vocab) as usize;
        let wj = xj[d] as usize;
        let wj_dec = dec_mod(xj[d], vocab) as usize;
        // decrement word d of x_i: count moves from wi to wi_dec
        let d_i = delta_shift(v[wi], v[wi_dec]);
        // decrement word d of x_j: B(x_j) count moves wj → wj_dec, so v
        // gains 1 at wj and loses 1 at wj_dec.
        let d_j = delta_shift(-v[wj], -v[wj_dec]);
        // both decrements: apply the x_i shift, then the x_j shift on the
        // shifted v (slots may coincide).
        let v_at = |w: usize| -> f64 {
            let mut val = v[w];
            if w == wi {
                val -= 1.0;
            }
            if w == wi_dec {
                val += 1.0;
            }
            val
        };
        let d_both = d_i + delta_shift(-v_at(wj), -v_at(wj_dec));
        let k_xi_dec = k * (-d_i * inv2d).exp();
        let k_xj_dec = k * (-d_j * inv2d).exp();
        let k_both = k * (-d_both * inv2d).exp();
        si_dot += si[d] * (k - k_xj_dec);
        sj_dot += sj[d] * (k - k_xi_dec);
        trace += k - k_xi_dec - k_xj_dec + k_both;
    }
    SteinTerms {
        k,
        si_dot_k1_ji: si_dot,
        k1_ij_dot_sj: sj_dot,
        trace,
    }
}
