//! Closed-form and brute-force reference computations.
//!
//! These are production code, not test helpers: the CLI exposes the
//! Gaussian closed forms, and the exhaustive variance sums are the
//! single source of truth the estimator matrix forms are validated
//! against. For zero-mean Gaussians and the kernel
//! `k(x,x') = exp(−‖x−x'‖²/(2λ²))`, the squared-MMD difference has the
//! determinant form
//!
//! ```text
//! MMD²(p,r) − MMD²(q,r) = λ^D ( |2Σ_p+λ²I|^{−1/2} − |2Σ_q+λ²I|^{−1/2}
//!                   − 2[ |Σ_p+Σ_r+λ²I|^{−1/2} − |Σ_q+Σ_r+λ²I|^{−1/2} ] ),
//! ```
//!
//! obtained by writing the kernel as a scaled Gaussian density and
//! convolving twice; the prefactor is λ^D = (λ²)^{D/2}, the kernel mass
//! (2πλ²)^{D/2} times the (2π)^{−D/2} of the final density product.
//! The squared KSD between zero-mean Gaussians is the inner product
//! `⟨(Σ_p⁻¹−Σ_r⁻¹)², M_{r,λ}⟩` with `M_{r,λ} = E[x₁x₂ᵀ k(x₁,x₂)]`, which
//! has no closed form and is estimated by Monte Carlo with a reported
//! standard error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, KernelSpec};
use crate::models::LdaModel;
use crate::stein::SteinGram;
use crate::util::csum;

/// A multivariate Gaussian given by mean and covariance.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(cov.len(), d));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        for i in 0..d {
            for j in 0..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "covariance must be symmetric to 1e-12".into(),
                    ));
                }
            }
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            chol,
        })
    }

    pub fn zero_mean(cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = cov.len();
        Self::new(vec![0.0; d], cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean.iter().all(|v| *v == 0.0)
    }

    /// One draw via the Cholesky factor.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let eps = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        &self.mean + self.chol.l() * eps
    }

    fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// log det(M) through a fresh Cholesky; errors if M is not positive
/// definite.
fn log_det_pd(m: DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Difference of squared MMDs, MMD²(p,r) − MMD²(q,r), for zero-mean
/// Gaussians under the kernel exp(−‖x−x'‖²/(2λ²)).
pub fn gaussian_mmd_sq_diff(
    p: &GaussianSpec,
    q: &GaussianSpec,
    r: &GaussianSpec,
    lambda: Bandwidth,
) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d || r.dim() != d {
        return Err(Error::DimensionMismatch(q.dim().max(r.dim()), d));
    }
    for g in [p, q, r] {
        if !g.is_zero_mean() {
            return Err(Error::InvalidParameter(
                "the determinant form holds for zero-mean Gaussians".into(),
            ));
        }
    }
    let l2 = lambda.lambda() * lambda.lambda();
    let eye = DMatrix::<f64>::identity(d, d);
    let d_ln_lambda = d as f64 * lambda.lambda().ln();
    let term =
        |m: DMatrix<f64>| -> Result<f64> { Ok((d_ln_lambda - 0.5 * log_det_pd(m)?).exp()) };
    let t_pp = term(p.cov() * 2.0 + &eye * l2)?;
    let t_qq = term(q.cov() * 2.0 + &eye * l2)?;
    let t_pr = term(p.cov() + r.cov() + &eye * l2)?;
    let t_qr = term(q.cov() + r.cov() + &eye * l2)?;
    Ok(t_pp - t_qq - 2.0 * (t_pr - t_qr))
}

/// Monte Carlo estimate (value, standard error) of the squared KSD
/// between zero-mean Gaussians p and r: `⟨(Σ_p⁻¹−Σ_r⁻¹)², M_{r,λ}⟩`
/// with M estimated from `mc_n` independent pairs x₁,x₂ ~ r.
pub fn gaussian_ksd_sq(
    p: &GaussianSpec,
    r: &GaussianSpec,
    kernel: &KernelSpec,
    mc_n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = p.dim();
    if r.dim() != d {
        return Err(Error::DimensionMismatch(r.dim(), d));
    }
    if !p.is_zero_mean() || !r.is_zero_mean() {
        return Err(Error::InvalidParameter(
            "score-difference form holds for zero-mean Gaussians".into(),
        ));
    }
    if mc_n < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: mc_n,
        });
    }
    let delta = p.precision() - r.precision();
    let delta_sq = &delta * &delta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(mc_n);
    let mut x1_buf = vec![0.0; d];
    let mut x2_buf = vec![0.0; d];
    for _ in 0..mc_n {
        let x1 = r.draw(&mut rng);
        let x2 = r.draw(&mut rng);
        x1_buf.copy_from_slice(x1.as_slice());
        x2_buf.copy_from_slice(x2.as_slice());
        let k = kernel.eval(&x1_buf, &x2_buf)?;
        // ⟨Δ², x₁x₂ᵀ⟩ k = x₁ᵀ Δ² x₂ · k
        let g = (x1.transpose() * &delta_sq * x2)[(0, 0)] * k;
        samples.push(g);
    }
    let mean = csum(samples.iter().copied()) / mc_n as f64;
    let var = csum(samples.iter().map(|g| (g - mean) * (g - mean))) / (mc_n as f64 - 1.0);
    Ok((mean, (var / mc_n as f64).sqrt()))
}

/// Exhaustive-sum estimator components for a gram of side n ≤ 12:
/// the combinatorial U-statistic sums and the full n³/n⁴ V-statistic
/// sums that the matrix forms must reproduce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteVarComponents {
    pub a_u: f64,
    pub b_u: f64,
    pub c_u: f64,
    pub a_v: f64,
    pub b_v: f64,
}

/// h_a(y₁,y₂,y₃) = (1/3)[h(1,2)h(1,3) + h(2,1)h(2,3) + h(3,1)h(3,2)].
fn h_a(h: &SteinGram, i: usize, j: usize, k: usize) -> f64 {
    (h.get(i, j) * h.get(i, k) + h.get(j, i) * h.get(j, k) + h.get(k, i) * h.get(k, j)) / 3.0
}

/// h_b over a quadruple: (1/3)[h(1,2)h(3,4) + h(1,3)h(2,4) + h(1,4)h(2,3)].
fn h_b(h: &SteinGram, i: usize, j: usize, k: usize, l: usize) -> f64 {
    (h.get(i, j) * h.get(k, l) + h.get(i, k) * h.get(j, l) + h.get(i, l) * h.get(j, k)) / 3.0
}

pub fn brute_var_components(gram: &SteinGram) -> Result<BruteVarComponents> {
    let n = gram.n();
    if n > 12 {
        return Err(Error::StateSpaceTooLarge {
            states: n as u64,
            limit: 12,
        });
    }
    if n < 4 {
        return Err(Error::TooFewSamples { required: 4, got: n });
    }
    let nf = n as f64;

    let mut a_u = 0.0;
    let mut triples = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                a_u += h_a(gram, i, j, k);
                triples += 1.0;
            }
        }
    }
    a_u /= triples;

    let mut b_u = 0.0;
    let mut quads = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                for l in (k + 1)..n {
                    b_u += h_b(gram, i, j, k, l);
                    quads += 1.0;
                }
            }
        }
    }
    b_u /= quads;

    let mut c_u = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c_u += gram.get(i, j) * gram.get(i, j);
            }
        }
    }
    c_u /= nf * (nf - 1.0);

    let mut a_v = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                a_v += h_a(gram, i, j, k);
            }
        }
    }
    a_v /= nf.powi(3);

    let mut b_v = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    b_v += h_b(gram, i, j, k, l);
                }
            }
        }
    }
    b_v /= nf.powi(4);

    Ok(BruteVarComponents {
        a_u,
        b_u,
        c_u,
        a_v,
        b_v,
    })
}

/// Exact posterior over all K^D topic-assignment vectors of one
/// document: p(z|x) ∝ Π_j b[z_j, x_j] · DirMult(z; a), normalized by
/// full enumeration in log space. States are indexed with z_1 as the
/// least significant digit base K.
pub fn enumerate_lda_posterior(model: &LdaModel, x: &[f64]) -> Result<Vec<f64>> {
    let k = model.k_topics();
    let d = x.len();
    let states = (k as u64).checked_pow(d as u32).unwrap_or(u64::MAX);
    if states > 4096 {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: 4096,
        });
    }
    let words: Vec<usize> = x.iter().map(|w| *w as usize).collect();
    let a = model.concentration();
    let a_total: f64 = a.iter().sum();
    let b = model.topics();
    // Dirichlet-multinomial prior: log p(z) = lnΓ(Σa) − lnΓ(Σa + D)
    //   + Σ_k [lnΓ(a_k + c_k) − lnΓ(a_k)]
    let prior_const = ln_gamma(a_total) - ln_gamma(a_total + d as f64);
    let mut log_probs = Vec::with_capacity(states as usize);
    let mut z = vec![0usize; d];
    for state in 0..states {
        let mut rem = state;
        let mut counts = vec![0usize; k];
        for slot in z.iter_mut() {
            *slot = (rem % k as u64) as usize;
            rem /= k as u64;
            counts[*slot] += 1;
        }
        let mut lp = prior_const;
        for kk in 0..k {
            lp += ln_gamma(a[kk] + counts[kk] as f64) - ln_gamma(a[kk]);
        }
        for (j, &w) in words.iter().enumerate() {
            lp += b[[z[j], w]].ln();
        }
        log_probs.push(lp);
    }
    let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_probs.iter().map(|lp| (lp - max).exp()).collect();
    let total: f64 = csum(probs.iter().copied());
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}
