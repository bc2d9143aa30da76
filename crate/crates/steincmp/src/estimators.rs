//! The KSD U-statistic and asymptotic-variance estimators.
//!
//! The discrepancy estimate is the mean over off-diagonal gram entries,
//!
//! ```text
//! U_n = 1/(n(n−1)) Σ_{i≠j} H[i,j].
//! ```
//!
//! Two estimators of the asymptotic variance of √n·U_n are provided in
//! their matrix forms. With H̄ the gram with zeroed diagonal:
//!
//! ```text
//! Â  = (‖H̄1‖² − ‖H̄‖_F²) / (n(n−1)(n−2))
//! B̂  = ((1ᵀH̄1)² − 4‖H̄1‖² + 2‖H̄‖_F²) / (n(n−1)(n−2)(n−3))
//! Ĉ  = ‖H̄‖_F² / (n(n−1))
//! σ²_U = 4(n−2)/(n−1)·(Â−B̂) + 2/(n−1)·(Ĉ−B̂)
//! ```
//!
//! and with the full H including its diagonal:
//!
//! ```text
//! Â_V = ‖H1‖²/n³,  B̂_V = (1ᵀH1)²/n⁴,  σ²_V = 4(n−2)/(n−1)·(Â_V−B̂_V).
//! ```
//!
//! σ²_V is nonnegative by Cauchy–Schwarz; σ²_U can go negative when the
//! difference kernel degenerates, in which case it is reported as-is and
//! flagged downstream rather than clamped here.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::stein::{exact_scores, stein_gram, SteinGram};
use crate::util::{csum, CompensatedSum};

/// U-statistic estimate of a squared kernel Stein discrepancy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsdEstimate {
    pub u_stat: f64,
    pub n: usize,
}

/// Which asymptotic-variance estimator to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    UStat,
    VStat,
}

/// Intermediate estimator components, kept for diagnostics and tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarComponents {
    pub a_hat: f64,
    pub b_hat: f64,
    /// Only the U-statistic estimator has a second-order term.
    pub c_hat: Option<f64>,
}

/// Estimated asymptotic variance of √n·U_n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma_sq: f64,
    pub method: VarianceMethod,
    pub components: VarComponents,
}

/// Mean of the off-diagonal gram entries.
pub fn ksd_ustat(gram: &SteinGram) -> Result<KsdEstimate> {
    let n = gram.n();
    if n < 2 {
        return Err(Error::TooFewSamples { required: 2, got: n });
    }
    let h = gram.matrix();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc.add(h[[i, j]]);
            }
        }
    }
    Ok(KsdEstimate {
        u_stat: acc.value() / (n * (n - 1)) as f64,
        n,
    })
}

/// Row sums, total sum, and squared Frobenius norm of a matrix view,
/// each compensated.
fn gram_reductions(gram: &SteinGram, zero_diag: bool) -> (Vec<f64>, f64, f64) {
    let n = gram.n();
    let h = gram.matrix();
    let mut row_sums = Vec::with_capacity(n);
    let mut frob = CompensatedSum::new();
    for i in 0..n {
        let mut row = CompensatedSum::new();
        for j in 0..n {
            if zero_diag && i == j {
                continue;
            }
            let v = h[[i, j]];
            row.add(v);
            frob.add(v * v);
        }
        row_sums.push(row.value());
    }
    let total = csum(row_sums.iter().copied());
    (row_sums, total, frob.value())
}

/// U-statistic estimator of the asymptotic variance (needs n ≥ 4;
/// zeroes the diagonal internally).
pub fn var_ustat(gram: &SteinGram) -> Result<VarianceEstimate> {
    let n = gram.n();
    if n < 4 {
        return Err(Error::TooFewSamples { required: 4, got: n });
    }
    let nf = n as f64;
    let (row_sums, total, frob_sq) = gram_reductions(gram, true);
    let row_norm_sq = csum(row_sums.iter().map(|r| r * r));
    let a_hat = (row_norm_sq - frob_sq) / (nf * (nf - 1.0) * (nf - 2.0));
    let b_hat = (total * total - 4.0 * row_norm_sq + 2.0 * frob_sq)
        / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0));
    let c_hat = frob_sq / (nf * (nf - 1.0));
    let sigma_sq =
        4.0 * (nf - 2.0) / (nf - 1.0) * (a_hat - b_hat) + 2.0 / (nf - 1.0) * (c_hat - b_hat);
    Ok(VarianceEstimate {
        sigma_sq,
        method: VarianceMethod::UStat,
        components: VarComponents {
            a_hat,
            b_hat,
            c_hat: Some(c_hat),
        },
    })
}

/// V-statistic estimator of the asymptotic variance (needs the gram
/// diagonal; nonnegative by construction).
pub fn var_vstat(gram: &SteinGram) -> Result<VarianceEstimate> {
    let n = gram.n();
    if n < 2 {
        return Err(Error::TooFewSamples { required: 2, got: n });
    }
    if !gram.diag_valid() {
        return Err(Error::DiagonalInvalid);
    }
    let nf = n as f64;
    let (row_sums, total, _) = gram_reductions(gram, false);
    let row_norm_sq = csum(row_sums.iter().map(|r| r * r));
    let a_hat = row_norm_sq / nf.powi(3);
    let b_hat = (total * total) / nf.powi(4);
    // Â_V − B̂_V = n⁻³ Σ_i (r_i − r̄)², evaluated as a sum of squares so
    // the estimate cannot go negative through cancellation.
    let mean_row = total / nf;
    let centered = csum(row_sums.iter().map(|r| {
        let d = r - mean_row;
        d * d
    }));
    let sigma_sq = 4.0 * (nf - 2.0) / (nf - 1.0) * centered / nf.powi(3);
    Ok(VarianceEstimate {
        sigma_sq,
        method: VarianceMethod::VStat,
        components: VarComponents {
            a_hat,
            b_hat,
            c_hat: None,
        },
    })
}

/// KSD U-statistic from a closed-form marginal score: the same pipeline
/// with the score matrix set to exact marginal scores.
pub fn ksd_exact<F>(score_fn: F, data: &Dataset, kernel: &KernelSpec) -> Result<KsdEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let scores = exact_scores(score_fn, data)?;
    let gram = stein_gram(&scores, data, kernel)?;
    ksd_ustat(&gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_sym(n: usize, seed: u64) -> SteinGram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        SteinGram::from_matrix(m, true).unwrap()
    }

    fn const_offdiag(n: usize, c: f64, diag: f64) -> SteinGram {
        let mut m = Array2::<f64>::from_elem((n, n), c);
        for i in 0..n {
            m[[i, i]] = diag;
        }
        SteinGram::from_matrix(m, true).unwrap()
    }

    #[test]
    fn ksd_ustat_constant_and_pair() {
        let g = const_offdiag(5, 0.3, 9.0);
        assert_abs_diff_eq!(ksd_ustat(&g).unwrap().u_stat, 0.3, epsilon = 1e-14);
        let g2 = const_offdiag(2, -1.25, 0.0);
        assert_abs_diff_eq!(ksd_ustat(&g2).unwrap().u_stat, -1.25, epsilon = 1e-15);
        let g1 = const_offdiag(1, 0.0, 0.0);
        assert!(ksd_ustat(&g1).is_err());
    }

    #[test]
    fn ksd_ustat_matches_double_loop() {
        let g = random_sym(6, 17);
        let got = ksd_ustat(&g).unwrap().u_stat;
        let mut want = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    want += g.get(i, j);
                }
            }
        }
        want /= 30.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-14);
    }

    #[test]
    fn ksd_ustat_permutation_invariant() {
        let g = random_sym(7, 18);
        let base = ksd_ustat(&g).unwrap().u_stat;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut rng);
        let mut pm = Array2::<f64>::zeros((7, 7));
        for i in 0..7 {
            for j in 0..7 {
                pm[[i, j]] = g.get(perm[i], perm[j]);
            }
        }
        let permuted = SteinGram::from_matrix(pm, true).unwrap();
        assert_abs_diff_eq!(
            ksd_ustat(&permuted).unwrap().u_stat,
            base,
            epsilon = 1e-13
        );
    }

    #[test]
    fn var_ustat_constant_offdiagonal_closed_form() {
        // Â = B̂ = c² so the first term vanishes and σ² = 2(Ĉ − c²)/(n−1).
        let (n, c) = (6, 0.4);
        let g = const_offdiag(n, c, 5.0);
        let est = var_ustat(&g).unwrap();
        assert_abs_diff_eq!(est.components.a_hat, c * c, epsilon = 1e-13);
        assert_abs_diff_eq!(est.components.b_hat, c * c, epsilon = 1e-13);
        let c_hat = est.components.c_hat.unwrap();
        assert_abs_diff_eq!(c_hat, c * c, epsilon = 1e-13);
        assert_abs_diff_eq!(
            est.sigma_sq,
            2.0 / (n as f64 - 1.0) * (c_hat - c * c),
            epsilon = 1e-13
        );
    }

    #[test]
    fn var_ustat_zero_gram() {
        let g = SteinGram::from_matrix(Array2::zeros((5, 5)), true).unwrap();
        assert_eq!(var_ustat(&g).unwrap().sigma_sq, 0.0);
    }

    #[test]
    fn var_ustat_needs_four() {
        let g = random_sym(3, 20);
        assert!(matches!(
            var_ustat(&g),
            Err(Error::TooFewSamples { required: 4, .. })
        ));
    }

    #[test]
    fn var_vstat_constant_gram_is_zero() {
        let g = const_offdiag(5, 0.7, 0.7);
        let est = var_vstat(&g).unwrap();
        assert_abs_diff_eq!(est.components.a_hat, 0.49, epsilon = 1e-13);
        assert_abs_diff_eq!(est.components.b_hat, 0.49, epsilon = 1e-13);
        assert_abs_diff_eq!(est.sigma_sq, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn var_vstat_requires_diagonal() {
        let g = SteinGram::from_matrix(Array2::zeros((4, 4)), false).unwrap();
        assert!(matches!(var_vstat(&g), Err(Error::DiagonalInvalid)));
    }

    #[test]
    fn var_vstat_outer_product_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 5;
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = v[i] * v[j];
            }
        }
        let g = SteinGram::from_matrix(m, true).unwrap();
        let est = var_vstat(&g).unwrap();
        // brute-force V-statistic sums
        let nf = n as f64;
        let mut a = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    a += g.get(i1, i2) * g.get(i1, i3);
                }
            }
        }
        a /= nf.powi(3);
        let mut b = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                b += g.get(i1, i2);
            }
        }
        let b = (b * b) / nf.powi(4);
        let want = 4.0 * (nf - 2.0) / (nf - 1.0) * (a - b);
        assert_abs_diff_eq!(est.sigma_sq, want, epsilon = 1e-12);
    }

    #[test]
    fn var_vstat_nonnegative_many_random() {
        for seed in 0..500u64 {
            let n = 2 + (seed % 9) as usize;
            let g = random_sym(n, seed);
            let est = var_vstat(&g).unwrap();
            assert!(est.sigma_sq >= 0.0, "negative vstat at seed {seed}");
        }
    }

    #[test]
    fn ksd_exact_standard_normal_two_points() {
        // model N(0, I): score −x; two points, hand formula with
        // GaussianHalf(λ=1): h(x,y) = xᵀy·k + (x−y)ᵀy·k − (x−y)ᵀx·k + (D−r²)k
        let data = crate::data::Dataset::continuous(
            Array2::from_shape_vec((2, 1), vec![0.5, -0.3]).unwrap(),
        )
        .unwrap();
        let kernel = KernelSpec::GaussianHalf {
            bandwidth: crate::kernels::Bandwidth::new(1.0).unwrap(),
        };
        let est = ksd_exact(|x| x.iter().map(|v| -v).collect(), &data, &kernel).unwrap();
        // hand formula: s(x)s(y)k + s(x)·k1(y,x) + k1(x,y)·s(y) + (1−r²)k
        let (x, y) = (0.5f64, -0.3f64);
        let r2 = (x - y) * (x - y);
        let k = (-0.5 * r2).exp();
        let k1_yx = -(y - x) * k;
        let k1_xy = -(x - y) * k;
        let want = (-x) * (-y) * k + (-x) * k1_yx + k1_xy * (-y) + (1.0 - r2) * k;
        assert_abs_diff_eq!(est.u_stat, want, epsilon = 1e-12);
    }
}
