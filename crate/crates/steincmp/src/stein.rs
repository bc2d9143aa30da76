//! Averaged conditional scores and the Stein gram matrix.
//!
//! For a latent variable model, the marginal score at x equals the
//! posterior expectation of the conditional score. Given m posterior
//! draws per observation, the averaged score
//!
//! ```text
//! s̄(x_i | z_i) = (1/m) Σ_j s(x_i | z_{i,j})
//! ```
//!
//! is computed once per observation and reused across every pair when
//! assembling the gram
//!
//! ```text
//! H[i,j] = s̄_iᵀ s̄_j k(x_i,x_j) + s̄_iᵀ k₁(x_j,x_i)
//!        + k₁(x_i,x_j)ᵀ s̄_j + tr[k₁₂(x_i,x_j)],
//! ```
//!
//! with the difference operators replacing derivatives on discrete
//! domains. The diagonal is always filled: the U-statistic skips it but
//! the V-statistic variance estimator needs the full matrix.

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::kernels::{bow_counts, KernelSpec};

/// Metadata describing how a latent batch was produced.
#[derive(Clone, Debug, Default)]
pub struct ChainMeta {
    pub sampler: &'static str,
    pub seed: u64,
    /// Metropolis-style acceptance rate over the recorded draws, where
    /// the sampler has one.
    pub acceptance_rate: Option<f64>,
}

/// m posterior draws of one observation's latent variable.
#[derive(Clone, Debug)]
pub struct LatentBatch<Z> {
    pub draws: Vec<Z>,
    pub burn_in: usize,
    pub meta: ChainMeta,
}

impl<Z> LatentBatch<Z> {
    pub fn m(&self) -> usize {
        self.draws.len()
    }
}

/// n×D matrix of averaged conditional scores, row i = s̄(x_i | z_i).
#[derive(Clone, Debug)]
pub struct ScoreMatrix {
    values: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("score entry ({i}, {j})")));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values
            .row(i)
            .to_slice()
            .expect("score matrix is standard layout")
    }
}

/// n×n symmetric matrix of Stein-kernel evaluations.
#[derive(Clone, Debug)]
pub struct SteinGram {
    h: Array2<f64>,
    diag_valid: bool,
}

impl SteinGram {
    /// Wrap a symmetric matrix as a gram. Intended for estimator inputs
    /// built elsewhere (oracles, synthetic tests); gram assembly from a
    /// dataset goes through [`stein_gram`].
    pub fn from_matrix(h: Array2<f64>, diag_valid: bool) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch(h.nrows(), h.ncols()));
        }
        Ok(Self { h, diag_valid })
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn diag_valid(&self) -> bool {
        self.diag_valid
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.h[[i, j]]
    }
}

/// Average conditional scores over each observation's latent batch.
///
/// `score_fn(x_i, z)` must return a length-D score vector; a non-finite
/// component aborts with the offending (observation, draw) index.
pub fn average_scores<Z, F>(
    score_fn: F,
    data: &Dataset,
    latents: &[LatentBatch<Z>],
) -> Result<ScoreMatrix>
where
    F: Fn(&[f64], &Z) -> Vec<f64>,
{
    let n = data.n();
    let dim = data.dim();
    if latents.len() != n {
        return Err(Error::DimensionMismatch(latents.len(), n));
    }
    let mut out = Array2::<f64>::zeros((n, dim));
    for (i, batch) in latents.iter().enumerate() {
        if batch.draws.is_empty() {
            return Err(Error::TooFewSamples { required: 1, got: 0 });
        }
        let x = data.row(i);
        let inv_m = 1.0 / batch.draws.len() as f64;
        let mut row = out.row_mut(i);
        for (draw_idx, z) in batch.draws.iter().enumerate() {
            let s = score_fn(x, z);
            if s.len() != dim {
                return Err(Error::DimensionMismatch(s.len(), dim));
            }
            for (d, v) in s.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteScore {
                        obs: i,
                        draw: draw_idx,
                    });
                }
                row[d] += v * inv_m;
            }
        }
    }
    ScoreMatrix::new(out)
}

/// Score matrix from a closed-form marginal score (the exact-score
/// pipeline used as a baseline when the marginal is tractable).
pub fn exact_scores<F>(score_fn: F, data: &Dataset) -> Result<ScoreMatrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = data.n();
    let dim = data.dim();
    let mut out = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        let s = score_fn(data.row(i));
        if s.len() != dim {
            return Err(Error::DimensionMismatch(s.len(), dim));
        }
        for (d, v) in s.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteScore { obs: i, draw: 0 });
            }
            out[[i, d]] = *v;
        }
    }
    ScoreMatrix::new(out)
}

/// Assemble the Stein gram matrix for one model.
///
/// Entries are computed once per unordered pair and mirrored, so the
/// result is exactly symmetric and bit-identical regardless of how many
/// workers participate.
pub fn stein_gram(scores: &ScoreMatrix, data: &Dataset, kernel: &KernelSpec) -> Result<SteinGram> {
    let n = data.n();
    if scores.n() != n {
        return Err(Error::DimensionMismatch(scores.n(), n));
    }
    if scores.dim() != data.dim() {
        return Err(Error::DimensionMismatch(scores.dim(), data.dim()));
    }
    match (kernel.domain(), data.domain()) {
        (Domain::Continuous, Domain::Continuous) => {}
        (Domain::Discrete { vocab_size: kv }, Domain::Discrete { vocab_size: dv }) => {
            if kv != dv {
                return Err(Error::DomainMismatch(format!(
                    "kernel vocab {kv} vs data vocab {dv}"
                )));
            }
        }
        _ => {
            return Err(Error::DomainMismatch(
                "kernel and data disagree on continuous vs discrete".into(),
            ))
        }
    }

    let discrete = kernel.is_discrete();
    let bows: Option<Vec<Vec<f64>>> = match kernel {
        KernelSpec::BowGaussian { vocab_size } => Some(
            (0..n)
                .map(|i| bow_counts(data.row(i), *vocab_size))
                .collect(),
        ),
        _ => None,
    };

    // upper triangle, one row of entries per task
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            let si = scores.row(i);
            (i..n)
                .map(|j| {
                    let xj = data.row(j);
                    let sj = scores.row(j);
                    let s_dot: f64 = si.iter().zip(sj).map(|(a, b)| a * b).sum();
                    let t = if discrete {
                        kernel.stein_terms_discrete(
                            xi,
                            xj,
                            si,
                            sj,
                            bows.as_ref().map(|b| b[i].as_slice()),
                            bows.as_ref().map(|b| b[j].as_slice()),
                        )
                    } else {
                        kernel.stein_terms_continuous(xi, xj, si, sj)
                    };
                    s_dot * t.k + t.si_dot_k1_ji + t.k1_ij_dot_sj + t.trace
                })
                .collect()
        })
        .collect();

    let mut h = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    SteinGram::from_matrix(h, true)
}

/// Entrywise difference of two grams over the same joint sample.
///
/// Both grams must be built from the same dataset ordering and the same
/// RKHS kernel; the matrices carry no record of either, so that contract
/// is the caller's to keep (the experiment engine uses one kernel per
/// run for exactly this reason).
pub fn diff_gram(gram_p: &SteinGram, gram_q: &SteinGram) -> Result<SteinGram> {
    if gram_p.n() != gram_q.n() {
        return Err(Error::DimensionMismatch(gram_p.n(), gram_q.n()));
    }
    let h = gram_p.matrix() - gram_q.matrix();
    SteinGram::from_matrix(h, gram_p.diag_valid() && gram_q.diag_valid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Bandwidth;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Dataset::continuous(Array2::from_shape_vec((n, dim), flat).unwrap()).unwrap()
    }

    #[test]
    fn average_of_single_draw_is_the_score() {
        let data = random_dataset(3, 2, 1);
        let latents: Vec<LatentBatch<f64>> = (0..3)
            .map(|i| LatentBatch {
                draws: vec![i as f64],
                burn_in: 0,
                meta: ChainMeta::default(),
            })
            .collect();
        let scores =
            average_scores(|x, z| vec![x[0] + z, x[1] - z], &data, &latents).unwrap();
        for i in 0..3 {
            let x = data.row(i);
            assert_eq!(scores.row(i), &[x[0] + i as f64, x[1] - i as f64]);
        }
    }

    #[test]
    fn average_matches_manual_mean_of_three() {
        let data = random_dataset(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let latents: Vec<LatentBatch<Vec<f64>>> = (0..4)
            .map(|_| LatentBatch {
                draws: (0..3)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                burn_in: 0,
                meta: ChainMeta::default(),
            })
            .collect();
        let f = |x: &[f64], z: &Vec<f64>| -> Vec<f64> {
            x.iter().zip(z).map(|(a, b)| a * b + b).collect()
        };
        let scores = average_scores(f, &data, &latents).unwrap();
        for i in 0..4 {
            let mut want = vec![0.0; 3];
            for z in &latents[i].draws {
                for (d, v) in f(data.row(i), z).iter().enumerate() {
                    want[d] += v / 3.0;
                }
            }
            for d in 0..3 {
                assert_abs_diff_eq!(scores.row(i)[d], want[d], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn non_finite_score_is_located() {
        let data = random_dataset(2, 1, 4);
        let latents: Vec<LatentBatch<usize>> = (0..2)
            .map(|_| LatentBatch {
                draws: vec![0, 1],
                burn_in: 0,
                meta: ChainMeta::default(),
            })
            .collect();
        let err = average_scores(
            |_x, z| vec![if *z == 1 { f64::NAN } else { 0.0 }],
            &data,
            &latents,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteScore { obs: 0, draw: 1 }));
    }

    #[test]
    fn zero_scores_leave_only_the_trace_term() {
        let data = random_dataset(4, 2, 5);
        let kernel = KernelSpec::GaussianSq {
            bandwidth: Bandwidth::new(1.5).unwrap(),
        };
        let scores = ScoreMatrix::new(Array2::zeros((4, 2))).unwrap();
        let gram = stein_gram(&scores, &data, &kernel).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = kernel.trace12(data.row(i), data.row(j)).unwrap();
                assert_abs_diff_eq!(gram.get(i, j), want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gram_matches_term_by_term_recomputation() {
        let data = random_dataset(3, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let flat: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scores =
            ScoreMatrix::new(Array2::from_shape_vec((3, 2), flat).unwrap()).unwrap();
        let kernel = KernelSpec::GaussianHalf {
            bandwidth: Bandwidth::new(0.9).unwrap(),
        };
        let gram = stein_gram(&scores, &data, &kernel).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (xi, xj) = (data.row(i), data.row(j));
                let (si, sj) = (scores.row(i), scores.row(j));
                let k = kernel.eval(xi, xj).unwrap();
                let g_ji = kernel.grad1(xj, xi).unwrap();
                let g_ij = kernel.grad1(xi, xj).unwrap();
                let tr = kernel.trace12(xi, xj).unwrap();
                let mut want = tr;
                for d in 0..2 {
                    want += si[d] * sj[d] * k + si[d] * g_ji[d] + g_ij[d] * sj[d];
                }
                assert_abs_diff_eq!(gram.get(i, j), want, epsilon = 1e-12);
                assert_eq!(gram.get(i, j), gram.get(j, i));
            }
        }
    }

    #[test]
    fn discrete_gram_matches_enumerated_formula() {
        // D=2, L=2: fully enumerated computation of the latent Stein
        // kernel on a tiny instance, to 1e−12.
        let data = Dataset::discrete(array![[0.0, 1.0], [1.0, 1.0], [0.0, 0.0]], 2).unwrap();
        let scores =
            ScoreMatrix::new(array![[0.5, -0.2], [1.0, 0.3], [-0.7, 0.1]]).unwrap();
        for kernel in [
            KernelSpec::ExpHamming { vocab_size: 2 },
            KernelSpec::BowGaussian { vocab_size: 2 },
        ] {
            let gram = stein_gram(&scores, &data, &kernel).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let (xi, xj) = (data.row(i), data.row(j));
                    let (si, sj) = (scores.row(i), scores.row(j));
                    let k = kernel.eval(xi, xj).unwrap();
                    let g_ji = kernel.diff_back_1(xj, xi).unwrap();
                    let g_ij = kernel.diff_back_1(xi, xj).unwrap();
                    let tr = kernel.trace12_discrete(xi, xj).unwrap();
                    let mut want = tr;
                    for d in 0..2 {
                        want += si[d] * sj[d] * k + si[d] * g_ji[d] + g_ij[d] * sj[d];
                    }
                    assert_abs_diff_eq!(gram.get(i, j), want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gram_domain_mismatch_errors() {
        let data = random_dataset(3, 2, 8);
        let scores = ScoreMatrix::new(Array2::zeros((3, 2))).unwrap();
        let kernel = KernelSpec::ExpHamming { vocab_size: 2 };
        assert!(matches!(
            stein_gram(&scores, &data, &kernel),
            Err(Error::DomainMismatch(_))
        ));
    }

    #[test]
    fn diff_gram_cases() {
        let a = SteinGram::from_matrix(array![[1.0, 2.0], [2.0, 3.0]], true).unwrap();
        let b = SteinGram::from_matrix(array![[0.5, 1.0], [1.0, 0.0]], true).unwrap();
        let d = diff_gram(&a, &b).unwrap();
        assert_eq!(d.get(0, 0), 0.5);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 1), 3.0);

        let zero = diff_gram(&a, &a).unwrap();
        assert!(zero.matrix().iter().all(|v| *v == 0.0));

        let z = SteinGram::from_matrix(Array2::zeros((2, 2)), true).unwrap();
        let same = diff_gram(&a, &z).unwrap();
        assert_eq!(same.matrix(), a.matrix());

        let small = SteinGram::from_matrix(Array2::zeros((3, 3)), true).unwrap();
        assert!(diff_gram(&a, &small).is_err());
    }

    #[test]
    fn diff_gram_random_subtraction_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sym = |seed_offset: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(100 + seed_offset);
            let mut m = Array2::<f64>::zeros((4, 4));
            for i in 0..4 {
                for j in i..4 {
                    let v = r.gen_range(-1.0..1.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            m
        };
        let a = sym(rng.gen_range(0..10));
        let b = sym(rng.gen_range(10..20));
        let ga = SteinGram::from_matrix(a.clone(), true).unwrap();
        let gb = SteinGram::from_matrix(b.clone(), true).unwrap();
        let d = diff_gram(&ga, &gb).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), a[[i, j]] - b[[i, j]]);
            }
        }
    }
}
