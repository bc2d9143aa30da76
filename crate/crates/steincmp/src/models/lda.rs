//! Latent Dirichlet allocation for single documents.
//!
//! A document is a length-D vector of words from {0,…,L−1}. Topic
//! proportions θ ~ Dir(a) are integrated out analytically when sampling
//! topic assignments, giving the collapsed conditional
//!
//! ```text
//! p(z^j = k | z^{−j}, x) ∝ (a_k + c_k^{−j}) · b_{k, x^j}
//! ```
//!
//! with c_k^{−j} counting topic k among the other words. The conditional
//! score of a document has per-word components
//! `b_{z^j, x̃^j} / b_{z^j, x^j} − 1` with `x̃^j = x^j + 1 mod L`.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Dirichlet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sample_categorical;
use crate::stein::{ChainMeta, LatentBatch};

#[derive(Clone, Debug)]
pub struct LdaModel {
    a: Vec<f64>,
    /// K×L topic-word probabilities, rows strictly positive, each
    /// summing to one.
    b: Array2<f64>,
}

impl LdaModel {
    pub fn new(a: Vec<f64>, b: Array2<f64>) -> Result<Self> {
        let (k, l) = b.dim();
        if a.len() != k {
            return Err(Error::DimensionMismatch(a.len(), k));
        }
        if k < 1 || l < 2 {
            return Err(Error::InvalidParameter(format!(
                "need K >= 1 topics and L >= 2 words, got K={k} L={l}"
            )));
        }
        if a.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "Dirichlet concentration entries must be positive".into(),
            ));
        }
        for row in b.rows() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "topic row sums to {sum}, expected 1"
                )));
            }
            if row.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidParameter(
                    "topic rows must be strictly positive".into(),
                ));
            }
        }
        Ok(Self { a, b })
    }

    pub fn k_topics(&self) -> usize {
        self.b.nrows()
    }

    pub fn vocab_size(&self) -> u32 {
        self.b.ncols() as u32
    }

    pub fn concentration(&self) -> &[f64] {
        &self.a
    }

    pub fn topics(&self) -> &Array2<f64> {
        &self.b
    }

    /// Copy with δ added to every concentration component.
    pub fn perturbed(&self, delta: f64) -> Result<Self> {
        let a = self.a.iter().map(|v| v + delta).collect();
        Self::new(a, self.b.clone())
    }

    /// K topic rows drawn from Dir(1) over an L-word vocabulary.
    pub fn random_topics(k: usize, l: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = Dirichlet::new(&vec![1.0f64; l]).expect("valid symmetric Dirichlet");
        let mut b = Array2::<f64>::zeros((k, l));
        for mut row in b.rows_mut() {
            let probs: Vec<f64> = dir.sample(&mut rng);
            for (slot, p) in row.iter_mut().zip(probs) {
                // keep rows strictly positive and exactly normalized
                *slot = p.max(1e-300);
            }
            let sum: f64 = row.iter().sum();
            row.mapv_inplace(|v| v / sum);
        }
        b
    }

    fn sample_theta<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        if self.a.len() == 1 {
            return vec![1.0];
        }
        Dirichlet::new(&self.a)
            .expect("validated concentration")
            .sample(rng)
    }

    /// n documents of d_words words each.
    pub fn sample(&self, n: usize, d_words: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, d_words));
        for i in 0..n {
            let theta = self.sample_theta(&mut rng);
            for j in 0..d_words {
                let topic = sample_categorical(&mut rng, &theta);
                let row = self.b.row(topic);
                let word = sample_categorical(&mut rng, row.to_slice().expect("layout"));
                values[[i, j]] = word as f64;
            }
        }
        Dataset::discrete(values, self.vocab_size()).expect("valid words")
    }

    /// Conditional score of a document given its topic assignments.
    pub fn cond_score(&self, x: &[f64], z: &[u32]) -> Vec<f64> {
        let l = self.b.ncols();
        x.iter()
            .zip(z)
            .map(|(xj, zj)| {
                let w = *xj as usize;
                let w_next = (w + 1) % l;
                let k = *zj as usize;
                self.b[[k, w_next]] / self.b[[k, w]] - 1.0
            })
            .collect()
    }

    /// Random-scan collapsed Gibbs sampler for p(z | x). One sweep is
    /// D single-site updates at uniformly random positions; t counts
    /// burn-in sweeps and one assignment vector is recorded per sweep
    /// afterwards.
    pub fn collapsed_gibbs(
        &self,
        x: &[f64],
        m: usize,
        t: usize,
        seed: u64,
    ) -> Result<LatentBatch<Vec<u32>>> {
        let k = self.k_topics();
        let d = x.len();
        let words: Vec<usize> = x.iter().map(|w| *w as usize).collect();
        if words.iter().any(|w| *w >= self.b.ncols()) {
            return Err(Error::OutOfRangeSymbol {
                value: *x.iter().find(|w| **w >= self.b.ncols() as f64).unwrap(),
                coord: 0,
                vocab: self.vocab_size(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // init: z_j ∝ a_k b_{k, x_j}
        let mut z: Vec<u32> = Vec::with_capacity(d);
        let mut counts = vec![0usize; k];
        let mut weights = vec![0.0; k];
        for &w in &words {
            for kk in 0..k {
                weights[kk] = self.a[kk] * self.b[[kk, w]];
            }
            let topic = sample_categorical(&mut rng, &weights);
            counts[topic] += 1;
            z.push(topic as u32);
        }

        let mut draws = Vec::with_capacity(m);
        for sweep in 0..(t + m) {
            for _ in 0..d {
                let j = rng.gen_range(0..d);
                let old = z[j] as usize;
                counts[old] -= 1;
                let w = words[j];
                for kk in 0..k {
                    weights[kk] = (self.a[kk] + counts[kk] as f64) * self.b[[kk, w]];
                }
                let new = sample_categorical(&mut rng, &weights);
                counts[new] += 1;
                z[j] = new as u32;
            }
            if sweep >= t {
                draws.push(z.clone());
            }
        }
        Ok(LatentBatch {
            draws,
            burn_in: t,
            meta: ChainMeta {
                sampler: "collapsed-gibbs",
                seed,
                acceptance_rate: None,
            },
        })
    }
}
