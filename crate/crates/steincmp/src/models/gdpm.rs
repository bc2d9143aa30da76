//! Gaussian Dirichlet-process mixture.
//!
//! ```text
//! x_i | z_i ~ N(z_i, φ²I),  z_i ~ F,  F ~ DP(a),  a = N(μ, I)
//! ```
//!
//! Without conditioning the marginal of one observation is N(μ, (φ²+1)I).
//! Conditioned on held-out training data D, the predictive score at a
//! test point x is the posterior expectation of −(x−z)/φ² under
//!
//! ```text
//! ψ(x|z,φ) / p(x|D) · F̄_{φ,D}(dz),
//! ```
//!
//! where F̄ is the posterior mean measure of F: the (1/(1+n_tr))-weighted
//! base measure plus the empirical distribution of the training latents.
//! Sampling alternates an outer random-scan Gibbs pass over the training
//! latents (conjugate: the full conditional mixes the base posterior and
//! the other latents' atoms) with an independence Metropolis step for z
//! that proposes from F̄ and accepts with the likelihood ratio
//! ψ(x|z')/ψ(x|z).

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sample_categorical_log;
use crate::stein::{ChainMeta, LatentBatch};

#[derive(Clone, Debug)]
pub struct GdpmModel {
    mu: Vec<f64>,
    phi_sq: f64,
    training: Option<Array2<f64>>,
}

impl GdpmModel {
    pub fn new(mu: Vec<f64>, phi_sq: f64) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("invalid prior mean".into()));
        }
        if !(phi_sq > 0.0 && phi_sq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "phi_sq must be positive, got {phi_sq}"
            )));
        }
        Ok(Self {
            mu,
            phi_sq,
            training: None,
        })
    }

    /// Prior mean δ·1/√D, the perturbation used in the mixture study.
    pub fn with_scaled_ones_mean(d: usize, delta: f64, phi_sq: f64) -> Result<Self> {
        let val = delta / (d as f64).sqrt();
        Self::new(vec![val; d], phi_sq)
    }

    pub fn with_training(mut self, training: Array2<f64>) -> Result<Self> {
        if training.ncols() != self.mu.len() {
            return Err(Error::DimensionMismatch(training.ncols(), self.mu.len()));
        }
        if training.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training entry".into()));
        }
        self.training = Some(training);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn phi_sq(&self) -> f64 {
        self.phi_sq
    }

    pub fn training(&self) -> Option<&Array2<f64>> {
        self.training.as_ref()
    }

    /// Conditional score −(x − z)/φ².
    pub fn cond_score(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(z)
            .map(|(xi, zi)| -(xi - zi) / self.phi_sq)
            .collect()
    }

    /// n i.i.d. draws from the unconditioned marginal N(μ, (φ²+1)I).
    pub fn marginal_sample(&self, n: usize, seed: u64) -> Dataset {
        let d = self.dim();
        let sd = (self.phi_sq + 1.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                let eps: f64 = rng.sample(StandardNormal);
                values[[i, j]] = self.mu[j] + sd * eps;
            }
        }
        Dataset::continuous(values).expect("finite draws")
    }

    /// log N(y; center, s²I) including the normalizing constant (the
    /// base-vs-atom Gibbs weights compare densities with different
    /// variances, so constants matter).
    fn log_normal(y: &[f64], center: &[f64], s_sq: f64) -> f64 {
        let d = y.len() as f64;
        let qsum: f64 = y
            .iter()
            .zip(center)
            .map(|(a, b)| {
                let r = a - b;
                r * r
            })
            .sum();
        -0.5 * qsum / s_sq - 0.5 * d * (2.0 * std::f64::consts::PI * s_sq).ln()
    }

    /// Draw from the conjugate posterior of one latent given one
    /// observation under the base measure prior:
    /// N((μφ² + y)/(φ²+1), φ²/(φ²+1)·I).
    fn base_posterior_draw<R: Rng>(&self, y: &[f64], rng: &mut R) -> Vec<f64> {
        let denom = self.phi_sq + 1.0;
        let sd = (self.phi_sq / denom).sqrt();
        y.iter()
            .zip(&self.mu)
            .map(|(yi, mi)| (mi * self.phi_sq + yi) / denom + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// m draws of the test-point latent targeting the predictive
    /// posterior. Requires training data (an empty training set is
    /// valid and reduces the target to the conjugate base posterior).
    pub fn posterior_sampler(
        &self,
        x: &[f64],
        m: usize,
        t: usize,
        seed: u64,
    ) -> Result<LatentBatch<Vec<f64>>> {
        let training = self.training.as_ref().ok_or(Error::MissingTrainingData)?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(x.len(), self.dim()));
        }
        let n_tr = training.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let marginal_var = self.phi_sq + 1.0;

        // training latents initialized at their single-point conjugate
        // posteriors; test latent likewise (the base-component posterior)
        let mut latents: Vec<Vec<f64>> = (0..n_tr)
            .map(|i| self.base_posterior_draw(training.row(i).to_slice().expect("layout"), &mut rng))
            .collect();
        let mut z = self.base_posterior_draw(x, &mut rng);
        let mut log_lik_z = Self::log_normal(x, &z, self.phi_sq);

        let mut draws = Vec::with_capacity(m);
        let mut accepted = 0usize;
        let mut log_weights = vec![0.0; n_tr.max(1)];
        for iter in 0..(t + m) {
            // outer random-scan Gibbs over training latents
            for _ in 0..n_tr {
                let i = rng.gen_range(0..n_tr);
                let xi = training.row(i);
                let xi = xi.to_slice().expect("layout");
                log_weights.clear();
                // weight of drawing a fresh latent from the base posterior
                log_weights.push(Self::log_normal(xi, &self.mu, marginal_var));
                for (j, other) in latents.iter().enumerate() {
                    if j != i {
                        log_weights.push(Self::log_normal(xi, other, self.phi_sq));
                    }
                }
                let pick = sample_categorical_log(&mut rng, &log_weights);
                if pick == 0 {
                    latents[i] = self.base_posterior_draw(xi, &mut rng);
                } else {
                    // map back to the latent index skipped above
                    let j = if pick - 1 < i { pick - 1 } else { pick };
                    latents[i] = latents[j].clone();
                }
            }

            // independence Metropolis for the test latent: propose from
            // F̄ = (base + Σ atoms)/(1 + n_tr), accept with ψ ratio
            let proposal: Vec<f64> = if rng.gen_range(0.0..(1.0 + n_tr as f64)) < 1.0 {
                (0..self.dim())
                    .map(|j| self.mu[j] + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            } else {
                latents[rng.gen_range(0..n_tr)].clone()
            };
            let log_lik_prop = Self::log_normal(x, &proposal, self.phi_sq);
            if rng.gen::<f64>().ln() < log_lik_prop - log_lik_z {
                z = proposal;
                log_lik_z = log_lik_prop;
                if iter >= t {
                    accepted += 1;
                }
            }
            if iter >= t {
                draws.push(z.clone());
            }
        }
        Ok(LatentBatch {
            draws,
            burn_in: t,
            meta: ChainMeta {
                sampler: "gibbs-metropolis",
                seed,
                acceptance_rate: Some(accepted as f64 / m.max(1) as f64),
            },
        })
    }
}
