//! The three latent-variable model families used in the simulation
//! studies, with data generation, conditional scores, exact marginals
//! where tractable, and posterior samplers.

mod gdpm;
mod lda;
mod ppca;

pub use gdpm::GdpmModel;
pub use lda::LdaModel;
pub use ppca::{MalaParams, PpcaModel};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::stein::ScoreMatrix;

/// Draw an index proportional to (unnormalized, nonnegative) weights.
pub(crate) fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite());
    let mut u = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Draw an index proportional to exp(log-weights), stabilized by the
/// running maximum.
pub(crate) fn sample_categorical_log<R: Rng>(rng: &mut R, log_weights: &[f64]) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    sample_categorical(rng, &weights)
}

/// Serializable model description (the JSON schema the CLI loads).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Ppca {
        /// D×D_z weight matrix, row-major.
        weights: Vec<Vec<f64>>,
        psi: f64,
    },
    Lda {
        /// Dirichlet concentration, length K.
        a: Vec<f64>,
        /// K×L row-stochastic topic-word matrix.
        b: Vec<Vec<f64>>,
    },
    Gdpm {
        mu: Vec<f64>,
        phi_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        training_data: Option<Vec<Vec<f64>>>,
    },
}

/// A constructed model of any family.
#[derive(Clone, Debug)]
pub enum Model {
    Ppca(PpcaModel),
    Lda(LdaModel),
    Gdpm(GdpmModel),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Ppca { weights, psi } => {
                let d = weights.len();
                let d_z = weights.first().map_or(0, |r| r.len());
                if weights.iter().any(|r| r.len() != d_z) {
                    return Err(Error::InvalidParameter("ragged weight matrix".into()));
                }
                let flat: Vec<f64> = weights.iter().flatten().copied().collect();
                let a = ndarray::Array2::from_shape_vec((d, d_z), flat)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(Model::Ppca(PpcaModel::new(a, *psi)?))
            }
            ModelSpec::Lda { a, b } => {
                let k = b.len();
                let l = b.first().map_or(0, |r| r.len());
                if b.iter().any(|r| r.len() != l) {
                    return Err(Error::InvalidParameter("ragged topic matrix".into()));
                }
                let flat: Vec<f64> = b.iter().flatten().copied().collect();
                let bm = ndarray::Array2::from_shape_vec((k, l), flat)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(Model::Lda(LdaModel::new(a.clone(), bm)?))
            }
            ModelSpec::Gdpm {
                mu,
                phi_sq,
                training_data,
            } => {
                let mut model = GdpmModel::new(mu.clone(), *phi_sq)?;
                if let Some(rows) = training_data {
                    let n = rows.len();
                    let d = mu.len();
                    if rows.iter().any(|r| r.len() != d) {
                        return Err(Error::InvalidParameter(
                            "training rows must match mu dimension".into(),
                        ));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    let tr = ndarray::Array2::from_shape_vec((n, d), flat)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    model = model.with_training(tr)?;
                }
                Ok(Model::Gdpm(model))
            }
        }
    }
}

impl Model {
    pub fn domain(&self) -> Domain {
        match self {
            Model::Ppca(_) | Model::Gdpm(_) => Domain::Continuous,
            Model::Lda(m) => Domain::Discrete {
                vocab_size: m.vocab_size(),
            },
        }
    }

    /// Run this model's posterior sampler on every observation and
    /// average the conditional scores: the MCMC score pipeline behind
    /// both the CLI and the experiment engine. Chains for different
    /// observations are independent and seeded by observation index, so
    /// the result does not depend on scheduling.
    pub fn averaged_score_matrix(
        &self,
        data: &Dataset,
        m: usize,
        t: usize,
        seed: u64,
    ) -> Result<ScoreMatrix> {
        use crate::util::derive_seed;
        use rayon::prelude::*;
        let n = data.n();
        match self {
            Model::Ppca(model) => {
                let batches = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        model.posterior_mala(
                            data.row(i),
                            m,
                            t,
                            MalaParams::default(),
                            derive_seed(seed, &[i as u64]),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                crate::stein::average_scores(|x, z| model.cond_score(x, z), data, &batches)
            }
            Model::Lda(model) => {
                let batches = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        model.collapsed_gibbs(data.row(i), m, t, derive_seed(seed, &[i as u64]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                crate::stein::average_scores(|x, z| model.cond_score(x, z), data, &batches)
            }
            Model::Gdpm(model) => {
                let batches = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        model.posterior_sampler(data.row(i), m, t, derive_seed(seed, &[i as u64]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                crate::stein::average_scores(|x, z| model.cond_score(x, z), data, &batches)
            }
        }
    }

    /// Exact marginal score matrix where the family has one.
    pub fn exact_score_matrix(&self, data: &Dataset) -> Result<ScoreMatrix> {
        match self {
            Model::Ppca(model) => crate::stein::exact_scores(|x| model.marginal_score(x), data),
            _ => Err(Error::InvalidParameter(
                "exact marginal score is only available for PPCA".into(),
            )),
        }
    }
}
